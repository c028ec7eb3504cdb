"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line (also collected in the terminal
summary) and then asserts.
"""
import time

import numpy as np
import pytest
from scipy import ndimage

from conftest import random_gradients, report
from mapdeblur.analysis import bundled_dataset, kernel_length_sweep, lambda_sweep_dataset, ratio_histogram, sweep_point
from mapdeblur.apps import (DefocusParams, estimate_defocus_sparse, matting_laplacian, propagate_defocus,
                            rank_light_streak_patches, select_kernel_size)
from mapdeblur.conv import BoundaryPolicy, convolve, correlate, interior_inner, interior_mask
from mapdeblur.core import EnergyBreakdown, EnergyParams, delta_kernel, gradients, periodic_gradients, phi, poisson_reconstruct
from mapdeblur.deconv import blind_deconv_multiscale, blind_deconv_single_scale
from mapdeblur.energy import energy, energy_noblur_exact
from mapdeblur.kernel import kernel_similarity
from mapdeblur.synthetic import blurred_pair, box_kernel_1d, motion_kernel, step_image, two_region_defocus

P = EnergyParams()
LAMBDAS = np.logspace(-5, -1, 9)
TAPER7 = np.array([[1, 2, 3, 4, 3, 2, 1]]) / 16.0
TRACES = []


def brute_force_total(b, params, n=1_000_000, radius=1.5, chunk=64):
    """Sum over pixels of min_l (l - b)^2 + lambda phi(l) on a dense grid."""
    grid = np.linspace(-radius, radius, n)
    c = grid ** 2 + params.lambda_l * phi(grid, params)
    vals = np.concatenate([b.gx.ravel(), b.gy.ravel()])
    total = 0.0
    for i in range(0, vals.size, chunk):
        v = vals[i:i + chunk]
        total += float(np.sum(np.min(c[None, :] - 2.0 * v[:, None] * grid[None, :], axis=1) + v ** 2))
    return total


def test_criterion_01_oracle_bound():
    t0 = time.time()
    rng = np.random.default_rng(101)
    worst_gap, worst_oracle = np.inf, 0.0
    for _ in range(50):
        b = random_gradients(rng, (6, 6))
        opt = energy_noblur_exact(b, P)
        irls = energy(delta_kernel(1), b, P)
        worst_gap = min(worst_gap, irls.total - opt.total)
        ref = brute_force_total(b, P) + P.lambda_k
        worst_oracle = max(worst_oracle, abs(opt.total - ref))
    dt = time.time() - t0
    ok = worst_gap >= -1e-9 and worst_oracle <= 1e-5 and dt < 120
    report(1, ok, f"min f_irls-f_opt={worst_gap:.3g} (>= -1e-9), max |f_opt-scan|={worst_oracle:.2g} (<= 1e-5), {dt:.0f}s")
    assert ok


@pytest.fixture(scope="module")
def bundled():
    return bundled_dataset()


@pytest.fixture(scope="module")
def lambda_records(bundled):
    return lambda_sweep_dataset(bundled, LAMBDAS, alpha=0.1)


def test_criterion_02_sharp_vs_noblur(bundled):
    t0 = time.time()
    recs = [sweep_point(b, k, P, name) for name, b, k in bundled]
    both = sum(r.ratio < 1 and r.prior_ratio < 1 for r in recs)
    dt = time.time() - t0
    ok = both >= 8 and dt < 300
    report(2, ok, f"{both}/10 with energy and prior ratio < 1 "
                  f"(max ratio {max(r.ratio for r in recs):.3f}), {dt:.0f}s")
    assert ok


def test_criterion_03_lambda_regime(lambda_records):
    good = 0
    for name in sorted({r.image_id for r in lambda_records}):
        rs = sorted((r for r in lambda_records if r.image_id == name), key=lambda r: r.lambda_l)
        ratios = [r.ratio for r in rs]
        i = int(np.argmin(ratios))
        good += ratios[0] >= 0.95 and 0 < i < len(ratios) - 1
    ok = good >= 8
    report(3, ok, f"{good}/10 images with ratio >= 0.95 at 1e-5 and interior minimum")
    assert ok


def test_criterion_04_histogram_argmax(lambda_records):
    h = ratio_histogram(lambda_records)
    i = h.argmax_index
    ok = 0 < i < len(h.lambdas) - 1
    curve = " ".join(f"{p:.0f}" for p in h.percent)
    report(4, ok, f"argmax lambda_l={h.argmax:.3g} (index {i} of {len(h.lambdas)}), success % [{curve}]")
    assert ok


def test_criterion_05_kernel_length():
    t0 = time.time()
    lengths = [1, 3, 5, 7, 9, 11, 13, 15]
    _, b = blurred_pair(step_image(64, seed=0), box_kernel_1d(7))
    sw = kernel_length_sweep(b, lengths, P, mode="provided", kernels={n: np.ones(n) for n in lengths})
    e7 = sw.energy_of(7).total
    dt = time.time() - t0
    ok = sw.argmin == 7 and e7 < sw.baseline.total and dt < 180
    report(5, ok, f"argmin length {sw.argmin}, f(7)={e7:.4f} < f_opt(delta)={sw.baseline.total:.4f}, {dt:.0f}s")
    assert ok


@pytest.fixture(scope="module")
def naive_runs():
    t0 = time.time()
    _, b1 = blurred_pair(step_image(64, seed=1), TAPER7)
    k1, _, tr1 = blind_deconv_single_scale(b1, (1, 7), P, iters=15)
    bp = BoundaryPolicy(3)
    e1 = energy(k1, b1, P, bp).total
    o1 = energy_noblur_exact(b1, P, bp).total
    s1 = kernel_similarity(k1, TAPER7)

    k_true = motion_kernel(15, seed=0)
    _, b2 = blurred_pair(step_image(128, seed=0, n_shapes=25), k_true)
    k2, _, tr2 = blind_deconv_multiscale(b2, 15, P, iters_per_level=10)
    s2 = kernel_similarity(k2, k_true)
    TRACES.extend([tr1, tr2])
    return dict(s1=s1, e1=e1, o1=o1, s2=s2, dt=time.time() - t0)


def test_criterion_06_naive_convergence(naive_runs):
    r = naive_runs
    ok = r["s1"] >= 0.85 and r["e1"] < r["o1"] and r["s2"] >= 0.80 and r["dt"] < 600
    report(6, ok, f"single-scale sim {r['s1']:.3f}, f={r['e1']:.4f} vs f_opt(delta)={r['o1']:.4f}; "
                  f"multi-scale 15x15 sim {r['s2']:.3f}; {r['dt']:.0f}s")
    assert ok


def test_criterion_07_kstep_monotone(naive_runs, size_selection):
    worst, n = -np.inf, 0
    for tr in TRACES:
        for rec in tr:
            worst = max(worst, (rec.after_kstep.total - rec.energy.total) / rec.energy.total)
            n += 1
    ok = n > 0 and worst <= 1e-6
    report(7, ok, f"{n} k-steps across {len(TRACES)} traces, max relative increase {worst:.3g}")
    assert ok


@pytest.fixture(scope="module")
def size_selection():
    picks = []
    for t in range(5):
        _, b = blurred_pair(step_image(96, seed=300 + t, n_shapes=20), motion_kernel(9, seed=400 + t, fill=1.0))
        res = select_kernel_size(b, [5, 11, 21], P, iters_per_level=6)
        picks.append(res.best)
        TRACES.extend(res.traces.values())
    return picks


def test_criterion_08_kernel_size(size_selection):
    hits = sum(p == 11 for p in size_selection)
    ok = hits >= 4
    report(8, ok, f"selected sizes {size_selection}, {hits}/5 chose 11")
    assert ok


def streak_case(seed):
    rng = np.random.default_rng(seed)
    k = motion_kernel(11, seed=500 + seed, fill=0.9)
    img = step_image(64, seed=600 + seed)
    _, b = blurred_pair(img, k)

    def render(kern):
        # light streak over a dark background with sensor noise
        return 0.05 + 0.9 * kern / kern.max() + 0.01 * rng.random(kern.shape)

    wrong = [
        np.rot90(k),
        ndimage.gaussian_filter(k, 1.2),
        motion_kernel(11, seed=900 + seed, fill=0.9),
        np.where(np.arange(11)[None, :] < 6, k, 0.0),
    ]
    patches = {"true": render(k)}
    patches.update({f"wrong{i}": render(w) for i, w in enumerate(wrong)})
    return b, patches


def test_criterion_09_streak_ranking():
    firsts = []
    for seed in range(5):
        b, patches = streak_case(seed)
        ranked = rank_light_streak_patches(b, patches, P)
        firsts.append(ranked[0].patch_id)
    hits = sum(f == "true" for f in firsts)
    ok = hits == 5
    report(9, ok, f"true kernel ranked first in {hits}/5 cases {firsts}")
    assert ok


def dense_matting_oracle(img, eps=1e-5):
    h, w = img.shape
    lap = np.zeros((h * w, h * w))
    for cy in range(1, h - 1):
        for cx in range(1, w - 1):
            pix = [(y, x) for y in range(cy - 1, cy + 2) for x in range(cx - 1, cx + 2)]
            vals = np.array([img[p] for p in pix])
            mu, var = vals.mean(), vals.var()
            for a, pa in enumerate(pix):
                for c, pc in enumerate(pix):
                    lap[pa[0] * w + pa[1], pc[0] * w + pc[1]] += \
                        (a == c) - (1 + (vals[a] - mu) * (vals[c] - mu) / (var + eps / 9)) / 9
    return lap


def test_criterion_10_defocus():
    img, truth = two_region_defocus((128, 256), radii=(0.0, 4.0), seed=0)
    # tighter estimation window and stronger seed fidelity than the defaults;
    # the default propagation cannot reach 85% here even from exact seeds
    dp = DefocusParams(edge_stride=4, window=31, ml_epsilon=1e-4, prop_lambda=1.0)
    sm = estimate_defocus_sparse(img, dp, P)
    right = sm.cols >= img.shape[1] // 2
    modes = []
    for side in (~right, right):
        vals, counts = np.unique(sm.radius[side], return_counts=True)
        modes.append(float(vals[np.argmax(counts)]) if len(vals) else np.nan)
    dense = propagate_defocus(sm, img, dp)
    frac = float(np.mean(np.abs(dense - truth) <= 1.0))

    toy = np.random.default_rng(5).random((6, 6))
    lap = matting_laplacian(toy, 3, 1e-5).toarray()
    err = float(np.max(np.abs(lap - dense_matting_oracle(toy))))
    min_eig = float(np.min(np.linalg.eigvalsh(lap)))
    null = float(np.max(np.abs(lap @ np.ones(36))))

    ok = (modes == [0.0, 4.0] and frac >= 0.85 and err <= 1e-8 and min_eig >= -1e-10 and null <= 1e-10)
    report(10, ok, f"modal radii {modes} (want [0, 4]), dense within +-1: {100 * frac:.1f}% (>= 85%), "
                   f"matting |L-oracle|={err:.1g}, min eig {min_eig:.1g}, |L1|={null:.1g}")
    assert ok


def test_criterion_11_numerical_hygiene():
    rng = np.random.default_rng(11)
    adj = 0.0
    for _ in range(20):
        x, y = rng.standard_normal((20, 23)), rng.standard_normal((20, 23))
        k = rng.standard_normal((int(rng.integers(0, 4)) * 2 + 1, int(rng.integers(0, 4)) * 2 + 1))
        m = max(k.shape) // 2
        lhs = interior_inner(convolve(x, k), y, m)
        rhs = float(np.sum(x * correlate(interior_mask(x.shape, m) * y, k)))
        adj = max(adj, abs(lhs - rhs) / max(abs(lhs), 1e-300))

    rec = 0.0
    for _ in range(20):
        b = random_gradients(rng, (12, 12))
        kk = rng.random((3, 3))
        e = energy(kk / kk.sum(), b, P)
        expect = e.data + P.lambda_l * e.sparsity + P.lambda_k * e.kernel_prior
        rec = max(rec, abs(e.total - expect) / expect)

    img = rng.random((32, 40))
    r = poisson_reconstruct(periodic_gradients(img))
    rms = float(np.sqrt(np.mean(((r - r.mean()) - (img - img.mean())) ** 2)))

    _, b = blurred_pair(step_image(48, seed=2), TAPER7)
    runs = [blind_deconv_single_scale(b, (1, 7), P, iters=3) for _ in range(2)]
    same = (np.array_equal(runs[0][0], runs[1][0]) and np.array_equal(runs[0][1].gx, runs[1][1].gx)
            and list(runs[0][2].rows()) == list(runs[1][2].rows()))
    recs = [sweep_point(b, TAPER7, P) for _ in range(2)]
    same = same and recs[0] == recs[1]

    ok = adj <= 1e-9 and rec <= 1e-9 and rms < 1e-6 and same
    report(11, ok, f"adjoint rel err {adj:.1g}, recomposition {rec:.1g}, Poisson RMS {rms:.1g}, "
                   f"bit-identical reruns {same}")
    assert ok
