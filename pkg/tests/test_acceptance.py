"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines as they complete.  Criterion 2's pointwise error bound is known to be
unattainable for the pinned update scheme; see notes in the repository
README for the measured value and analysis.
"""

import json
import re
import time
from dataclasses import replace

import numpy as np
import pytest

from dualfront.cli import main
from dualfront.eikonal import build_stencil, fmm_prescribed, voronoi_from_fronts
from dualfront.engine import DualFrontConfig, evolve_step, init_labels, run
from dualfront.evaluate import jaccard, make_synthetic, _eroded_interior
from dualfront.grid import (ImageGrid, LabelMap, farthest_point_sampling,
                            gaussian_convolve)
from dualfront.metrics import (MetricField, MetricSample, Tensor2, eval_metric,
                               uniform_metric_field)
from dualfront.regionmodels import (bhattacharyya_coefficient, fit_gmm)

from _oracles import brute_force_distance, dijkstra_stencil


def report(num, ok, detail):
    print(f"\n[acceptance] criterion {num}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {num}: {detail}"


def test_c01_metric_axioms():
    t0 = time.perf_counter()
    rng = np.random.default_rng(100)
    n = 10_000
    a = rng.normal(size=(n, 2, 2))
    m = a @ a.transpose(0, 2, 1) + 0.05 * np.eye(2)
    omega = rng.uniform(-10, 10, (n, 2))
    psi = rng.uniform(0.1, 10, n)
    u = rng.normal(size=(n, 2)) * 5
    v = rng.normal(size=(n, 2)) * 5
    lam = rng.uniform(0.01, 100, n)

    def feval(w):
        quad = np.einsum("ni,nij,nj->n", w, m, w)
        neg = np.maximum(-(w * omega).sum(axis=1), 0.0)
        return psi * np.sqrt(quad + neg * neg)

    fu, fv = feval(u), feval(v)
    hom = np.abs(feval(lam[:, None] * u) - lam * fu) / np.maximum(lam * fu, 1e-300)
    mid_ok = (feval((u + v) / 2) <= (fu + fv) / 2 + 1e-9 * (1 + fu + fv)).all()
    tri_ok = (feval(u + v) <= fu + fv + 1e-9 * (1 + fu + fv)).all()
    # the same axioms through the scalar production evaluator
    scalar_ok = True
    for k in range(0, n, 5):
        s = MetricSample(Tensor2(m[k, 0, 0], m[k, 0, 1], m[k, 1, 1]),
                         tuple(omega[k]), float(psi[k]))
        su, sv = eval_metric(s, u[k]), eval_metric(s, v[k])
        scale = 1 + su + sv
        scalar_ok &= abs(eval_metric(s, lam[k] * u[k]) - lam[k] * su) <= 1e-12 * lam[k] * su
        scalar_ok &= eval_metric(s, (u[k] + v[k]) / 2) <= (su + sv) / 2 + 1e-9 * scale
        scalar_ok &= eval_metric(s, u[k] + v[k]) <= su + sv + 1e-9 * scale
    elapsed = time.perf_counter() - t0
    ok = hom.max() <= 1e-12 and mid_ok and tri_ok and bool(scalar_ok) and elapsed < 5.0
    report(1, ok, f"homogeneity {hom.max():.2e}, convexity {mid_ok}, "
                  f"triangle {tri_ok}, scalar evaluator {bool(scalar_ok)}, "
                  f"{elapsed:.2f}s")


def test_c02_isotropic_accuracy():
    n = 201
    metric = uniform_metric_field((n, n))
    stencil = build_stencil(3.0)
    assert stencil.radius == 2
    src = np.array([[n // 2, n // 2]], dtype=np.int64)
    t0 = time.perf_counter()
    dist = fmm_prescribed(src, metric, stencil=stencil, causality_rtol=0.0)
    elapsed = time.perf_counter() - t0
    exact = brute_force_distance(src, (n, n))
    sel = exact > 0
    max_rel = (np.abs(dist - exact)[sel] / exact[sel]).max()
    c = n // 2
    axis_exact = all(
        dist[c + s * k, c] == float(k) and dist[c, c + s * k] == float(k)
        for k in range(1, c + 1) for s in (1, -1))
    ok = max_rel <= 0.01 and axis_exact and elapsed < 2.0
    report(2, ok, f"max rel err {max_rel * 100:.4f}% (bound 1%), "
                  f"axis exact {axis_exact}, {elapsed:.2f}s; the overshoot is "
                  f"scheme-forced at 24 near-source pixels, see README")


def test_c03_asymmetry_direction():
    t0 = time.perf_counter()
    n = 101
    metric = uniform_metric_field((n, n), omega=(0.0, 3.0))
    stencil = build_stencil(metric.anisotropy_bound())
    src = np.array([[n // 2, n // 2]], dtype=np.int64)
    dist = fmm_prescribed(src, metric, stencil=stencil)
    oracle = dijkstra_stencil(metric, src, stencil.offsets)
    c = n // 2
    direction_ok = True
    axis_match = 0.0
    for k in range(1, 51):
        direction_ok &= dist[c, c + k] < dist[c, c - k]
        direction_ok &= oracle[c, c + k] < oracle[c, c - k]
        axis_match = max(axis_match,
                         abs(dist[c, c + k] - oracle[c, c + k]),
                         abs(dist[c, c - k] - oracle[c, c - k]))
    elapsed = time.perf_counter() - t0
    ok = direction_ok and axis_match <= 1e-6 and elapsed < 5.0
    report(3, ok, f"direction ordering {direction_ok}, axis vs Dijkstra "
                  f"{axis_match:.2e}, {elapsed:.2f}s")


def test_c04_voronoi_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(104)
    agree = []
    for _ in range(20):
        size = int(rng.integers(24, 49))
        n_regions = int(rng.integers(2, 4))
        shape = (size, size)
        masks = [np.ones(shape, dtype=bool)] * n_regions
        bands, metrics = [], []
        for _ in range(n_regions):
            k = int(rng.integers(2, 6))
            bands.append(np.stack([rng.integers(0, size, k),
                                   rng.integers(0, size, k)], axis=1))
            theta = gaussian_convolve(rng.normal(size=shape), 4.0) * 4
            lam1 = 1.0 + 3.0 * rng.random()
            cos, sin = np.cos(theta), np.sin(theta)
            tensor = np.empty(shape + (3,))
            tensor[..., 0] = lam1 * cos ** 2 + sin ** 2
            tensor[..., 1] = (lam1 - 1.0) * cos * sin
            tensor[..., 2] = lam1 * sin ** 2 + cos ** 2
            omega = np.stack([gaussian_convolve(rng.normal(size=shape), 3.0),
                              gaussian_convolve(rng.normal(size=shape), 3.0)],
                             axis=-1) * 3.0
            psi = 1.0 + 0.8 * np.abs(gaussian_convolve(rng.normal(size=shape), 3.0))
            metrics.append(MetricField(tensor, omega, psi,
                                       np.ones(shape, dtype=bool)))
        phi, vmap = voronoi_from_fronts(bands, metrics, masks, n_regions)
        indep = np.stack([fmm_prescribed(bands[i], metrics[i])
                          for i in range(n_regions)])
        lo = np.sort(indep, axis=0)
        tie_free = (lo[1] - lo[0]) > 1e-6
        match = ((vmap == np.argmin(indep, axis=0) + 1)
                 & (np.abs(phi - lo[0]) <= 1e-6))[tie_free]
        agree.append((int(match.sum()), int(match.size)))
    elapsed = time.perf_counter() - t0
    overall = sum(a for a, _ in agree) / sum(b for _, b in agree)
    worst = min(a / b for a, b in agree)
    ok = overall >= 0.99 and elapsed < 30.0
    report(4, ok, f"tie-free agreement {overall * 100:.2f}% pooled over 20 "
                  f"instances (worst instance {worst * 100:.2f}%), {elapsed:.1f}s")


def test_c05_symmetric_bisector():
    t0 = time.perf_counter()
    image = ImageGrid(np.full((64, 64), 0.5))
    arr = np.ones((64, 64), dtype=np.int32)
    arr[:, 32:] = 2
    labels = LabelMap(arr, 2)
    cfg = DualFrontConfig(model="pc", ell=5.0, mu=0.0, symmetric_mode=True,
                          single_metric_mode=True)
    out, _ = evolve_step(labels, image, cfg)
    # interface sits between columns 31 and 32; after one step the last
    # region-1 column per row may move by at most one pixel
    last_r1 = np.array([np.max(np.nonzero(out.labels[r] == 1)[0])
                        for r in range(64)])
    displacement = np.abs(last_r1 - 31).max()
    elapsed = time.perf_counter() - t0
    ok = displacement <= 1 and elapsed < 1.0
    report(5, ok, f"max interface displacement {displacement}px, {elapsed:.2f}s")


def test_c06_synthetic_segmentation():
    t0 = time.perf_counter()
    img, gt = make_synthetic("blob", (200, 200), 0.1, seed=7)
    cfg = DualFrontConfig(model="gmm:2", ell=10.0, mu=5.0, alpha=0.2,
                          beta=1.0, rho=4.0)
    pts = farthest_point_sampling(_eroded_interior(gt, cfg.init_radius), 20)
    asym, sym = [], []
    for k in range(20):
        labels0 = init_labels(
            [("circle", int(pts[k, 0]), int(pts[k, 1]), cfg.init_radius)],
            img.shape)
        labels, _ = run(labels0, img, cfg)
        asym.append(jaccard(labels.labels >= 2, gt))
        labels, _ = run(labels0, img, replace(cfg, mu=0.0))
        sym.append(jaccard(labels.labels >= 2, gt))
    elapsed = time.perf_counter() - t0
    ok = min(asym) >= 0.95 and min(sym) <= 0.90 and elapsed < 180.0
    report(6, ok, f"asym min {min(asym):.4f} (>=0.95), symmetric min "
                  f"{min(sym):.4f} shows the shortcut (<=0.90), {elapsed:.0f}s")


def test_c07_convergence_ordering():
    t0 = time.perf_counter()
    img, gt = make_synthetic("disk", (128, 128), 0.0)
    labels0 = init_labels([("circle", 64, 64, 10)], img.shape)
    base = DualFrontConfig(model="pc", ell=10.0, mu=5.0, alpha=0.2)

    _, trace_asym = run(labels0, img, base, ground_truth=gt)
    _, trace_sym = run(labels0, img, replace(base, mu=0.0), ground_truth=gt)
    mu_ordering = len(trace_asym) <= len(trace_sym)

    def iters_to_95(trace):
        for row in trace.rows:
            if row.jaccard >= 0.95:
                return row.iteration
        return np.inf

    _, trace_l10 = run(labels0, img, base, ground_truth=gt)
    _, trace_l5 = run(labels0, img, replace(base, ell=5.0), ground_truth=gt)
    ell_ordering = iters_to_95(trace_l10) <= iters_to_95(trace_l5)
    elapsed = time.perf_counter() - t0
    ok = mu_ordering and ell_ordering and elapsed < 120.0
    report(7, ok, f"iters mu=5: {len(trace_asym)} <= mu=0: {len(trace_sym)}; "
                  f"to J>=0.95 ell=10: {iters_to_95(trace_l10)} <= ell=5: "
                  f"{iters_to_95(trace_l5)}; {elapsed:.0f}s")


def test_c08_region_model_checks():
    t0 = time.perf_counter()
    rng = np.random.default_rng(108)
    em_ok = True
    for trial in range(4):
        data = np.concatenate([
            rng.normal(0.3, 0.06, 400), rng.normal(0.7, 0.08, 400)])[:, None]
        params = fit_gmm(data, 2, 25, np.random.default_rng(trial))
        hist = params.loglik
        em_ok &= all(b >= a - 1e-7 * (1 + abs(a))
                     for a, b in zip(hist, hist[1:]))

    def labels2(shape=(24, 24), split=12):
        arr = np.ones(shape, dtype=np.int32)
        arr[:, split:] = 2
        return LabelMap(arr, 2)

    half = rng.random((24, 12))
    ident = bhattacharyya_coefficient(
        ImageGrid(np.concatenate([half, half], axis=1)), labels2())
    range_ok = True
    for _ in range(5):
        img = ImageGrid(rng.random((24, 24)))
        coef = bhattacharyya_coefficient(img, labels2())
        range_ok &= 0.0 <= coef <= 1.0
    noise = rng.normal(0, 0.05, (24, 24))
    sweep = []
    for sep in (0.05, 0.1, 0.2, 0.3, 0.4):
        img = np.full((24, 24), 0.45) + noise
        img[:, 12:] += sep
        sweep.append(bhattacharyya_coefficient(
            ImageGrid(np.clip(img, 0, 1)), labels2()))
    mono = all(a > b for a, b in zip(sweep, sweep[1:]))
    elapsed = time.perf_counter() - t0
    ok = (em_ok and range_ok and abs(ident - 1.0) <= 1e-9 and mono
          and elapsed < 10.0)
    report(8, ok, f"EM monotone {em_ok}, B identical {ident:.12f}, "
                  f"B monotone over sweep {mono}, {elapsed:.1f}s")


def test_c09_runtime_budget(tmp_path):
    img, _ = make_synthetic("disk", (321, 481), 0.05, seed=9)
    labels = init_labels([("circle", 160, 240, 60)], img.shape)
    cfg = DualFrontConfig(model="pc", ell=10.0)
    t0 = time.perf_counter()
    evolve_step(labels, img, cfg)
    step_time = time.perf_counter() - t0

    t0 = time.perf_counter()
    code = main(["benchmark", "--synthetic", "disk:64x64:0.05",
                 "--methods", "asym,sym,thresh", "--runs", "20",
                 "--out", str(tmp_path / "bench"), "--seed", "1",
                 "--set", "ell=6", "--set", "max_iters=60"])
    bench_time = time.perf_counter() - t0
    ok = step_time <= 2.0 and code == 0 and bench_time <= 60.0
    report(9, ok, f"evolve_step 321x481 {step_time:.2f}s (<=2s), "
                  f"benchmark R=20 {bench_time:.0f}s (<=60s)")


def _mask_timing(text):
    text = re.sub(r'"seconds[^"]*": [0-9.e+-]+', '"seconds": X', text)
    lines = text.splitlines()
    if lines and lines[0].startswith(("iteration,", "image,")):
        lines = [",".join(row.split(",")[:-1]) for row in lines]
    return "\n".join(lines)


def test_c10_determinism(tmp_path):
    seg_args = ["segment", "--synthetic", "blob:96x96:0.1",
                "--init", "circle:48,30,8", "--seed", "17",
                "--set", "model=gmm:2", "--set", "ell=8",
                "--set", "max_iters=10"]
    bench_args = ["benchmark", "--synthetic", "disk:64x64:0.05",
                  "--methods", "asym,thresh", "--runs", "3", "--seed", "17",
                  "--set", "ell=6", "--set", "max_iters=25"]
    outs = [tmp_path / name for name in ("s1", "s2", "b1", "b2")]
    assert main(seg_args + ["--out", str(outs[0])]) == 0
    assert main(seg_args + ["--out", str(outs[1])]) == 0
    assert main(bench_args + ["--out", str(outs[2])]) == 0
    assert main(bench_args + ["--out", str(outs[3])]) == 0
    same = ((outs[0] / "labels.png").read_bytes() == (outs[1] / "labels.png").read_bytes()
            and (outs[0] / "overlay.png").read_bytes() == (outs[1] / "overlay.png").read_bytes())
    for name in ("trace.csv", "metrics.json"):
        same &= (_mask_timing((outs[0] / name).read_text())
                 == _mask_timing((outs[1] / name).read_text()))
    for name in ("report.csv", "report.json"):
        same &= (_mask_timing((outs[2] / name).read_text())
                 == _mask_timing((outs[3] / name).read_text()))
    report(10, same, "segment and benchmark outputs byte-identical "
                     "(wall-clock fields masked)")
