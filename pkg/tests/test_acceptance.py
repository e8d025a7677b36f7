"""Acceptance criteria 1-11, one PASS/FAIL line each (printed in the session summary)."""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import brute_force_dtw_cost_vec
from rescurve.archetype import (
    FLAT,
    TRANSITIONAL,
    TRAPEZOIDAL,
    TRIANGULAR,
    classify,
    duration_rate_relation,
    trapezoid_properties,
    triangle_properties,
)
from rescurve.cluster import adjusted_rand_index, fit
from rescurve.metric import dtw, pairwise_matrix
from rescurve.modelselect import distortion, silhouette, sweep_k
from rescurve.synth import ArchetypeTemplate, generate, generate_dataset

MIX = {"triangular": 40, "trapezoidal": 40}
SEEDS = [0, 1, 2, 3, 4]


@pytest.fixture(scope="module")
def criterion3_fits():
    """Every fit of criterion 3, with the wall time spent fitting."""
    out = []
    t0 = time.perf_counter()
    for s in SEEDS:
        cs, truth = generate_dataset(MIX, noise_sigma=0.02, seed=s)
        out.append(("noisy", s, truth, fit(cs, 2, seed=s)))
    cs, truth = generate_dataset(MIX, noise_sigma=0.0, seed=0)
    out.append(("clean", 0, truth, fit(cs, 2, seed=0)))
    return out, time.perf_counter() - t0


def test_c01_dtw_oracle_equivalence(acceptance):
    rng = np.random.default_rng(2024)
    pairs = [(-rng.random(rng.integers(1, 7)), -rng.random(rng.integers(1, 7))) for _ in range(1000)]
    t0 = time.perf_counter()
    worst = 0.0
    for p, q in pairs:
        got = dtw(p, q).cost
        want = brute_force_dtw_cost_vec(p, q)
        worst = max(worst, abs(got - want) / max(abs(want), 1e-300) if want else abs(got))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 10
    acceptance(1, ok, f"1000 pairs, worst relative error {worst:.2e} (<= 1e-12), {elapsed:.2f}s (< 10s)")
    assert ok


def test_c02_dtw_metric_properties(acceptance):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    failures = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 31))
        p, q = -rng.random(n), -rng.random(n)
        d = dtw(p, q).distance
        euclid = math.sqrt(math.fsum((p - q) ** 2))
        if not (d >= 0 and d == dtw(q, p).distance and dtw(p, p).distance == 0.0
                and d <= euclid * (1 + 1e-12)):
            failures += 1
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < 10
    acceptance(2, ok, f"10000 equal-length pairs, {failures} violations, {elapsed:.2f}s (< 10s)")
    assert ok


def test_c03_clustering_recovery(acceptance, criterion3_fits):
    fits, elapsed = criterion3_fits
    noisy = [adjusted_rand_index(truth, m.labels) for kind, _, truth, m in fits if kind == "noisy"]
    clean = [adjusted_rand_index(truth, m.labels) for kind, _, truth, m in fits if kind == "clean"]
    ok = min(noisy) >= 0.95 and clean == [1.0] and elapsed < 60
    acceptance(3, ok, f"ARI sigma=0.02 over seeds {SEEDS}: min {min(noisy):.4f} (>= 0.95); "
                      f"sigma=0: {clean[0]} (= 1.0); {elapsed:.1f}s (< 60s)")
    assert ok


def test_c04_monotone_inertia(acceptance, criterion3_fits):
    fits, _ = criterion3_fits
    steps = bad = 0
    for *_, m in fits:
        for r in m.restarts:
            for a, b in zip(r.history, r.history[1:]):
                steps += 1
                bad += not b <= a
    ok = bad == 0 and steps > 0
    acceptance(4, ok, f"{steps} iteration steps over {sum(len(m.restarts) for *_, m in fits)} restarts, "
                      f"{bad} increases")
    assert ok


def test_c05_k_selection(acceptance):
    cs, _ = generate_dataset(MIX, noise_sigma=0.02, seed=0)
    t0 = time.perf_counter()
    rep = sweep_k(cs, 2, 8, seed=0)
    elapsed = time.perf_counter() - t0
    sil = rep.silhouettes()
    k_arg = max(sil, key=lambda k: (sil[k], -k))
    ok = k_arg == 2 and rep.recommended_k == 2 and sil[2] >= 0.5 and elapsed < 300
    acceptance(5, ok, f"silhouette argmax k={k_arg}, recommend k={rep.recommended_k}, "
                      f"silhouette(2)={sil[2]:.3f} (>= 0.5), {elapsed:.1f}s (< 300s)")
    assert ok


def test_c06_silhouette_exactness(acceptance):
    a = [0.0, -0.5, -0.3, -0.1, 0.0]
    b = [0.0, -0.9, -0.9, -0.9, -0.4]
    curves = [a] * 4 + [b] * 5
    m = fit(curves, 2, seed=0)
    score = silhouette(pairwise_matrix(curves), m.labels).score
    distinct = [[0.0, -0.1 * i, -0.05 * i, -0.02 * i] for i in range(1, 8)]
    dist = distortion(fit(distinct, len(distinct), seed=0), distinct)
    ok = score == 1.0 and dist == 0.0
    acceptance(6, ok, f"silhouette of two identical-curve groups = {score!r} (exactly 1.0); "
                      f"distortion at k=n = {dist!r} (exactly 0)")
    assert ok


def triangle_grid():
    for ml in (0.55, 0.65, 0.75, 0.85, 0.95):
        for pl in (0.12, 0.14, 0.168, 0.19, 0.205):
            for n_fast, n_slow in ((2, 6), (3, 8), (2, 10)):
                yield ArchetypeTemplate(TRIANGULAR, max_loss=ml, pivot_level=pl,
                                        fast_rate=(ml - pl) / n_fast, slow_rate=pl / n_slow)


def trapezoid_grid():
    for d in (2, 3, 4, 5, 6):
        for ml in (0.3, 0.5, 0.7, 0.9, 1.0):
            for n_rec in (3, 5, 7):
                yield ArchetypeTemplate(TRAPEZOIDAL, max_loss=ml, plateau_duration=d, constant_rate=ml / n_rec)


def test_c07_property_extraction(acceptance):
    t0 = time.perf_counter()
    misses = []
    worst = 0.0
    tri, trap = list(triangle_grid()), list(trapezoid_grid())
    for t in tri:
        curve, truth = generate(t)
        r = classify(curve)
        direct = triangle_properties(curve, r.turning_points)
        for p in (r.properties, direct):
            errs = [abs(p.critical_functionality_threshold - truth.critical_functionality_threshold),
                    abs(p.fast_rate - truth.fast_rate), abs(p.slow_rate - truth.slow_rate)] \
                if p.pivot_time is not None else [math.inf]
            worst = max(worst, *errs)
            if r.label != TRIANGULAR or p.pivot_time != truth.pivot_time or max(errs) > 1e-9:
                misses.append(t)
    for t in trap:
        curve, truth = generate(t)
        r = classify(curve)
        direct = trapezoid_properties(curve, r.turning_points)
        for p in (r.properties, direct):
            err = abs(p.constant_recovery_rate - truth.constant_recovery_rate) \
                if p.constant_recovery_rate is not None else math.inf
            worst = max(worst, err)
            if r.label != TRAPEZOIDAL or p.plateau_duration != truth.plateau_duration or err > 1e-9:
                misses.append(t)
    elapsed = time.perf_counter() - t0
    ok = not misses and elapsed < 10
    acceptance(7, ok, f"{len(tri)} triangular + {len(trap)} trapezoidal templates, {len(misses)} misses, "
                      f"worst level/rate error {worst:.1e} (<= 1e-9), {elapsed:.2f}s (< 10s)")
    assert ok


def test_c08_fake_peak_suppression(acceptance):
    base = -0.45
    v = [0.0, base, base + 0.00531, base + 0.00531 + 0.000118] + [base + 0.00531 + 0.000118] * 6
    r = classify(v, eps_grad=0.01)
    g = r.profile.gradients
    ok = (r.turning_points.accepted == [] and r.label == FLAT
          and g[1] == pytest.approx(0.00531) and g[2] == pytest.approx(0.000118))
    acceptance(8, ok, f"gradients {g[1]:.5f}, {g[2]:.6f}: {len(r.turning_points.accepted)} accepted, "
                      f"{len(r.turning_points.suppressed)} suppressed, label {r.label}")
    assert ok


def test_c09_duration_rate_relation(acceptance):
    props = []
    for d in range(2, 10):
        t = ArchetypeTemplate(TRAPEZOIDAL, max_loss=0.6, plateau_duration=d, constant_rate=0.3 / (1 + d), length=32)
        curve, _ = generate(t)
        r = classify(curve)
        assert r.label == TRAPEZOIDAL
        props.append(r.properties)
    rho = duration_rate_relation(props)
    ok = rho is not None and rho <= -0.9
    acceptance(9, ok, f"durations 2..9 with rate 0.3/(1+d): Spearman {rho} (<= -0.9)")
    assert ok


# hand-built curves with slightly irregular steps; planted pivot index and level noted per curve
IRMA_C2 = [0, -0.62, -0.49, -0.37, -0.29, -0.205, -0.19, -0.178, -0.165, -0.152, -0.14, -0.128]  # daily, pivot 5
ICE_FAST = [0.03, 0.041, 0.035, 0.038, 0.033, 0.04, 0.036, 0.039]
ICE_SLOW = [0.012, 0.011, 0.013, 0.012, 0.011, 0.012, 0.013, 0.011]
ICE_C1 = [0.0, -0.30, -0.40, -0.46]  # 6-h grid from Feb 2 00:00, peak loss at index 3
for g in ICE_FAST + ICE_SLOW:
    ICE_C1.append(round(ICE_C1[-1] + g, 6))
ICE_PIVOT = 3 + len(ICE_FAST)  # index 11 = Feb 4 18:00
TRANSITIONAL_6H = [0, -0.38, -0.38, -0.30, -0.21, -0.129, -0.117, -0.104, -0.092, -0.081, -0.069]  # pivot 5


def test_c10_reported_anchor_values(acceptance):
    checks = []

    r = classify(IRMA_C2)
    p = r.properties
    checks.append(("Irma c2 pivot level 0.205", p.pivot_time is not None and abs(p.pivot_time - 5) <= 1
                   and abs(p.critical_functionality_threshold - 0.205) <= 0.005
                   and p.fast_rate > 0.1 and abs(p.slow_rate - 0.01) <= 0.005,
                   p.critical_functionality_threshold))

    r = classify(ICE_C1)
    p = r.properties
    checks.append(("ice storm threshold 16.8%", p.pivot_time is not None and abs(p.pivot_time - ICE_PIVOT) <= 1
                   and abs(p.critical_functionality_threshold - 0.168) <= 0.005,
                   p.critical_functionality_threshold))

    r = classify(TRANSITIONAL_6H)
    p = r.properties
    checks.append(("transitional 12.9%, 6 h plateau", r.label == TRANSITIONAL and p.plateau_duration == 1
                   and p.pivot_time is not None and abs(p.pivot_time - 5) <= 1
                   and abs(p.critical_functionality_threshold - 0.129) <= 0.005,
                   p.critical_functionality_threshold))

    ok = all(c[1] for c in checks)
    acceptance(10, ok, "; ".join(f"{name}: {'ok' if good else 'MISS'} ({val})" for name, good, val in checks))
    assert ok


def test_c11_end_to_end_determinism(acceptance, tmp_path):
    def cli(*args):
        proc = subprocess.run([sys.executable, "-m", "rescurve.cli", *map(str, args)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
    cli("synth", "--preset", "triangular=20", "--preset", "trapezoidal=20", "--noise-sigma", "0.02",
        "--seed", "7", "--out", tmp_path / "data")
    for run in ("a", "b"):
        cli("run-all", "--curveset", tmp_path / "data" / "curveset.json", "--seed", "3", "--k-max", "6",
            "--emit-distances", "--out", tmp_path / run)
    a = {p.relative_to(tmp_path / "a"): p.read_bytes() for p in sorted((tmp_path / "a").rglob("*")) if p.is_file()}
    b = {p.relative_to(tmp_path / "b"): p.read_bytes() for p in sorted((tmp_path / "b").rglob("*")) if p.is_file()}
    n_svg = sum(1 for p in a if Path(p).suffix == ".svg")
    ok = a.keys() == b.keys() and all(a[k] == b[k] for k in a) and n_svg >= 3
    acceptance(11, ok, f"{len(a)} output files ({n_svg} SVG) byte-identical across two run-all invocations")
    assert ok
