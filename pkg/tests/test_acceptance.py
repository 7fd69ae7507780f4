"""Acceptance criteria 1-12, one test each.

Every test records a ``criterion N: PASS|FAIL`` line (printed in the terminal
summary) before asserting, so a red criterion still reports its numbers.
"""
import json
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, gaussian
from nonlocal_decay.bounds import constants_from_proof, cp_ratio, estimate_cp, unit_ball_symbol
from nonlocal_decay.cli import catalog_names, main
from nonlocal_decay.dispersal import check_general_decay, run_dispersal_decay, solve_equilibrium
from nonlocal_decay.dissipation import dissipation_direct, dissipation_fast
from nonlocal_decay.evolution import TimeSeries, h_theorem_residual, run_experiment
from nonlocal_decay.grid import GridSpec, lp_power
from nonlocal_decay.kernels import make_standard_kernel, verify_hypothesis_J, verify_hypothesis_K
from nonlocal_decay.spectral import kernel_symbol, symbol_lower_bound_constant
from nonlocal_decay.verify import (
    FieldGenerator,
    check_dk_inequality,
    check_gradient_inequality,
    check_l2_inequality,
    check_main_inequality,
    default_margin,
)


def verdict(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


def _unit_kernel(kind, grid, R_sup=1.0):
    J = make_standard_kernel(kind, R_sup, 1.0, grid)
    return make_standard_kernel(kind, R_sup, 1.0 / J.mass, grid)


def _slope_last_decade(t, y, T):
    sel = (t >= T / 10) & (t <= T) & (t > 0)
    return float(np.polyfit(np.log(t[sel]), np.log(y[sel]), 1)[0])


def _simulation(catalog_run, name):
    code, out = catalog_run[name]
    summary = json.loads((out / "summary.json").read_text())
    return code, out, summary


def test_01_dissipation_equivalence(rng):
    start = time.perf_counter()
    worst, count = 0.0, 0
    for dim, n, L in ((1, 256, 16.0), (2, 32, 4.0)):
        grid = GridSpec(dim, L, n)
        for kind in ("box", "bump", "truncated_gaussian"):
            J = _unit_kernel(kind, grid)
            sym = kernel_symbol(J)
            for _ in range(200):
                u = grid.field(rng.normal(size=grid.shape) * rng.uniform(0.1, 10.0))
                for p in (2.0, 3.0, 4.0):
                    fast, direct = dissipation_fast(J, u, p, sym), dissipation_direct(J, u, p)
                    worst = max(worst, abs(fast - direct) / abs(direct))
                    count += 1
    elapsed = time.perf_counter() - start
    verdict(1, worst <= 1e-8 and elapsed < 120, f"{count} evaluations, max rel diff {worst:.2e}, {elapsed:.1f} s")


def test_02_inequality_suite():
    start = time.perf_counter()
    trials = 1000
    grid = GridSpec(1, 64.0, 1024)
    J = _unit_kernel("box", grid)
    b = verify_hypothesis_J(J, 1.0)
    sym = unit_ball_symbol(grid, b.R)
    gen = FieldGenerator("gaussian_mixture", 3, (0.3, 2.0), (0.2, 2.0), default_margin(J), 0)
    reports = []
    for p in (2.0, 3.0, 4.0):
        reports.append(check_main_inequality(J, b, constants_from_proof(1, p, 0, sym), p, gen, trials))
    reports.append(check_l2_inequality(J, b, constants_from_proof(1, 2.0, 0, sym), gen, trials))
    signed = FieldGenerator("signed_mixture", 3, (0.3, 2.0), (0.2, 2.0), default_margin(J), 1)
    for k in (0.0, 1.0, 2.0):
        reports.append(check_dk_inequality(J, b, constants_from_proof(1, 2.0, k, sym), k, signed, trials))
    g2 = GridSpec(2, 12.0, 64)
    J2 = _unit_kernel("truncated_gaussian", g2)
    b2 = verify_hypothesis_J(J2, 0.5)
    gen2 = FieldGenerator("random_fourier", 3, (0.3, 2.0), (0.2, 2.0), default_margin(J2), 2)
    led2 = constants_from_proof(2, 2.0, 1.0, unit_ball_symbol(g2, b2.R))
    reports.append(check_gradient_inequality(J2, b2, led2, gen2, trials))
    for led in (constants_from_proof(1, 2.0, 0, sym), led2):
        assert led.C4 == min(led.C2, led.C3)
    viol = sum(r.violations for r in reports)
    elapsed = time.perf_counter() - start
    detail = ", ".join(f"{r.label} min ratio {r.min_ratio:.3g}" for r in reports)
    ok = viol == 0 and all(r.trials == trials for r in reports) and elapsed < 600
    verdict(2, ok, f"{len(reports)} checks x {trials} trials, {viol} violations, {elapsed:.0f} s; {detail}")


def test_03_c1_oracle():
    grid = GridSpec(1, 64.0, 4096)
    C1 = symbol_lower_bound_constant(kernel_symbol(_unit_kernel("box", grid)))
    xi = np.linspace(1e-4, 2 * np.pi * 4096 / 128, 4_000_001)
    dense = float(np.max(np.minimum(1.0, xi**2) / (1 - np.sin(xi) / xi)))
    rel = abs(C1 - dense) / dense
    verdict(3, rel <= 0.01, f"C1 {C1:.6f} vs dense scan {dense:.6f}, rel diff {rel:.2e}")


def test_04_cp_oracle():
    rng = np.random.default_rng(np.random.SeedSequence([0, 4]))
    worst = np.inf
    for p in (2.0, 2.5, 3.0, 4.0, 6.0):
        a = 10 ** rng.uniform(-6, 6, 1_000_000)
        b = 10 ** rng.uniform(-6, 6, 1_000_000)
        a[:1000] = 0.0  # one side at zero
        worst = min(worst, float(np.min(cp_ratio(a, b, p) - estimate_cp(p))))
    c2 = estimate_cp(2.0)
    ok = worst >= 0 and abs(c2 - 1) <= 1e-9
    verdict(4, ok, f"min over 5 x 10^6 pairs of ratio - c(p) = {worst:.3e}; c(2) - 1 = {c2 - 1:.1e}")


def test_05_h_theorem():
    grid = GridSpec(1, 16.0, 256)
    J = _unit_kernel("box", grid)
    u0 = grid.sample(lambda x: np.exp(-x * x / 2) * (1 + 0.5 * np.cos(3 * x)))
    parts, ok = [], True
    for p in (2.0, 4.0):
        r1, r2 = (h_theorem_residual(run_experiment("convolution", J, u0, 0.05, dt, (p,)), p) for dt in (1e-3, 5e-4))
        ok &= r1 <= 1e-4 and r1 / r2 >= 3.5
        parts.append(f"p={p:g}: {r1:.2e}, halving ratio {r1 / r2:.2f}")
    verdict(5, ok, "; ".join(parts))


def _domination(s, valid_until, pairs):
    keep = s.times <= valid_until
    return max(float(np.max(s[o][keep] / s[e][keep])) for o, e in pairs)


def test_06_lp_envelope(catalog_run):
    code, out, summary = _simulation(catalog_run, "thm13_box_1d")
    s = TimeSeries.from_csv(out / "timeseries.csv")
    # independent validity horizon: boundary mass below 1e-6 of the mass
    bad = s["boundary_mass"] >= 1e-6 * np.abs(s["mass"])
    T = float(s.times[np.argmax(bad) - 1]) if bad.any() else float(s.times[-1])
    ratio = _domination(s, T, [("lp2", "env_p2"), ("lp3", "env_p3")])
    slope = _slope_last_decade(s.times, s["lp2"], T)
    ok = code == 0 and ratio <= 1 and slope <= -0.4 and T >= 100
    verdict(6, ok, f"T* = {T:g}, max |u|_p^p / envelope {ratio:.3f}, lp2 slope {slope:.3f}")


def test_07_dk_envelope(catalog_run):
    code, out, summary = _simulation(catalog_run, "thm13_box_1d")
    s = TimeSeries.from_csv(out / "timeseries.csv")
    T = summary["details"]["valid_until"]
    ratio = _domination(s, T, [("dk1", "env_dk1")])
    slope = _slope_last_decade(s.times, s["dk1"], T)
    ok = ratio <= 1 and slope <= -2 / 3 + 0.1
    verdict(7, ok, f"max |D^1 u|^2 / envelope {ratio:.3f}, slope {slope:.3f}")


def test_08_rescaled(catalog_run):
    code, out, summary = _simulation(catalog_run, "rescaled_box_1d")
    d = summary["details"]
    worst = 0.0
    for e in ("1", "0.5", "0.25", "0.125"):
        s = TimeSeries.from_csv(out / f"timeseries_eps{e}.csv")
        worst = max(worst, _domination(s, s.times[-1] if np.isinf(s.valid_until) else s.valid_until,
                                       [("lp2", "env_p2"), ("lp3", "env_p3")]))
    t0_ok = all(v == 0 for v in d["t0"].values()) and d["epsilon0"] > 1
    heat = d["heat_relative_l2_error"]
    ok = code == 0 and worst <= 1 and t0_ok and heat <= 0.05
    verdict(8, ok, f"max ratio to envelope {worst:.3f}, eps0 {d['epsilon0']:.3f}, t0 all zero {t0_ok}, heat L2 error {heat:.2e}")


def test_09_comparison_ode(catalog_run):
    code, out, summary = _simulation(catalog_run, "comparison_ode")
    draws = summary["details"]["draws"]
    below = all(v for k, v in summary["checks"].items() if k.startswith("below_draw"))
    tight = [d["max_ratio_in_regime"] for d in draws if d["max_ratio_in_regime"] == d["max_ratio_in_regime"]]
    ok = code == 0 and len(draws) == 10 and below and tight and max(tight) <= 1.01
    verdict(9, ok, f"{len(draws)} draws below envelope: {below}; worst envelope/solution in regime {max(tight):.8f} over {len(tight)} draws")


def test_10_dispersal():
    start = time.perf_counter()
    grid = GridSpec(1, 32.0, 512)
    J = _unit_kernel("box", grid)
    g = grid.sample(lambda x: 1 + 0.3 * np.sin(np.pi * x / grid.half_width))
    eq = solve_equilibrium(J, g)
    p = 2.0
    s = run_dispersal_decay(J, g, gaussian(grid, 1.0), p, 50.0, 0.5, eq, strict=False)
    X = s["X_p2"]
    steps = np.diff(X)
    lp = np.array([lp_power(u, p) for u in s.snapshots])
    bK = verify_hypothesis_K(eq.kernel, 0.65 * J.support_radius)
    rep = check_general_decay(eq.kernel, eq.u_inf, eq.m, bK, constants_from_proof(1, p, 0, unit_ball_symbol(grid, bK.R)), s)
    elapsed = time.perf_counter() - start
    ok = (eq.residual <= 1e-8 and np.all(steps < 0) and np.all(lp <= eq.m ** (p - 1) * X)
          and rep.dissipation_ok and elapsed < 600)
    verdict(10, ok, f"residual {eq.residual:.1e}, m {eq.m:.4f}, max dX {steps.max():.2e}, "
                    f"max lp/(m^(p-1) X) {np.max(lp / (eq.m ** (p - 1) * X)):.4f}, "
                    f"min E m / D {rep.min_dissipation_ratio:.3f}, {elapsed:.0f} s")


def test_11_source(catalog_run):
    code, out, summary = _simulation(catalog_run, "source_cubic_1d")
    s = TimeSeries.from_csv(out / "timeseries.csv")
    free = TimeSeries.from_csv(out / "timeseries_free.csv")
    n = len(s)
    below_free = bool(np.all(s["lp2"] <= free["lp2"][:n]))
    T = summary["details"]["valid_until"]
    ratio = _domination(s, T, [("lp2", "env_p2")])
    ok = code == 0 and below_free and ratio <= 1
    verdict(11, ok, f"below source-free run at all {n} samples: {below_free}; max lp2/envelope on window {ratio:.3f}")


def test_12_determinism(catalog_run, tmp_path):
    diffs = []
    for name in catalog_names():
        _, first = catalog_run[name]
        again = tmp_path / name
        main(["run", "--config", name, "--out", str(again)])
        files = sorted(p.name for p in first.iterdir())
        if files != sorted(p.name for p in again.iterdir()):
            diffs.append(f"{name}: file sets differ")
            continue
        diffs += [f"{name}/{f}" for f in files if (first / f).read_bytes() != (again / f).read_bytes()]
    verdict(12, not diffs, f"{len(catalog_names())} catalog configs rerun, differing files: {diffs or 'none'}")
