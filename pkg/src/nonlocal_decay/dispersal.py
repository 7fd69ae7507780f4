"""Heterogeneous dispersal ``u_t = int J((x-y)/g(y)) u(y)/g(y) dy - u``.

The equilibrium is the Perron vector of the column-stochastic jump matrix and
is found by power iteration.  It is returned with unit mean, so that the bound
``1/m <= u_inf <= m`` measures how far the environment is from homogeneous.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bounds import ConstantLedger, general_envelope_spec
from .dissipation import dissipation_fast, entropy_power, relative_entropy, relative_entropy_dissipation
from .errors import InvalidParameter, NoConvergence, PositivityLost
from .evolution import TimeSeries, run_experiment
from .grid import Field, lp_norm, lp_power
from .kernels import ConvKernel, GeneralKernel, KernelBounds, box_kernel, dispersal_kernel

__all__ = [
    "EquilibriumResult",
    "DecayCheck",
    "solve_equilibrium",
    "run_dispersal_decay",
    "check_general_decay",
]

# slack for comparing sums that coincide exactly when u_inf is constant
ROUND_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    u_inf: Field
    residual: float
    m: float
    iterations: int
    kernel: Optional[GeneralKernel] = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            "residual": self.residual,
            "m": self.m,
            "iterations": self.iterations,
            "min_u_inf": float(self.u_inf.values.min()),
            "max_u_inf": float(self.u_inf.values.max()),
            "raw_column_defect": (self.kernel.info.get("raw_column_defect") if self.kernel else None),
        }


def solve_equilibrium(J: ConvKernel, g: Field, tol: float = 1e-10, max_iter: int = 100_000, M: Optional[float] = None) -> EquilibriumResult:
    """Fixed point of ``u -> h K u`` with mass renormalised after every sweep.

    Iterates until ``|Tu - u|_inf / |u|_inf <= tol`` and rescales the result to
    unit mean.  ``M``, if given, enforces ``1/M <= g <= M``.
    """
    if g.grid.dim != 1:
        raise InvalidParameter("the dispersal model is one-dimensional")
    gv = g.values
    if np.any(gv <= 0):
        raise InvalidParameter("dispersal scale g must be positive")
    if M is not None and (gv.max() > M or gv.min() < 1.0 / M):
        raise InvalidParameter(f"g leaves the band [1/{M}, {M}]")
    K = dispersal_kernel(J, g)
    h = g.grid.spacing
    T = h * K.matrix
    u = np.full(g.grid.size, 1.0 / (h * g.grid.size))
    res = np.inf
    for it in range(1, max_iter + 1):
        Tu = T @ u
        Tu /= h * Tu.sum()
        if np.any(Tu <= 0):
            raise PositivityLost(f"iterate lost positivity at sweep {it}")
        res = float(np.max(np.abs(Tu - u)) / np.max(np.abs(Tu)))
        u = Tu
        if res <= tol:
            break
    else:
        raise NoConvergence(f"equilibrium not reached in {max_iter} sweeps", residual=res, iterations=max_iter)
    u = u / u.mean()
    final = T @ u
    res = float(np.max(np.abs(final - u)) / np.max(np.abs(u)))
    m = float(max(u.max(), 1.0 / u.min()))
    return EquilibriumResult(g.grid.field(u), res, m, it, K)


def run_dispersal_decay(
    J: ConvKernel,
    g: Field,
    u0: Field,
    p: float,
    horizon: float,
    sample_dt: float,
    equilibrium: Optional[EquilibriumResult] = None,
    dt: Optional[float] = None,
    keep_fields: bool = True,
    halt_on_truncation: bool = False,
    strict: bool = True,
) -> TimeSeries:
    """Evolve the dispersal equation and record ``X(t) = int (u/u_inf)^p u_inf``.

    ``meta["x_nonincreasing"]`` and ``meta["lp_below_mX"]`` record the two
    pointwise checks; with ``strict`` a failure raises instead.
    """
    if np.any(u0.values < 0):
        raise InvalidParameter("u0 must be nonnegative")
    eq = equilibrium if equilibrium is not None else solve_equilibrium(J, g)
    K = eq.kernel if eq.kernel is not None else dispersal_kernel(J, g)
    series = run_experiment(
        "dispersal", K, u0, horizon, sample_dt, (p,), (), None,
        dt=dt, u_inf=eq.u_inf, keep_fields=keep_fields, halt_on_truncation=halt_on_truncation,
    )
    tag = f"{float(p):g}"
    X = series[f"X_p{tag}"]
    lp = series["lp2"] if p == 2 else series[f"lp{tag}"]
    series.meta.update(m=eq.m, equilibrium_residual=eq.residual)
    rise = np.diff(X) > ROUND_RTOL * X[:-1]
    series.meta["x_nonincreasing"] = bool(not np.any(rise))
    bound = eq.m ** (p - 1) * X * (1 + ROUND_RTOL)
    series.meta["lp_below_mX"] = bool(np.all(lp <= bound))
    if strict and not series.meta["x_nonincreasing"]:
        i = int(np.argmax(rise)) + 1
        raise InvalidParameter(f"X(t) increased at sample {i} (t={series.times[i]})")
    if strict and not series.meta["lp_below_mX"]:
        i = int(np.argmax(lp > bound))
        raise InvalidParameter(f"|u|_p^p exceeds m^(p-1) X at sample {i}")
    return series


@dataclass
class DecayCheck:
    dissipation_ok: bool
    envelope_ok: bool
    norm_ok: bool
    failures: list
    min_dissipation_ratio: float
    max_envelope_ratio: float
    samples: int
    caveat: str = ""

    @property
    def passed(self) -> bool:
        return self.dissipation_ok and self.envelope_ok and self.norm_ok

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "dissipation_ok": self.dissipation_ok,
            "envelope_ok": self.envelope_ok,
            "norm_ok": self.norm_ok,
            "failures": self.failures,
            "min_dissipation_ratio": self.min_dissipation_ratio,
            "max_envelope_ratio": self.max_envelope_ratio,
            "samples": self.samples,
            "caveat": self.caveat,
        }


def check_general_decay(
    K: GeneralKernel,
    u_inf: Field,
    m: float,
    bounds: KernelBounds,
    ledger: ConstantLedger,
    series: TimeSeries,
    p: Optional[float] = None,
) -> DecayCheck:
    """Check the three steps of the general-kernel decay argument at every sample.

    (i) ``E_p^K(f) >= (1/m) D_p^{J~}(f)``, ``J~ = r 1_{|z| <= R}``;
    (ii) ``X(t)`` below the comparison envelope (on the validity window);
    (iii) ``|u|_p^p <= m^(p-1) X(t)``.
    The series must carry its field snapshots.
    """
    p = ledger.p if p is None else p
    if not K.is_mass_conserving():
        raise InvalidParameter("check_general_decay needs a mass-conserving kernel")
    if series.snapshots is None:
        raise InvalidParameter("series was recorded without field snapshots")
    if np.any(u_inf.values <= 0):
        raise InvalidParameter("u_inf must be positive")
    tag = f"{float(p):g}"
    Jt = box_kernel(K.grid, bounds.R, bounds.r)
    spec = entropy_power(p)
    u0 = series.snapshots[0]
    X = series[f"X_p{tag}"] if f"X_p{tag}" in series.columns else np.array(
        [relative_entropy(u, u_inf, spec) for u in series.snapshots]
    )
    env = general_envelope_spec(float(X[0]), lp_norm(u0, 1), m, bounds, ledger)
    valid = series.valid_mask()
    failures = []
    min_dr, max_er = np.inf, 0.0
    for i, (t, u) in enumerate(zip(series.times, series.snapshots)):
        f = u / u_inf
        E = relative_entropy_dissipation(K, u_inf, f, spec)
        D = dissipation_fast(Jt, f, p)
        if D > 0:
            min_dr = min(min_dr, E * m / D)
        if E < D / m * (1 - ROUND_RTOL):
            failures.append({"sample": i, "t": float(t), "check": "dissipation", "E": E, "D_over_m": D / m})
        e = float(env(t))
        if valid[i]:
            max_er = max(max_er, X[i] / e)
            if X[i] > e:
                failures.append({"sample": i, "t": float(t), "check": "envelope", "X": float(X[i]), "envelope": e})
        lp, bound = lp_power(u, p), m ** (p - 1) * X[i]
        if lp > bound * (1 + ROUND_RTOL):
            failures.append({"sample": i, "t": float(t), "check": "norm", "lp": lp, "bound": bound})
    kinds = {f["check"] for f in failures}
    caveat = ""
    if K.info.get("source") == "dispersal":
        caveat = "equilibrium bounds verified numerically, not assumed from an existence theorem"
    return DecayCheck(
        "dissipation" not in kinds,
        "envelope" not in kinds,
        "norm" not in kinds,
        failures,
        float(min_dr),
        float(max_er),
        len(series),
        caveat,
    )
