"""Time integration and Lyapunov bookkeeping.

The convolution equation ``u_t = J*u - (int J) u`` is advanced with its exact
Fourier propagator.  Equations with a general kernel, or with a nonlinear
source, use classical RK4 under the step guard ``dt <= 1/(2 max(|sigma|, C_K))``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .dissipation import (
    dissipation_fast,
    entropy_power,
    relative_entropy,
    relative_entropy_dissipation,
)
from .errors import InsufficientData, InvalidParameter, StepRejected
from .grid import Field, boundary_mass, lp_norm, mass
from .kernels import ConvKernel, GeneralKernel
from .spectral import KernelSymbol, apply_multiplier, dk_norm, kernel_symbol

__all__ = [
    "TimeSeries",
    "SourceSpec",
    "step_spectral_exact",
    "step_rk4_general",
    "run_experiment",
    "h_theorem_residual",
    "TRUNCATION_FRACTION",
]

TRUNCATION_FRACTION = 1e-6
EQUATIONS = ("convolution", "general", "dispersal")


def _tag(x: float) -> str:
    return f"{float(x):g}"


@dataclass
class TimeSeries:
    """Sampled observables of one run.

    ``lp{p}`` columns hold ``||u||_p^p``, ``dk{k}`` hold ``||D^k u||_2^2``
    (both computed as the power of the norm, exactly as the envelopes do),
    ``X_p{p}`` hold ``int |u/u_inf|^p u_inf`` and ``diss_p{p}`` the matching
    dissipation (the negative time derivative of ``X_p{p}`` when present,
    else of ``lp{p}``).
    """

    times: np.ndarray
    columns: dict
    truncated: bool = False
    valid_until: float = math.inf
    snapshots: Optional[list] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise InvalidParameter("sample times must be strictly increasing")
        self.times = t
        self.columns = {k: np.asarray(v, dtype=float) for k, v in self.columns.items()}
        for k, v in self.columns.items():
            if v.shape != t.shape:
                raise InvalidParameter(f"column {k!r} has {v.size} entries for {t.size} times")

    def __len__(self):
        return self.times.size

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def valid_mask(self) -> np.ndarray:
        return self.times <= self.valid_until

    def to_csv(self, path) -> None:
        names = list(self.columns)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", *names])
            for i, t in enumerate(self.times):
                w.writerow([f"{t:.17g}", *(f"{self.columns[k][i]:.17g}" for k in names)])

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        data = np.array([[float(x) for x in r] for r in body]).reshape(len(body), len(header))
        cols = {name: data[:, j] for j, name in enumerate(header[1:], start=1)}
        return cls(data[:, 0], cols)


@dataclass(frozen=True)
class SourceSpec:
    """Pointwise reaction term ``f(u)``; must satisfy ``f(s) s <= 0``."""

    f: Callable
    label: str = "custom"
    sign_checked: bool = field(default=False, init=False)

    def __post_init__(self):
        s = np.linspace(-10.0, 10.0, 1000)
        if np.any(np.asarray(self.f(s)) * s > 0):
            raise InvalidParameter(f"source {self.label!r} violates f(s) s <= 0")
        object.__setattr__(self, "sign_checked", True)

    @classmethod
    def cubic_absorption(cls) -> "SourceSpec":
        return cls(lambda s: -np.asarray(s) ** 3, "minus_cube")


def _propagator(sym: KernelSymbol, dt: float) -> np.ndarray:
    return np.exp(dt * (sym.values - sym.mass))


def step_spectral_exact(J: ConvKernel | KernelSymbol, u: Field, dt: float) -> Field:
    """Exact solution of the convolution equation after time ``dt``."""
    if not dt > 0:
        raise InvalidParameter(f"dt must be positive, got {dt}")
    sym = J if isinstance(J, KernelSymbol) else kernel_symbol(J)
    return apply_multiplier(u, _propagator(sym, dt))


def stable_dt(K: GeneralKernel) -> float:
    return 1.0 / (2.0 * max(float(np.max(np.abs(K.sigma.flat))), K.C_K))


def _rk4(rhs, v: np.ndarray, dt: float) -> np.ndarray:
    k1 = rhs(v)
    k2 = rhs(v + 0.5 * dt * k1)
    k3 = rhs(v + 0.5 * dt * k2)
    k4 = rhs(v + dt * k3)
    return v + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _with_source(op, source: Optional[SourceSpec]):
    if source is None:
        return op
    if not source.sign_checked:
        raise InvalidParameter("source has not passed its sign check")
    f = source.f
    return lambda v: op(v) + f(v)


def step_rk4_general(K: GeneralKernel, u: Field, dt: float, source: Optional[SourceSpec] = None) -> Field:
    """One RK4 step of ``u_t = h^N K u - sigma u + f(u)``."""
    if not dt > 0:
        raise InvalidParameter(f"dt must be positive, got {dt}")
    if dt > stable_dt(K) * (1 + 1e-12):
        raise StepRejected(f"dt={dt} exceeds the stability guard {stable_dt(K)}")
    rhs = _with_source(K.apply, source)
    return u.with_values(_rk4(rhs, u.flat, dt))


def _conv_operator(sym: KernelSymbol, grid):
    shape = grid.shape

    def op(v):
        vv = v.reshape(shape)
        return (np.fft.ifftn(sym.values * np.fft.fftn(vv)).real - sym.mass * vv).reshape(-1)

    return op


class _Recorder:
    def __init__(self, grid, p_list, k_list, envelopes, u_inf, margin, with_x):
        self.grid = grid
        self.p_list = list(p_list)
        self.k_list = list(k_list)
        self.envelopes = dict(envelopes or {})
        self.u_inf = u_inf
        self.margin = margin
        self.with_x = with_x
        names = ["mass", "boundary_mass", "lp2"]
        names += [f"lp{_tag(p)}" for p in self.p_list if p != 2]
        names += [f"dk{_tag(k)}" for k in self.k_list]
        if with_x:
            names += [f"X_p{_tag(p)}" for p in self.p_list]
        names += [f"diss_p{_tag(p)}" for p in self.p_list]
        names += list(self.envelopes)
        self.rows = {n: [] for n in names}
        self.times = []

    def record(self, t, u, diss):
        r = self.rows
        r["mass"].append(mass(u))
        r["boundary_mass"].append(boundary_mass(u, self.margin))
        r["lp2"].append(lp_norm(u, 2) ** 2)
        for p in self.p_list:
            if p != 2:
                r[f"lp{_tag(p)}"].append(lp_norm(u, p) ** p)
        for k in self.k_list:
            r[f"dk{_tag(k)}"].append(dk_norm(u, k) ** 2)
        if self.with_x:
            for p in self.p_list:
                r[f"X_p{_tag(p)}"].append(relative_entropy(u, self.u_inf, entropy_power(p)))
        for p in self.p_list:
            r[f"diss_p{_tag(p)}"].append(diss(u, p))
        for name, env in self.envelopes.items():
            r[name].append(float(env(t)))
        self.times.append(t)


def run_experiment(
    equation: str,
    kernel: ConvKernel | GeneralKernel,
    u0: Field,
    horizon: float,
    sample_dt: float,
    p_list: Sequence[float] = (2,),
    k_list: Sequence[float] = (),
    source: Optional[SourceSpec] = None,
    *,
    dt: Optional[float] = None,
    u_inf: Optional[Field] = None,
    envelopes: Optional[Mapping[str, Callable]] = None,
    margin: Optional[float] = None,
    keep_fields: bool = False,
    halt_on_truncation: bool = True,
) -> TimeSeries:
    """Advance ``u0`` to ``horizon`` and sample observables every ``sample_dt``.

    ``margin`` sets the outer shell used for the boundary-mass monitor
    (default ``L/8``).  Once the shell holds more than ``1e-6 |mass(u0)|`` the
    run is flagged truncated and, if ``halt_on_truncation``, stops there.
    """
    if equation not in EQUATIONS:
        raise InvalidParameter(f"unknown equation {equation!r}; expected one of {EQUATIONS}")
    if not (horizon > 0 and sample_dt > 0):
        raise InvalidParameter("horizon and sample_dt must be positive")
    if kernel.grid != u0.grid:
        raise InvalidParameter("kernel and initial condition live on different grids")
    for p in p_list:
        if p < 2:
            raise InvalidParameter(f"p must be >= 2, got {p}")
    grid = u0.grid
    margin = grid.half_width / 8 if margin is None else margin
    n_samples = int(round(horizon / sample_dt))
    if abs(n_samples * sample_dt - horizon) > 1e-9 * horizon:
        raise InvalidParameter("horizon must be a whole number of sample intervals")

    if equation == "convolution":
        if not isinstance(kernel, ConvKernel):
            raise InvalidParameter("the convolution equation needs a ConvKernel")
        sym = kernel_symbol(kernel)
        op = _conv_operator(sym, grid)
        guard = 1.0 / (2.0 * sym.mass)
        diss = lambda u, p: dissipation_fast(kernel, u, p, sym)  # noqa: E731
        with_x = False
    else:
        if not isinstance(kernel, GeneralKernel):
            raise InvalidParameter(f"the {equation} equation needs a GeneralKernel")
        op = kernel.apply
        guard = stable_dt(kernel)
        with_x = u_inf is not None
        w = u_inf if with_x else grid.field(np.ones(grid.shape))
        diss = lambda u, p: relative_entropy_dissipation(kernel, w, u / w, entropy_power(p))  # noqa: E731

    rec = _Recorder(grid, p_list, k_list, envelopes, u_inf, margin, with_x)
    threshold = TRUNCATION_FRACTION * abs(mass(u0))
    snaps = [] if keep_fields else None

    exact = equation == "convolution" and source is None
    if not exact:
        step = dt if dt is not None else min(sample_dt, guard)
        substeps = max(1, math.ceil(sample_dt / step - 1e-12))
        step = sample_dt / substeps
        if step > guard * (1 + 1e-12):
            raise StepRejected(f"dt={step} exceeds the stability guard {guard}")
        rhs = _with_source(op, source)
    else:
        prop = _propagator(sym, sample_dt)

    u = u0
    truncated = False
    valid_until = math.inf
    for i in range(n_samples + 1):
        t = i * sample_dt
        if i > 0:
            if exact:
                u = apply_multiplier(u, prop)
            else:
                v = u.flat
                for _ in range(substeps):
                    v = _rk4(rhs, v, step)
                u = u.with_values(v)
        rec.record(t, u, diss)
        if snaps is not None:
            snaps.append(u)
        if rec.rows["boundary_mass"][-1] > threshold and not truncated:
            truncated = True
            valid_until = rec.times[-2] if i > 0 else -math.inf
            if halt_on_truncation:
                break

    return TimeSeries(
        np.array(rec.times),
        rec.rows,
        truncated=truncated,
        valid_until=valid_until,
        snapshots=snaps,
        meta={"equation": equation, "sample_dt": sample_dt, "margin": margin},
    )


def h_theorem_residual(series: TimeSeries, p: float) -> float:
    """Worst centered-difference defect of ``d/dt X + dissipation = 0``, relative
    to the largest recorded dissipation."""
    if len(series) < 3:
        raise InsufficientData("need at least three samples")
    tag = _tag(p)
    X = series.columns.get(f"X_p{tag}")
    if X is None:
        X = series[f"lp{tag}"]
    D = series[f"diss_p{tag}"]
    t = series.times
    dX = (X[2:] - X[:-2]) / (t[2:] - t[:-2])
    defect = np.max(np.abs(dX + D[1:-1]))
    scale = np.max(np.abs(D))
    if scale == 0:
        return 0.0 if defect == 0 else math.inf
    return float(defect / scale)
