"""Explicit constants and closed-form decay envelopes.

Every envelope has the same shape: a plateau ``X0`` until ``t0`` and then
``(X0^-gamma + gamma C1 (t - t0))^(-1/gamma)``, which is the solution of the
comparison ODE ``X' = -min(C1 X^(1+gamma), C2 X)`` started on its linear branch.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InvalidParameter
from .grid import GridSpec
from .kernels import KernelBounds, unit_ball_kernel, unit_ball_volume
from .spectral import KernelSymbol, kernel_symbol, symbol_lower_bound_constant

__all__ = [
    "ConstantLedger",
    "DecayEnvelope",
    "constants_from_proof",
    "unit_ball_symbol",
    "dk_chain_constant",
    "estimate_cp",
    "cp_ratio",
    "ode_envelope",
    "lp_decay_envelope",
    "dk_decay_envelope",
    "rescaled_decay_envelope",
    "rescaled_epsilon0",
    "heat_reference_decay",
    "simple_envelope_constant",
    "lp_envelope_spec",
    "dk_envelope_spec",
    "rescaled_envelope_spec",
    "general_envelope_spec",
]

CP_SAFETY = 1.0 - 5e-10


@dataclass(frozen=True)
class ConstantLedger:
    N: int
    p: float
    k: float
    omega_N: float
    C1: float
    C2: float
    C3: float
    C4: float
    c_p: float
    mu_k: float
    C_cor: float
    C_main: float
    gamma_p: float
    gamma_k: float
    C_of_J: float
    C2_k: float
    C3_k: float
    C_dk: float
    C_grad: float

    def __post_init__(self):
        for name, v in asdict(self).items():
            if name in ("N", "k"):
                continue
            if not (np.isfinite(v) and v > 0):
                raise InvalidParameter(f"ledger entry {name}={v} must be positive and finite")

    def as_dict(self) -> dict:
        return asdict(self)


PROVENANCE = {
    "omega_N": "volume of the unit ball in R^N",
    "C1": "max over nonzero grid frequencies of min(1,|xi|^2)/(1 - I^(xi)), I the normalised unit-ball indicator",
    "C2": "omega_N^(-2/N) C1^-1 (1+N/2)^(-(N+2)/N) (N/2): low-frequency branch of the Nash-type split",
    "C3": "C1^-1 (1+2/N)^-1: high-frequency branch",
    "C4": "min(C2, C3); the min is what the two-branch argument supports",
    "c_p": "numerical infimum of (a-b)(a^(p-1)-b^(p-1))/(a^(p/2)-b^(p/2))^2 times (1 - 5e-10)",
    "mu_k": "2/(N+2+2k)",
    "C_cor": "omega_N C4: L2 inequality constant for a kernel with J >= r on B_R",
    "C_main": "c_p C_cor: L^p inequality constant",
    "gamma_p": "2/(N(p-1))",
    "gamma_k": "2/(N+2k)",
    "C_of_J": "1/C(J) = (1/2) int J(z) z_N^2 dz",
    "C2_k": "C2 with N replaced by M = N+2k",
    "C3_k": "C3 with N replaced by M = N+2k",
    "C_dk": "omega_N min(C2_k, C3_k): derivative inequality constant",
    "C_grad": "C_dk at k = 1: gradient inequality constant",
}


def unit_ball_symbol(grid: GridSpec, R: float = 1.0) -> KernelSymbol:
    """Symbol of the normalised unit-ball indicator on ``grid`` viewed at scale ``1/R``.

    A ball of radius ``R`` on spacing ``h`` is the unit ball on spacing ``h/R``;
    building the symbol there keeps the scaling argument exact on the lattice.
    """
    g = GridSpec(grid.dim, grid.half_width / R, grid.points_per_axis)
    return kernel_symbol(unit_ball_kernel(g))


def _chain(M: float, C1: float, omega: float) -> tuple[float, float]:
    C2 = omega ** (-2.0 / M) / C1 * (1 + M / 2) ** (-(M + 2) / M) * (M / 2)
    C3 = 1.0 / C1 / (1 + 2.0 / M)
    return C2, C3


def dk_chain_constant(N: int, k: float, C1: float) -> float:
    omega = unit_ball_volume(N)
    C2k, C3k = _chain(N + 2 * k, C1, omega)
    return omega * min(C2k, C3k)


def constants_from_proof(N: int, p: float, k: float, J_box_symbol: KernelSymbol, C_of_J: float | None = None) -> ConstantLedger:
    """Assemble the constant chain from the unit-ball symbol.

    ``C_of_J`` defaults to the exact value for the normalised unit ball, ``2(N+2)``.
    """
    if J_box_symbol.grid.dim != N:
        raise InvalidParameter(f"symbol is {J_box_symbol.grid.dim}-dimensional, expected N={N}")
    if p < 2:
        raise InvalidParameter(f"p must be >= 2, got {p}")
    if k < 0:
        raise InvalidParameter(f"k must be >= 0, got {k}")
    omega = unit_ball_volume(N)
    C1 = symbol_lower_bound_constant(J_box_symbol)
    C2, C3 = _chain(N, C1, omega)
    C4 = min(C2, C3)
    c_p = estimate_cp(float(p))
    C2k, C3k = _chain(N + 2 * k, C1, omega)
    C_cor = omega * C4
    return ConstantLedger(
        N=N,
        p=float(p),
        k=float(k),
        omega_N=omega,
        C1=C1,
        C2=C2,
        C3=C3,
        C4=C4,
        c_p=c_p,
        mu_k=2.0 / (N + 2 + 2 * k),
        C_cor=C_cor,
        C_main=c_p * C_cor,
        gamma_p=2.0 / (N * (p - 1)),
        gamma_k=2.0 / (N + 2 * k),
        C_of_J=float(2 * (N + 2) if C_of_J is None else C_of_J),
        C2_k=C2k,
        C3_k=C3k,
        C_dk=omega * min(C2k, C3k),
        C_grad=dk_chain_constant(N, 1, C1),
    )


def _cp_log_ratio(t, p):
    # (a-b)(a^(p-1)-b^(p-1))/(a^(p/2)-b^(p/2))^2 with a/b = e^t, written with expm1
    t = np.asarray(t, dtype=float)
    safe = np.where(t == 0, 1.0, t)
    out = np.expm1(safe) * np.expm1((p - 1) * safe) / np.expm1(0.5 * p * safe) ** 2
    return np.where(t == 0, 4 * (p - 1) / p**2, out)  # a = b: the limit value


def cp_ratio(a, b, p: float):
    """The ratio whose infimum over ``a != b >= 0`` is ``c(p)``; homogeneous of degree 0."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    out = np.ones(a.shape)
    pos = lo > 0
    out[pos] = _cp_log_ratio(np.log(hi[pos] / lo[pos]), p)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=None)
def estimate_cp(p: float) -> float:
    """Numerical ``c(p)``: scan ``log(a/b)`` densely, polish with a bounded search.

    By homogeneity it suffices to take ``b = 1``; ``b = 0`` gives ratio 1.
    """
    if not p >= 2:
        raise InvalidParameter(f"c(p) is only validated for p >= 2, got {p}")
    ts = np.concatenate([-np.logspace(-6, np.log10(40.0), 4000)[::-1], np.logspace(-6, np.log10(40.0), 4000)])
    vals = _cp_log_ratio(ts, p)
    i = int(np.argmin(vals))
    best = float(vals[i])
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, ts.size - 1)]
    if lo < hi:
        res = minimize_scalar(lambda s: float(_cp_log_ratio(s, p)) if s != 0 else np.inf, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        if res.success:
            best = min(best, float(res.fun))
    return min(best, 1.0) * CP_SAFETY


@dataclass(frozen=True)
class DecayEnvelope:
    kind: str
    t0: float
    gamma: float
    plateau: float
    rate_constant: float

    def __post_init__(self):
        if self.kind not in ("lp_main", "dk_deriv", "rescaled", "heat_reference", "general_kernel"):
            raise InvalidParameter(f"unknown envelope kind {self.kind!r}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        s = np.maximum(t - self.t0, 0.0)
        out = (self.plateau ** (-self.gamma) + self.gamma * self.rate_constant * s) ** (-1.0 / self.gamma)
        out = np.where(t <= self.t0, self.plateau, out)
        return float(out) if out.ndim == 0 else out


def _ode_spec(kind, X0, C1, C2, gamma) -> DecayEnvelope:
    if not (X0 > 0 and C1 > 0 and C2 > 0 and gamma > 0):
        raise InvalidParameter("envelope parameters must be positive")
    t0 = max(0.0, math.log(C2 ** (-1.0 / gamma) * C1 ** (1.0 / gamma) * X0) / C2)
    return DecayEnvelope(kind, t0, float(gamma), float(X0), float(C1))


def ode_envelope(X0: float, C1: float, C2: float, gamma: float, t):
    """Upper bound for any solution of ``X' <= -min(C1 X^(1+gamma), C2 X)``, ``X(0) = X0``."""
    return _ode_spec("general_kernel", X0, C1, C2, gamma)(t)


def lp_envelope_spec(norm1_0, normp_0, bounds: KernelBounds, ledger: ConstantLedger) -> DecayEnvelope:
    N, p, g = ledger.N, ledger.p, ledger.gamma_p
    C = ledger.C_main
    C1 = C * bounds.r * bounds.R ** (N + 2) * norm1_0 ** (-p * g)
    C2 = C * bounds.r * bounds.R**N
    return _ode_spec("lp_main", normp_0**p, C1, C2, g)


def lp_decay_envelope(norm1_0, normp_0, bounds: KernelBounds, ledger: ConstantLedger, t):
    """Bound on ``||u(t)||_p^p`` for the convolution equation."""
    return lp_envelope_spec(norm1_0, normp_0, bounds, ledger)(t)


def dk_envelope_spec(norm1_0, dknorm_0, bounds: KernelBounds, ledger: ConstantLedger, k: float) -> DecayEnvelope:
    N = ledger.N
    g = 2.0 / (N + 2 * k)
    C = dk_chain_constant(N, k, ledger.C1)
    C1 = C * bounds.r * bounds.R ** (N + 2) * norm1_0 ** (-2 * g)
    C2 = C * bounds.r * bounds.R**N
    return _ode_spec("dk_deriv", dknorm_0**2, C1, C2, g)


def dk_decay_envelope(norm1_0, dknorm_0, bounds: KernelBounds, ledger: ConstantLedger, k: float, t):
    """Bound on ``||D^k u(t)||_2^2``; ``dknorm_0`` is ``||D^k u0||_2``."""
    return dk_envelope_spec(norm1_0, dknorm_0, bounds, ledger, k)(t)


def rescaled_epsilon0(norm1_0, normp_0, R, ledger: ConstantLedger) -> float:
    e = ledger.gamma_p * ledger.p / 2
    return float(norm1_0**e / (R * normp_0**e))


def rescaled_envelope_spec(eps, norm1_0, normp_0, bounds: KernelBounds, ledger: ConstantLedger) -> DecayEnvelope:
    """Envelope for the equation with kernel ``C(J) eps^-(N+2) J(./eps)``.

    The algebraic rate does not depend on ``eps``; only ``t0`` does.
    """
    if not 0 < eps <= 1:
        raise InvalidParameter(f"epsilon must lie in (0, 1], got {eps}")
    N, p, g = ledger.N, ledger.p, ledger.gamma_p
    C, r, R, CJ = ledger.C_main, bounds.r, bounds.R, ledger.C_of_J
    rate = C * r * R ** (N + 2) * CJ * norm1_0 ** (-p * g)
    arg = (eps * R) ** (2.0 / g) * norm1_0 ** (-p) * normp_0**p
    t0 = max(0.0, eps**2 / (C * r * R**N * CJ) * math.log(arg))
    return DecayEnvelope("rescaled", t0, g, float(normp_0**p), float(rate))


def rescaled_decay_envelope(eps, norm1_0, normp_0, bounds: KernelBounds, ledger: ConstantLedger, t):
    return rescaled_envelope_spec(eps, norm1_0, normp_0, bounds, ledger)(t)


def heat_reference_decay(norm1_0, normp_0, C_heat: float, N: int, p: float, t):
    """``(||u0||_p^-p gamma + C_heat ||u0||_1^-p gamma t)^(-1/gamma)``."""
    g = 2.0 / (N * (p - 1))
    rate = C_heat * norm1_0 ** (-p * g)
    return DecayEnvelope("heat_reference", 0.0, g, float(normp_0**p), float(rate / g))(t)


def general_envelope_spec(X0, norm1_0, m, bounds: KernelBounds, ledger: ConstantLedger) -> DecayEnvelope:
    """Envelope for ``X = int (u/u_inf)^p u_inf`` when ``1/m <= u_inf <= m``.

    From ``X' <= -(1/m) D_p(f)``, ``||f||_p^p >= X/m`` and ``||f||_1 <= m ||u0||_1``.
    """
    N, p, g = ledger.N, ledger.p, ledger.gamma_p
    C, r, R = ledger.C_main, bounds.r, bounds.R
    C1 = C * r * R ** (N + 2) * norm1_0 ** (-p * g) * m ** (-(2 + g + p * g))
    C2 = C * r * R**N / m**2
    return _ode_spec("general_kernel", X0, C1, C2, g)


def simple_envelope_constant(series, gamma: float, column: str = "lp2") -> float:
    """``sup_t value(t) (1+t)^(1/gamma)`` over the samples of ``column``."""
    if isinstance(series, tuple):
        t, v = (np.asarray(a, dtype=float) for a in series)
    else:
        t, v = series.times, series[column]
    if t.size == 0:
        raise InvalidParameter("empty series")
    return float(np.max(v * (1 + t) ** (1.0 / gamma)))
