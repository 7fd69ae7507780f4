"""Randomised checks of the functional inequalities at the certified constants.

A violation is ``LHS/RHS < 1`` with no tolerance.  Each trial draws its field
from its own RNG stream seeded by ``(seed, trial index)``, so reports do not
depend on execution order.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .bounds import ConstantLedger, dk_chain_constant
from .dissipation import dissipation_Dk, dissipation_fast, dissipation_gradient
from .errors import InvalidParameter
from .grid import Field, GridSpec, lp_norm, lp_power
from .kernels import ConvKernel, KernelBounds
from .spectral import forward, frequency_norm2, gradient, kernel_symbol

__all__ = [
    "FieldGenerator",
    "InequalityReport",
    "GENERATOR_KINDS",
    "check_main_inequality",
    "check_l2_inequality",
    "check_dk_inequality",
    "check_gradient_inequality",
    "estimate_best_constant",
    "check_interpolation_chain",
    "default_margin",
]

# append-only: existing kinds must keep drawing the same fields for a given seed
GENERATOR_KINDS = ("gaussian_mixture", "random_fourier", "indicator_sum", "signed_mixture")


def default_margin(J: ConvKernel) -> float:
    return J.support_radius + 4 * J.grid.spacing


@dataclass(frozen=True)
class FieldGenerator:
    kind: str = "gaussian_mixture"
    components: int = 3
    width_range: tuple = (0.3, 2.0)
    amplitude_range: tuple = (0.2, 2.0)
    margin: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise InvalidParameter(f"unknown generator kind {self.kind!r}")
        if self.components < 1:
            raise InvalidParameter("need at least one component")
        lo, hi = self.width_range
        if not 0 < lo <= hi:
            raise InvalidParameter(f"bad width range {self.width_range}")
        lo, hi = self.amplitude_range
        if not 0 < lo <= hi:
            raise InvalidParameter(f"bad amplitude range {self.amplitude_range}")
        if not self.margin > 0:
            raise InvalidParameter("margin must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidParameter("seed must be a 64-bit unsigned integer")

    def trial_seed(self, i: int) -> int:
        return int(np.random.SeedSequence([int(self.seed), int(i)]).generate_state(1, dtype=np.uint64)[0])

    def _inner(self, grid: GridSpec) -> float:
        A = grid.half_width - self.margin
        if A <= 4 * grid.spacing:
            raise InvalidParameter(f"margin {self.margin} leaves no room inside L={grid.half_width}")
        return A

    def params(self, grid: GridSpec, i: int) -> dict:
        rng = np.random.default_rng(self.trial_seed(i))
        A = self._inner(grid)
        m, N = self.components, grid.dim
        w = rng.uniform(*self.width_range, size=m)
        w = np.minimum(w, A / 4)
        amp = rng.uniform(*self.amplitude_range, size=m)
        centers = rng.uniform(-1, 1, size=(m, N)) * (A - 2 * w)[:, None]
        out = {"widths": w, "amps": amp, "centers": centers}
        if self.kind == "signed_mixture":
            out["amps"] = amp * rng.choice([-1.0, 1.0], size=m)
        elif self.kind == "random_fourier":
            direction = rng.normal(size=(m, N))
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            out["freqs"] = direction / w[:, None]
            out["phases"] = rng.uniform(0, 2 * np.pi, size=m)
        return out

    def render(self, grid: GridSpec, prm: dict) -> Field:
        A = self._inner(grid)
        X = np.stack(grid.coords())
        inside = np.max(np.abs(X), axis=0) <= A
        u = np.zeros(grid.shape)
        if self.kind == "random_fourier":
            s = np.clip(X / A, -1, 1)
            with np.errstate(divide="ignore"):
                window = np.exp(np.sum(1.0 - 1.0 / np.maximum(1.0 - s * s, 0.0), axis=0))
            for f, ph, a in zip(prm["freqs"], prm["phases"], prm["amps"]):
                u += a * np.cos(np.tensordot(f, X, axes=1) + ph)
            u *= window
        else:
            for c, w, a in zip(prm["centers"], prm["widths"], prm["amps"]):
                d = X - c.reshape((-1,) + (1,) * grid.dim)
                if self.kind == "indicator_sum":
                    u += a * (np.max(np.abs(d), axis=0) <= w)
                else:
                    u += a * np.exp(-np.sum(d * d, axis=0) / (2 * w * w))
        u = np.where(inside, u, 0.0)
        return Field(grid, u)

    def generate(self, grid: GridSpec, i: int) -> Field:
        return self.render(grid, self.params(grid, i))


@dataclass
class InequalityReport:
    trials: int
    min_margin: float
    min_ratio: float
    violations: int
    worst_seed: int
    label: str = ""

    def as_dict(self) -> dict:
        return asdict(self)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _check_margin(J: ConvKernel, gen: FieldGenerator):
    need = default_margin(J)
    if gen.margin < need * (1 - 1e-12):
        raise InvalidParameter(f"generator margin {gen.margin} is below R_sup + 4h = {need}")


def _run(sides: Callable[[Field], tuple], gen: FieldGenerator, grid: GridSpec, trials: int, label: str, tol: float = 0.0):
    if trials < 1:
        raise InvalidParameter("trials must be positive")
    done = attempt = viol = 0
    min_ratio, min_margin, worst = np.inf, np.inf, gen.trial_seed(0)
    while done < trials:
        if attempt > 10 * trials + 10:
            raise InvalidParameter("generator keeps producing degenerate fields")
        u = gen.generate(grid, attempt)
        seed = gen.trial_seed(attempt)
        attempt += 1
        lhs, rhs = sides(u)
        if not rhs > 0:
            continue  # zero field or zero derivative: nothing to test
        done += 1
        ratio = lhs / rhs
        if ratio < 1 - tol:
            viol += 1
        if ratio < min_ratio:
            min_ratio, worst = float(ratio), seed
        min_margin = min(min_margin, float(lhs - rhs))
    return InequalityReport(trials, float(min_margin), float(min_ratio), viol, int(worst), label)


def _nash_min(R, N, a, q, n1, X):
    # min{R^(N+2) n1^(-q) X^(1+a), R^N X}; callers pass a = gamma and q = p gamma
    return min(R ** (N + 2) * n1 ** (-q) * X ** (1 + a), R**N * X)


def check_main_inequality(J: ConvKernel, bounds: KernelBounds, ledger: ConstantLedger, p: float, gen: FieldGenerator, trials: int) -> InequalityReport:
    """``D_p(u) >= C_main r min{R^(N+2) |u|_1^(-p g) |u|_p^(p(1+g)), R^N |u|_p^p}``, ``g = 2/(N(p-1))``."""
    if p < 2:
        raise InvalidParameter(f"p must be >= 2, got {p}")
    _check_margin(J, gen)
    N, R, r = J.dim, bounds.R, bounds.r
    g = 2.0 / (N * (p - 1))
    C = estimate_cp_for(ledger, p) * ledger.C_cor
    sym = kernel_symbol(J)

    def sides(u):
        n1 = lp_norm(u, 1)
        if n1 == 0:
            return 0.0, 0.0
        X = lp_power(u, p)
        return dissipation_fast(J, u, p, sym), C * r * _nash_min(R, N, g, p * g, n1, X)

    return _run(sides, gen, J.grid, trials, f"main p={p:g}")


def estimate_cp_for(ledger: ConstantLedger, p: float) -> float:
    from .bounds import estimate_cp

    return ledger.c_p if p == ledger.p else estimate_cp(float(p))


def check_l2_inequality(J: ConvKernel, bounds: KernelBounds, ledger: ConstantLedger, gen: FieldGenerator, trials: int) -> InequalityReport:
    """``D_2(u) >= C_cor r min{R^(N+2) |u|_1^(-4/N) |u|_2^(2+4/N), R^N |u|_2^2}``."""
    _check_margin(J, gen)
    N, R, r = J.dim, bounds.R, bounds.r
    g = 2.0 / N
    sym = kernel_symbol(J)

    def sides(u):
        n1 = lp_norm(u, 1)
        if n1 == 0:
            return 0.0, 0.0
        X = lp_power(u, 2)
        return dissipation_fast(J, u, 2, sym), ledger.C_cor * r * _nash_min(R, N, g, 2 * g, n1, X)

    return _run(sides, gen, J.grid, trials, "l2")


def _dk_energy(u: Field, k: float, xi2=None) -> float:
    c2 = np.abs(forward(u).coefficients) ** 2
    if k == 0:
        return float(np.sum(c2))
    xi2 = frequency_norm2(u.grid) if xi2 is None else xi2
    return float(np.sum(xi2**k * c2))


def check_dk_inequality(J: ConvKernel, bounds: KernelBounds, ledger: ConstantLedger, k: float, gen: FieldGenerator, trials: int) -> InequalityReport:
    """``D_2(D^k u) >= C r min{R^(N+2) |u|_1^(-4/(N+2k)) |D^k u|_2^(2+4/(N+2k)), R^N |D^k u|_2^2}``."""
    if k < 0:
        raise InvalidParameter(f"k must be >= 0, got {k}")
    _check_margin(J, gen)
    N, R, r = J.dim, bounds.R, bounds.r
    g = 2.0 / (N + 2 * k)
    C = dk_chain_constant(N, k, ledger.C1)
    sym = kernel_symbol(J)
    xi2 = frequency_norm2(J.grid)

    def sides(u):
        n1 = lp_norm(u, 1)
        E = _dk_energy(u, k, xi2)
        if n1 == 0 or E == 0:
            return 0.0, 0.0
        return dissipation_Dk(J, u, k, sym), C * r * _nash_min(R, N, g, 2 * g, n1, E)

    return _run(sides, gen, J.grid, trials, f"dk k={k:g}")


def check_gradient_inequality(J: ConvKernel, bounds: KernelBounds, ledger: ConstantLedger, gen: FieldGenerator, trials: int) -> InequalityReport:
    """``sum_j D_2(d_j u) >= C r min{R^(N+2) |u|_1^(-4/(N+2)) |grad u|_2^(2+4/(N+2)), R^N |grad u|_2^2}``."""
    _check_margin(J, gen)
    N, R, r = J.dim, bounds.R, bounds.r
    g = 2.0 / (N + 2)
    sym = kernel_symbol(J)

    def sides(u):
        n1 = lp_norm(u, 1)
        G = sum(lp_power(du, 2) for du in gradient(u))
        if n1 == 0 or G == 0:
            return 0.0, 0.0
        return dissipation_gradient(J, u, sym), ledger.C_grad * r * _nash_min(R, N, g, 2 * g, n1, G)

    return _run(sides, gen, J.grid, trials, "gradient")


def estimate_best_constant(
    J: ConvKernel, bounds: KernelBounds, p: float, gen: FieldGenerator, trials: int, refine_steps: int = 0
) -> float:
    """Smallest observed ``D_p(u) / (r min{...})``; an upper estimate of the sharp constant.

    The worst trial is then polished by ``refine_steps`` random local moves of
    the generator parameters, accepting only improvements.
    """
    if trials < 100:
        raise InvalidParameter("estimate_best_constant needs at least 100 trials")
    _check_margin(J, gen)
    N, R, r = J.dim, bounds.R, bounds.r
    g = 2.0 / (N * (p - 1))
    sym = kernel_symbol(J)
    grid = J.grid

    def ratio(u):
        n1 = lp_norm(u, 1)
        if n1 == 0:
            return np.inf
        X = lp_power(u, p)
        return dissipation_fast(J, u, p, sym) / (r * _nash_min(R, N, g, p * g, n1, X))

    best, best_i = np.inf, 0
    for i in range(trials):
        q = ratio(gen.generate(grid, i))
        if q < best:
            best, best_i = q, i
    if refine_steps > 0:
        rng = np.random.default_rng(np.random.SeedSequence([int(gen.seed), 2**32 + 1]))
        prm = gen.params(grid, best_i)
        A = gen._inner(grid)
        lo, hi = gen.width_range
        for _ in range(refine_steps):
            trial = {k: v.copy() for k, v in prm.items()}
            trial["widths"] = np.clip(trial["widths"] * np.exp(0.1 * rng.normal(size=trial["widths"].shape)), lo, min(hi, A / 4))
            trial["centers"] = np.clip(trial["centers"] + 0.05 * A * rng.normal(size=trial["centers"].shape), -A, A)
            trial["amps"] = trial["amps"] * np.exp(0.1 * rng.normal(size=trial["amps"].shape))
            q = ratio(gen.render(grid, trial))
            if q < best:
                best, prm = q, trial
    return float(best)


def check_interpolation_chain(gen: FieldGenerator, trials: int, p: float, grid: Optional[GridSpec] = None, qs=(1.25, 1.5, 1.75)) -> InequalityReport:
    """Hoelder interpolation: ``|u|_{p/2} <= |u|_1^(1/(p-1)) |u|_p^((p-2)/(p-1))`` and
    ``|u|_q^q <= |u|_1^(2-q) |u|_2^(2(q-1))`` for each ``q`` in ``qs``.

    Ratios are RHS/LHS.  Equality is attained by indicator fields, so the
    violation threshold allows 1e-12 of relative rounding.
    """
    if p < 2:
        raise InvalidParameter(f"p must be >= 2, got {p}")
    grid = grid if grid is not None else GridSpec(1, 16.0, 256)

    def sides(u):
        n1 = lp_norm(u, 1)
        if n1 == 0:
            return 0.0, 0.0
        n2 = lp_norm(u, 2)
        np_ = lp_norm(u, p)
        worst = (n1 ** (1 / (p - 1)) * np_ ** ((p - 2) / (p - 1))) / lp_norm(u, p / 2)
        for q in qs:
            worst = min(worst, n1 ** (2 - q) * n2 ** (2 * (q - 1)) / lp_power(u, q))
        return worst, 1.0

    return _run(sides, gen, grid, trials, f"interpolation p={p:g}", tol=1e-12)
