"""Convolution kernels ``J(z)``, two-point kernels ``K(x, y)`` and their checks.

A :class:`ConvKernel` is sampled on the offset lattice ``z = m h`` of its grid
(centered order, ``m = -n/2 .. n/2-1`` per axis).  Standard kernels are radial
and keep their radial profile so they can be resampled after a change of
scale (rescaling, dispersal).  Samples that fall exactly on the support sphere
get half weight, so the 1-D box kernel integrates exactly.

A :class:`GeneralKernel` is a dense ``n^N x n^N`` matrix with
``matrix[i, j] = K(x_i, y_j)``: rows index the arrival point, columns the
departure point.  Mass conservation means ``sigma_j = h^N sum_i K_ij``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma as _gamma_fn, pi
from typing import Callable, Optional

import numpy as np

from .errors import HypothesisViolated, InvalidParameter, Unsupported
from .grid import Field, GridSpec

__all__ = [
    "ConvKernel",
    "KernelBounds",
    "GeneralKernel",
    "RescaledKernel",
    "unit_ball_volume",
    "make_standard_kernel",
    "unit_ball_kernel",
    "box_kernel",
    "verify_hypothesis_J",
    "verify_hypothesis_K",
    "second_moment_normalization",
    "rescale_kernel",
    "convolution_matrix",
    "dispersal_kernel",
    "detailed_balance_residual",
    "pair_offsets",
]

KINDS = ("box", "bump", "truncated_gaussian")
_EDGE_RTOL = 1e-9


def unit_ball_volume(dim: int) -> float:
    """``omega_N``, the Lebesgue measure of the unit ball in ``R^N``."""
    return pi ** (dim / 2) / _gamma_fn(dim / 2 + 1)


@dataclass(frozen=True, eq=False)
class ConvKernel:
    grid: GridSpec
    profile: np.ndarray = field(repr=False)
    support_radius: float
    is_even: bool = True
    kind: str = "custom"
    radial: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        prof = np.array(self.profile, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(prof)):
            raise InvalidParameter("kernel profile must be finite")
        if np.any(prof < 0):
            raise InvalidParameter("kernel profile must be nonnegative")
        if not 0 < self.support_radius < self.grid.half_width:
            raise InvalidParameter(
                f"support radius {self.support_radius} must lie in (0, L={self.grid.half_width})"
            )
        if np.any(prof[self.grid.radius() > self.support_radius * (1 + _EDGE_RTOL)] != 0):
            raise InvalidParameter("kernel profile has mass outside its support radius")
        if self.is_even and not np.array_equal(prof, _reflect(prof)):
            raise InvalidParameter("kernel flagged even but J(-z) != J(z)")
        prof.setflags(write=False)
        object.__setattr__(self, "profile", prof)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def mass(self) -> float:
        return float(self.grid.cell_volume * self.profile.sum())

    def fft_order(self) -> np.ndarray:
        """Profile rearranged so that offset ``m`` sits at index ``m mod n``."""
        return np.fft.ifftshift(self.profile)

    def evaluate(self, rho: np.ndarray) -> np.ndarray:
        """Kernel value at radii ``rho`` (radial kernels only)."""
        if self.radial is None:
            raise Unsupported(f"{self.kind} kernel carries no radial profile")
        return _radial_samples(self.radial, np.asarray(rho, dtype=float), self.support_radius)


@dataclass(frozen=True)
class KernelBounds:
    """Lower bound ``J >= r`` on ``|z| < R`` and the integral bound ``C_K``."""

    r: float
    R: float
    C_K: float

    def __post_init__(self):
        if not (self.r > 0 and self.R > 0):
            raise InvalidParameter(f"need r > 0 and R > 0, got r={self.r}, R={self.R}")


@dataclass(frozen=True, eq=False)
class GeneralKernel:
    grid: GridSpec
    matrix: np.ndarray = field(repr=False)
    sigma: Field = field(repr=False)
    sigma_mode: str = "mass_conserving"
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        K = np.asarray(self.matrix, dtype=float)
        n = self.grid.size
        if K.shape != (n, n):
            raise InvalidParameter(f"kernel matrix must be {n}x{n}, got {K.shape}")
        if not np.all(np.isfinite(K)) or np.any(K < 0):
            raise InvalidParameter("kernel entries must be finite and nonnegative")
        if self.sigma_mode not in ("mass_conserving", "diffusion_form", "custom"):
            raise InvalidParameter(f"unknown sigma_mode {self.sigma_mode!r}")
        K.setflags(write=False)
        object.__setattr__(self, "matrix", K)
        target = {
            "mass_conserving": self.column_integrals,
            "diffusion_form": self.row_integrals,
        }.get(self.sigma_mode)
        if target is not None:
            expected = target()
            got = self.sigma.flat
            if np.max(np.abs(got - expected)) > 1e-12 * max(np.max(np.abs(expected)), 1e-300):
                raise InvalidParameter(f"sigma does not satisfy the {self.sigma_mode} relation")

    @classmethod
    def from_matrix(cls, grid: GridSpec, matrix, sigma_mode="mass_conserving", sigma=None, info=None):
        K = np.asarray(matrix, dtype=float)
        h_n = grid.cell_volume
        if sigma_mode == "mass_conserving":
            sigma = Field(grid, h_n * K.sum(axis=0))
        elif sigma_mode == "diffusion_form":
            sigma = Field(grid, h_n * K.sum(axis=1))
        elif sigma is None:
            raise InvalidParameter("custom sigma_mode needs an explicit sigma")
        elif not isinstance(sigma, Field):
            sigma = Field(grid, np.broadcast_to(np.asarray(sigma, dtype=float), grid.shape))
        return cls(grid, K, sigma, sigma_mode, dict(info or {}))

    def column_integrals(self) -> np.ndarray:
        """``int K(y, x_j) dy``: total outgoing jump rate from each departure point."""
        return self.grid.cell_volume * self.matrix.sum(axis=0)

    def row_integrals(self) -> np.ndarray:
        return self.grid.cell_volume * self.matrix.sum(axis=1)

    @property
    def C_K(self) -> float:
        return float(max(self.column_integrals().max(), self.row_integrals().max()))

    def is_mass_conserving(self, rtol=1e-10) -> bool:
        cols = self.column_integrals()
        return bool(np.max(np.abs(self.sigma.flat - cols)) <= rtol * max(np.max(np.abs(cols)), 1e-300))

    def apply(self, u: np.ndarray) -> np.ndarray:
        """``(L u)(x) = int K(x, y) u(y) dy - sigma(x) u(x)`` on flat arrays."""
        return self.grid.cell_volume * (self.matrix @ u) - self.sigma.flat * u


@dataclass(frozen=True, eq=False)
class RescaledKernel:
    """``J_eps(z) = C(J) eps^-(N+2) J(z / eps)`` together with its ingredients."""

    base: ConvKernel
    epsilon: float
    normalization: float
    kernel: ConvKernel


def _reflect(a: np.ndarray) -> np.ndarray:
    # index m -> -m in centered order: entry 0 (m = -n/2) has no partner and maps to itself
    out = a
    for ax in range(a.ndim):
        out = np.concatenate(
            [np.take(out, [0], axis=ax), np.flip(np.take(out, range(1, a.shape[ax]), axis=ax), axis=ax)],
            axis=ax,
        )
    return out


def _radial_samples(radial, rho, R):
    inside = rho < R * (1 - _EDGE_RTOL)
    edge = np.abs(rho - R) <= R * _EDGE_RTOL
    out = np.zeros_like(rho)
    out[inside] = radial(rho[inside])
    if np.any(edge):
        out[edge] = 0.5 * radial(np.full(edge.sum(), float(R)))
    return out


def _standard_radial(kind, R_sup, height_or_scale):
    a = float(height_or_scale)
    if kind == "box":
        return lambda rho: np.full_like(rho, a)
    if kind == "bump":
        def bump(rho):
            s = 1.0 - (rho / R_sup) ** 2
            out = np.zeros_like(rho)
            pos = s > 0
            out[pos] = a * np.exp(1.0 - 1.0 / s[pos])
            return out
        return bump
    if kind == "truncated_gaussian":
        return lambda rho: np.exp(-((rho / a) ** 2))
    raise InvalidParameter(f"unknown kernel kind {kind!r}; expected one of {KINDS}")


def make_standard_kernel(kind: str, R_sup: float, height_or_scale: float, grid: GridSpec) -> ConvKernel:
    """Sample one of the catalog kernels on ``grid``.

    ``box``: constant ``height`` on ``|z| < R_sup``.
    ``bump``: ``height * exp(1 - 1/(1 - |z|^2/R_sup^2))``, peak value ``height``.
    ``truncated_gaussian``: ``exp(-|z|^2 / scale^2)`` cut at ``R_sup``.
    """
    if not 0 < R_sup < grid.half_width:
        raise InvalidParameter(f"R_sup must lie in (0, L={grid.half_width}), got {R_sup}")
    if not height_or_scale > 0:
        raise InvalidParameter("height/scale must be positive")
    radial = _standard_radial(kind, R_sup, height_or_scale)
    profile = _radial_samples(radial, grid.radius(), R_sup)
    return ConvKernel(grid, profile, float(R_sup), True, kind, radial)


def box_kernel(grid: GridSpec, R: float, height: float) -> ConvKernel:
    return make_standard_kernel("box", R, height, grid)


def unit_ball_kernel(grid: GridSpec) -> ConvKernel:
    """Indicator of the unit ball scaled to have discrete mass exactly one."""
    shape = box_kernel(grid, 1.0, 1.0)
    return box_kernel(grid, 1.0, 1.0 / shape.mass)


def verify_hypothesis_J(J: ConvKernel, R_test: float) -> KernelBounds:
    """Measure ``r = min J`` over the sampled offsets with ``|z| < R_test``."""
    if not 0 < R_test <= J.support_radius * (1 + _EDGE_RTOL):
        raise InvalidParameter(f"R_test must lie in (0, {J.support_radius}], got {R_test}")
    ball = J.grid.radius() < R_test * (1 - _EDGE_RTOL)
    r = float(J.profile[ball].min())
    if r <= 0:
        raise HypothesisViolated(f"kernel vanishes inside the ball of radius {R_test}")
    return KernelBounds(r=r, R=float(R_test), C_K=J.mass)


def pair_offsets(grid: GridSpec, rows=None) -> tuple[np.ndarray, ...]:
    """Minimal-image lattice offsets ``m`` with ``x_i - x_j = m h``.

    Returns one integer array per axis of shape ``(len(rows), n^N)`` with entries in
    ``[-n/2, n/2)``.
    """
    n = grid.points_per_axis
    idx = np.unravel_index(np.arange(grid.size), grid.shape)
    rows = np.arange(grid.size) if rows is None else np.asarray(rows)
    out = []
    for a in idx:
        d = a[rows][:, None] - a[None, :]
        out.append((d + n // 2) % n - n // 2)
    return tuple(out)


def _pair_distance(grid: GridSpec, rows=None) -> np.ndarray:
    h = grid.spacing
    return np.sqrt(sum((h * m.astype(float)) ** 2 for m in pair_offsets(grid, rows)))


def verify_hypothesis_K(K: GeneralKernel, R_test: float) -> KernelBounds:
    """``r = min K(x_i, x_j)`` over node pairs at periodic distance ``< R_test``."""
    if not 0 < R_test < K.grid.half_width:
        raise InvalidParameter(f"R_test must lie in (0, L), got {R_test}")
    near = _pair_distance(K.grid) < R_test * (1 - _EDGE_RTOL)
    r = float(K.matrix[near].min())
    if r <= 0:
        raise HypothesisViolated(f"K vanishes for some |x - y| < {R_test}")
    return KernelBounds(r=r, R=float(R_test), C_K=K.C_K)


def second_moment_normalization(J: ConvKernel) -> float:
    """``C(J)`` defined by ``1/C(J) = 1/2 int J(z) z_N^2 dz`` (midpoint quadrature)."""
    zN = J.grid.offsets()[-1]
    moment = 0.5 * J.grid.cell_volume * np.sum(J.profile * zN * zN)
    if moment <= 0:
        raise InvalidParameter("kernel has zero second moment")
    return float(1.0 / moment)


def rescale_kernel(J: ConvKernel, eps: float) -> RescaledKernel:
    if not 0 < eps <= 1:
        raise InvalidParameter(f"epsilon must lie in (0, 1], got {eps}")
    if J.radial is None:
        raise Unsupported("rescaling needs a kernel with a radial profile")
    R_eps = eps * J.support_radius
    if not R_eps < J.grid.half_width:
        raise InvalidParameter("rescaled support exceeds the box")
    N = J.dim
    c = second_moment_normalization(J)
    factor = c / eps ** (N + 2)
    radial = J.radial
    scaled = lambda rho: factor * radial(rho / eps)  # noqa: E731
    profile = _radial_samples(scaled, J.grid.radius(), R_eps)
    kernel = ConvKernel(J.grid, profile, R_eps, True, f"{J.kind}_eps", scaled)
    return RescaledKernel(J, float(eps), c, kernel)


def convolution_matrix(J: ConvKernel) -> GeneralKernel:
    """Dense ``K(x, y) = J(x - y)`` with the mass-conserving loss rate."""
    m = pair_offsets(J.grid)
    n = J.grid.points_per_axis
    K = J.profile[tuple(mi + n // 2 for mi in m)]
    return GeneralKernel.from_matrix(J.grid, K, "mass_conserving", info={"source": "convolution"})


def dispersal_kernel(J: ConvKernel, g: Field) -> GeneralKernel:
    """``K(x, y) = J((x - y)/g(y)) / g(y)`` with ``sigma = 1``.

    Each column is rescaled so that ``h sum_i K(x_i, y_j) = 1`` exactly; the
    largest raw deviation is kept in ``info["raw_column_defect"]``.
    """
    grid = J.grid
    if grid.dim != 1:
        raise InvalidParameter("the dispersal model is one-dimensional")
    gv = g.flat
    if np.any(gv <= 0):
        raise InvalidParameter("dispersal scale g must be positive")
    if not gv.max() * J.support_radius < grid.half_width:
        raise InvalidParameter("max(g) * R_sup must stay below L")
    if abs(J.mass - 1.0) > 1e-3:
        raise InvalidParameter(f"dispersal kernels need unit mass, got {J.mass}")
    dist = np.abs(grid.spacing * pair_offsets(grid)[0].astype(float))
    K = J.evaluate(dist / gv[None, :]) / gv[None, :]
    cols = grid.spacing * K.sum(axis=0)
    raw_defect = float(np.max(np.abs(cols - 1.0)))
    K = K / cols[None, :]
    info = {"source": "dispersal", "raw_column_defect": raw_defect}
    return GeneralKernel.from_matrix(grid, K, "custom", sigma=np.ones(grid.size), info=info)


def detailed_balance_residual(K: GeneralKernel, u_inf: Field) -> float:
    """``max_ij |K(x_i,x_j) u(x_j) - K(x_j,x_i) u(x_i)|``."""
    u = u_inf.flat
    if np.any(u <= 0):
        raise InvalidParameter("u_inf must be positive")
    flux = K.matrix * u[None, :]
    return float(np.max(np.abs(flux - flux.T)))
