"""Energy dissipation functionals.

``dissipation_direct`` is the literal double sum and serves as the reference;
the spectral forms are what the simulations and the inequality checks use.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParameter, Unsupported
from .grid import Field
from .kernels import ConvKernel, GeneralKernel, pair_offsets
from .spectral import KernelSymbol, convolve, forward, frequency_norm2, gradient, kernel_symbol

__all__ = [
    "EntropySpec",
    "entropy_power",
    "entropy_square",
    "entropy_quartic",
    "phi_power",
    "dissipation_direct",
    "dissipation_fast",
    "dissipation_Dk",
    "dissipation_gradient",
    "relative_entropy",
    "relative_entropy_dissipation",
]

_ROW_CHUNK = 1 << 20  # pair entries per block in the O(n^2) sums


def phi_power(s, q: float):
    """Odd extension of the power map, ``|s|^q sign(s)``."""
    s = np.asarray(s, dtype=float)
    out = np.abs(s) ** q * np.sign(s)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EntropySpec:
    phi: Callable
    phi_prime: Callable
    label: str

    def __post_init__(self):
        rng = np.random.default_rng(20240601)
        pts = np.sort(rng.uniform(-10.0, 10.0, size=(100, 3)), axis=1)
        a, b, c = pts.T
        lam = (c - b) / (c - a)
        chord = lam * self.phi(a) + (1 - lam) * self.phi(c)
        fb = self.phi(b)
        if np.any(fb > chord + 1e-12 * np.maximum(np.abs(chord), 1.0)):
            raise InvalidParameter(f"entropy {self.label!r} failed the sampled convexity test")


def entropy_power(p: float) -> EntropySpec:
    if p <= 1:
        raise InvalidParameter("|s|^p is convex only for p >= 1")
    return EntropySpec(lambda s: np.abs(s) ** p, lambda s: p * phi_power(s, p - 1), f"abs_pow_{p:g}")


def entropy_square() -> EntropySpec:
    return EntropySpec(lambda s: np.asarray(s) ** 2, lambda s: 2 * np.asarray(s), "square")


def entropy_quartic() -> EntropySpec:
    return EntropySpec(lambda s: np.asarray(s) ** 4, lambda s: 4 * np.asarray(s) ** 3, "quartic")


def _row_blocks(size):
    step = max(1, _ROW_CHUNK // size)
    for start in range(0, size, step):
        yield np.arange(start, min(size, start + step))


def _pair_weights(kernel, rows):
    if isinstance(kernel, GeneralKernel):
        return kernel.matrix[rows]
    n = kernel.grid.points_per_axis
    m = pair_offsets(kernel.grid, rows)
    return kernel.profile[tuple(mi + n // 2 for mi in m)]


def dissipation_direct(kernel: ConvKernel | GeneralKernel, u: Field, p: float) -> float:
    """``(p/2) h^2N sum_ij k(x_i, x_j) (u_i - u_j)(phi_{p-1}(u_i) - phi_{p-1}(u_j))``.

    ``k`` is ``J(x_i - x_j)`` (minimal periodic image) for a convolution kernel,
    or the matrix entry for a general kernel.
    """
    if p < 2:
        raise InvalidParameter(f"p must be >= 2, got {p}")
    v = u.flat
    ph = phi_power(v, p - 1)
    total = 0.0
    for rows in _row_blocks(v.size):
        w = _pair_weights(kernel, rows)
        total += np.sum(w * (v[rows, None] - v[None, :]) * (ph[rows, None] - ph[None, :]))
    return float(0.5 * p * u.grid.cell_volume**2 * total)


def dissipation_fast(J: ConvKernel, u: Field, p: float, symbol: Optional[KernelSymbol] = None) -> float:
    """``p h^N sum_i phi_{p-1}(u_i) ((int J) u_i - (J*u)_i)`` with a spectral convolution."""
    if p < 2:
        raise InvalidParameter(f"p must be >= 2, got {p}")
    if not J.is_even:
        raise Unsupported("the single-sum form needs an even kernel")
    sym = symbol if symbol is not None else kernel_symbol(J)
    conv = convolve(sym, u).values
    v = u.values
    return float(p * u.grid.cell_volume * np.sum(phi_power(v, p - 1) * (sym.mass * v - conv)))


def dissipation_Dk(J: ConvKernel, u: Field, k: float, symbol: Optional[KernelSymbol] = None) -> float:
    """``2 sum_xi (J^(0) - J^(xi)) |xi|^2k |u^(xi)|^2``."""
    if k < 0:
        raise InvalidParameter(f"k must be >= 0, got {k}")
    sym = symbol if symbol is not None else kernel_symbol(J)
    weight = sym.mass - sym.values
    if k > 0:
        weight = weight * frequency_norm2(u.grid) ** k
    return float(2.0 * np.sum(weight * np.abs(forward(u).coefficients) ** 2))


def dissipation_gradient(J: ConvKernel, u: Field, symbol: Optional[KernelSymbol] = None) -> float:
    """Sum of the L2 dissipations of the gradient components."""
    sym = symbol if symbol is not None else kernel_symbol(J)
    return float(sum(dissipation_fast(J, du, 2, sym) for du in gradient(u)))


def relative_entropy(u: Field, u_inf: Field, spec: EntropySpec) -> float:
    """``int Phi(u / u_inf) u_inf``."""
    w = u_inf.values
    return float(u.grid.cell_volume * np.sum(spec.phi(u.values / w) * w))


def relative_entropy_dissipation(K: GeneralKernel, u_inf: Field, f: Field, spec: EntropySpec) -> float:
    """``h^2N sum_ij K_ij u_inf_j [Phi'(f_i)(f_i - f_j) - Phi(f_i) + Phi(f_j)]``.

    The bracket is a Bregman divergence, so every term is nonnegative; it is
    evaluated pairwise to avoid cancellation between large partial sums.
    """
    w = u_inf.flat
    if np.any(w <= 0):
        raise InvalidParameter("u_inf must be positive")
    fv = f.flat
    Phi = np.asarray(spec.phi(fv), dtype=float)
    dPhi = np.asarray(spec.phi_prime(fv), dtype=float)
    total = 0.0
    for rows in _row_blocks(fv.size):
        bracket = dPhi[rows, None] * (fv[rows, None] - fv[None, :]) - Phi[rows, None] + Phi[None, :]
        total += np.sum(K.matrix[rows] * w[None, :] * bracket)
    return float(K.grid.cell_volume**2 * total)
