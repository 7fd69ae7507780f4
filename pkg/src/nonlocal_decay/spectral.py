"""Discrete Fourier machinery on the periodic box.

Two conventions coexist on purpose:

* fields use the isometric transform ``c_m = h^N (2L)^(-N/2) sum_j u_j e^{-i xi_m . (x_j - x_0)}``
  so that ``sum |c_m|^2 = ||u||_2^2`` exactly (the phase is taken relative
  to the first node, which keeps the coefficient array Hermitian);
* kernels use the mass-normalised symbol ``J^(xi) = h^N sum_z J(z) e^{-i xi . z}``
  so that ``J^(0) = int J`` and ``(J * u)^ = J^ u^``.

Frequencies are ``xi = pi m / L`` with ``m`` in FFT order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateKernel, InvalidParameter, Unsupported
from .grid import Field, GridSpec
from .kernels import ConvKernel

__all__ = [
    "Spectrum",
    "KernelSymbol",
    "frequencies",
    "frequency_norm2",
    "forward",
    "inverse",
    "kernel_symbol",
    "convolve",
    "apply_multiplier",
    "symbol_lower_bound_constant",
    "fractional_derivative",
    "gradient",
    "dk_norm",
]


def frequencies(grid: GridSpec) -> tuple[np.ndarray, ...]:
    """Physical frequencies ``xi_j`` on the full FFT-ordered lattice, one array per axis."""
    ax = 2 * np.pi * np.fft.fftfreq(grid.points_per_axis, d=grid.spacing)
    return tuple(np.meshgrid(*([ax] * grid.dim), indexing="ij"))


def frequency_norm2(grid: GridSpec) -> np.ndarray:
    return sum(xi * xi for xi in frequencies(grid))


@dataclass(frozen=True, eq=False)
class Spectrum:
    grid: GridSpec
    coefficients: np.ndarray = field(repr=False)

    def energy(self) -> float:
        return float(np.sum(np.abs(self.coefficients) ** 2))


@dataclass(frozen=True, eq=False)
class KernelSymbol:
    grid: GridSpec
    values: np.ndarray = field(repr=False)

    @property
    def mass(self) -> float:
        return float(self.values.flat[0])


def _field_scale(grid: GridSpec) -> float:
    return grid.cell_volume * (2 * grid.half_width) ** (-grid.dim / 2)


def forward(u: Field) -> Spectrum:
    return Spectrum(u.grid, np.fft.fftn(u.values) * _field_scale(u.grid))


def inverse(s: Spectrum) -> Field:
    vals = np.fft.ifftn(s.coefficients / _field_scale(s.grid)).real
    return Field(s.grid, vals)


def kernel_symbol(J: ConvKernel) -> KernelSymbol:
    if not J.is_even:
        raise Unsupported("the symbol of a non-even kernel is complex")
    vals = (np.fft.fftn(J.fft_order()) * J.grid.cell_volume).real
    return KernelSymbol(J.grid, vals)


def apply_multiplier(u: Field, multiplier: np.ndarray) -> Field:
    """Field whose spectrum is ``multiplier * u^``; the multiplier must keep the result real."""
    return Field(u.grid, np.fft.ifftn(multiplier * np.fft.fftn(u.values)).real)


def convolve(J: ConvKernel | KernelSymbol, u: Field) -> Field:
    """Periodic ``(J * u)(x_i) = h^N sum_j J(x_i - x_j) u_j``."""
    sym = J if isinstance(J, KernelSymbol) else kernel_symbol(J)
    return apply_multiplier(u, sym.values)


def symbol_lower_bound_constant(symbol: KernelSymbol) -> float:
    """Smallest ``C1`` with ``1 - J^(xi) >= min(1, |xi|^2) / C1`` on all nonzero grid frequencies."""
    if abs(symbol.mass - 1.0) > 1e-10:
        raise InvalidParameter(f"symbol must be normalised (J^(0) = 1), got {symbol.mass}")
    xi2 = frequency_norm2(symbol.grid).reshape(-1)[1:]
    deficit = 1.0 - symbol.values.reshape(-1)[1:]
    if np.any(deficit <= 1e-14):
        raise DegenerateKernel("J^(xi) reaches J^(0) at a nonzero frequency")
    return float(np.max(np.minimum(1.0, xi2) / deficit))


def fractional_derivative(u: Field, k: float) -> Field:
    """``D^k u`` with spectrum ``-|xi|^k u^``; ``D^0`` is the identity."""
    if k < 0:
        raise InvalidParameter(f"k must be >= 0, got {k}")
    if k == 0:
        return u
    return apply_multiplier(u, -(frequency_norm2(u.grid) ** (k / 2)))


def gradient(u: Field) -> list[Field]:
    n = u.grid.points_per_axis
    uh = np.fft.fftn(u.values)
    out = []
    for j, xi in enumerate(frequencies(u.grid)):
        mult = 1j * xi
        nyquist = [slice(None)] * u.grid.dim
        nyquist[j] = n // 2
        mult[tuple(nyquist)] = 0.0
        out.append(Field(u.grid, np.fft.ifftn(mult * uh).real))
    return out


def dk_norm(u: Field, k: float) -> float:
    """``||D^k u||_2`` by Parseval."""
    if k < 0:
        raise InvalidParameter(f"k must be >= 0, got {k}")
    c2 = np.abs(forward(u).coefficients) ** 2
    if k > 0:
        c2 = c2 * frequency_norm2(u.grid) ** k
    return float(np.sqrt(np.sum(c2)))
