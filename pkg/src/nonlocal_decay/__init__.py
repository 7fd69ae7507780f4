"""Nonlocal diffusion on periodic grids, energy inequalities and decay envelopes.

Submodules: ``grid``, ``kernels``, ``spectral``, ``dissipation``, ``evolution``,
``bounds``, ``verify``, ``dispersal`` and ``cli``.
"""
from .errors import (
    ConfigError,
    DegenerateKernel,
    HypothesisViolated,
    InsufficientData,
    InvalidParameter,
    NoConvergence,
    NonlocalDecayError,
    PositivityLost,
    StepRejected,
    Unsupported,
)
from .grid import Field, GridSpec, boundary_mass, load_field, lp_norm, mass, save_field
from .kernels import (
    ConvKernel,
    GeneralKernel,
    KernelBounds,
    dispersal_kernel,
    make_standard_kernel,
    rescale_kernel,
    verify_hypothesis_J,
)
from .evolution import TimeSeries, run_experiment
from .bounds import ConstantLedger, DecayEnvelope, constants_from_proof

__version__ = "0.1.0"
