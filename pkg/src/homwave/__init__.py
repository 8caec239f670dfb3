"""homwave: a computational laboratory for long-time homogenization of
heterogeneous acoustic waves.

Builds coefficient fields (periodic / quasiperiodic / random), solves the
higher-order corrector hierarchy, evolves dispersive homogenized propagators
and the heterogeneous reference wave, assembles two-scale error budgets, and
measures dispersive decay and eigenstate-spreading quantities.
"""
from . import _kernels
from ._kernels import backend as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
