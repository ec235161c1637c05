"""Layer potentials of odd homogeneous kernels on planar C^{1,1} curves,
with log-Lipschitz (omega_1) regularity diagnostics."""
from ._accel import backend_name
from .boundary import Boundary, boundary_from_config, circle, ellipse, fourier_curve, star
from .errors import (
    ConfigError,
    ConstructionError,
    DomainError,
    GeometryError,
    MirandaError,
    QuadratureConvergenceError,
    SingularityError,
)
from .kernels import HomogeneousKernel, kernel_from_config, riesz
from .modulus import OMEGA_1, Modulus, PowerModulus, SampledFunction, seminorm_estimate
from .potential import Density, eval_K, eval_K_many, gradient_scan, make_density, split_diagnostics
from .tubular import TubularField, build_tubular_field

__version__ = "0.1.0"

__all__ = [
    "Boundary", "ConfigError", "ConstructionError", "Density", "DomainError", "GeometryError",
    "HomogeneousKernel", "MirandaError", "Modulus", "OMEGA_1", "PowerModulus",
    "QuadratureConvergenceError", "SampledFunction", "SingularityError", "TubularField",
    "backend_name", "boundary_from_config", "build_tubular_field", "circle", "ellipse", "eval_K",
    "eval_K_many", "fourier_curve", "gradient_scan", "kernel_from_config", "make_density", "riesz",
    "seminorm_estimate", "split_diagnostics", "star",
]
