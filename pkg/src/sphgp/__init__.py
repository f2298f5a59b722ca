"""Sparse variational GPs with spherical inter-domain inducing features.

Zonal kernels on the bias-augmented unit sphere, spherical-harmonic and
neural-activation inducing features, and an orthogonally-decoupled
variational family (SVGP / ODVGP / SOLVE modes).
"""

from jax import config as _jax_config

# All tolerances in this library assume double precision.
_jax_config.update("jax_enable_x64", True)

from .special_math import (  # noqa: E402
    SphereGeometry,
    QuadratureRule,
    gegenbauer,
    gegenbauer_at_one,
    num_harmonics,
    sphere_area,
    build_quadrature,
    funk_hecke_coefficient,
)
from .kernels import ZonalKernel, Spectrum, kernel_spectrum  # noqa: E402
from .harmonics import HarmonicBasis, build_harmonic_basis  # noqa: E402
from .features import InducingSet, ActivationShape  # noqa: E402
from .models import GPModel, VariationalGaussian, PosteriorGaussian  # noqa: E402

__all__ = [
    "SphereGeometry",
    "QuadratureRule",
    "gegenbauer",
    "gegenbauer_at_one",
    "num_harmonics",
    "sphere_area",
    "build_quadrature",
    "funk_hecke_coefficient",
    "ZonalKernel",
    "Spectrum",
    "kernel_spectrum",
    "HarmonicBasis",
    "build_harmonic_basis",
    "InducingSet",
    "ActivationShape",
    "GPModel",
    "VariationalGaussian",
    "PosteriorGaussian",
]
