"""Zonal kernels on the bias-augmented sphere and their level spectra.

A zonal kernel is k(x, x') = (|x~| |x~'|)^p * kappa(xhat . xhat') where
x~ = [x; bias] is the lifted input, xhat its normalization, kappa the shape
function on [-1, 1] and p the homogeneity degree (1 for the first-order
arc-cosine kernel, 0 for stationary families restricted to the sphere by
chordal distance).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import jax.numpy as jnp
import numpy as np

from .special_math import (
    QuadratureRule,
    SphereGeometry,
    build_quadrature,
    default_num_nodes,
    funk_hecke_spectrum,
    num_harmonics,
)

__all__ = [
    "ZonalKernel",
    "Spectrum",
    "DiagnosticsReport",
    "lift_to_sphere",
    "lift_points",
    "shape_value",
    "kernel_eval",
    "kernel_spectrum",
    "mercer_reconstruction",
    "spectrum_diagnostics",
]

FAMILIES = ("arccos1", "matern52", "squaredexp")

# Relative threshold below which kernel coefficients are treated as exact
# zeros (quadrature noise would otherwise break PSD assembly of Kuu).
SPECTRUM_CLAMP_REL = 1e-10


def _default_degree(family: str) -> float:
    return 1.0 if family == "arccos1" else 0.0


@dataclass(frozen=True)
class ZonalKernel:
    family: str
    amplitude: float = 1.0
    lengthscale: float = 1.0
    homogeneity_degree: float | None = None
    bias: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if not self.lengthscale > 0:
            raise ValueError("lengthscale must be positive")
        if self.bias < 0:
            raise ValueError("bias must be nonnegative")
        if self.homogeneity_degree is None:
            object.__setattr__(
                self, "homogeneity_degree", _default_degree(self.family)
            )

    def shape(self, t):
        return shape_value(self.family, t, self.amplitude, self.lengthscale)

    def with_params(self, amplitude=None, lengthscale=None) -> "ZonalKernel":
        return replace(
            self,
            amplitude=self.amplitude if amplitude is None else amplitude,
            lengthscale=self.lengthscale if lengthscale is None else lengthscale,
        )


def shape_value(family: str, t, amplitude=1.0, lengthscale=1.0):
    """Shape function kappa(t), jax-differentiable in the hyperparameters."""
    t = jnp.clip(jnp.asarray(t), -1.0, 1.0)
    # Boundary values at t = +-1 are handled by separate branches carrying
    # the correct one-sided derivatives; the naive formulas have sqrt/arccos
    # singularities there that poison reverse-mode gradients with NaNs.
    if family == "arccos1":
        interior = (t > -1.0) & (t < 1.0)
        ts = jnp.where(interior, t, 0.0)
        inner = (
            jnp.sqrt(1.0 - ts * ts) + ts * (jnp.pi - jnp.arccos(ts))
        ) / jnp.pi
        value = jnp.where(interior, inner, jnp.maximum(t, 0.0))
    elif family == "matern52":
        s2 = jnp.maximum(2.0 - 2.0 * t, 0.0) / lengthscale**2
        pos = s2 > 0
        safe = jnp.where(pos, s2, 1.0)
        s5r = jnp.sqrt(5.0 * safe)
        inner = (1.0 + s5r + 5.0 * safe / 3.0) * jnp.exp(-s5r)
        at_one = 1.0 + 5.0 / (3.0 * lengthscale**2) * (t - 1.0)
        value = jnp.where(pos, inner, at_one)
    elif family == "squaredexp":
        value = jnp.exp(-(2.0 - 2.0 * t) / (2.0 * lengthscale**2))
    else:
        raise ValueError(f"unknown kernel family {family!r}")
    return amplitude * value


def lift_to_sphere(x, bias: float):
    """Map x in R^d to ([x; bias] / |[x; bias]|, |[x; bias]|)."""
    x = jnp.atleast_1d(jnp.asarray(x, dtype=jnp.float64))
    aug = jnp.concatenate([x, jnp.array([bias], dtype=x.dtype)])
    norm = jnp.linalg.norm(aug)
    if float(norm) == 0.0:
        raise ValueError("cannot lift the zero vector with zero bias")
    return aug / norm, norm


def lift_points(X, bias: float):
    """Row-wise lift of an N x d matrix; returns (N x (d+1) unit rows, norms)."""
    X = jnp.atleast_2d(jnp.asarray(X, dtype=jnp.float64))
    aug = jnp.concatenate(
        [X, jnp.full((X.shape[0], 1), bias, dtype=X.dtype)], axis=1
    )
    norms = jnp.linalg.norm(aug, axis=1)
    try:
        ok = bool(jnp.all(norms > 0))
    except Exception:
        ok = True
    if not ok:
        raise ValueError("zero-norm augmented row encountered in lift")
    return aug / norms[:, None], norms


def kernel_eval(kernel: ZonalKernel, X, X2=None):
    """Gram matrix (|x~_n| |x~'_m|)^p kappa(xhat_n . xhat'_m)."""
    return gram(
        kernel.family,
        X,
        X2,
        amplitude=kernel.amplitude,
        lengthscale=kernel.lengthscale,
        degree=kernel.homogeneity_degree,
        bias=kernel.bias,
    )


def gram(family, X, X2=None, *, amplitude, lengthscale, degree, bias):
    Xhat, s1 = lift_points(X, bias)
    if X2 is None:
        X2hat, s2 = Xhat, s1
    else:
        X2hat, s2 = lift_points(X2, bias)
    cos = jnp.clip(Xhat @ X2hat.T, -1.0, 1.0)
    K = shape_value(family, cos, amplitude, lengthscale)
    if degree != 0.0:
        K = K * (s1[:, None] * s2[None, :]) ** degree
    if X2 is None:
        K = 0.5 * (K + K.T)
    return K


@dataclass(frozen=True)
class Spectrum:
    """Per-level projection coefficients with their geometry."""

    geometry: SphereGeometry
    coefficients: np.ndarray
    kind: str  # "kernel" or "activation"

    def __post_init__(self):
        coeff = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "coefficients", coeff)
        if self.kind not in ("kernel", "activation"):
            raise ValueError(f"unknown spectrum kind {self.kind!r}")
        if self.kind == "kernel":
            scale = float(np.max(np.abs(coeff))) if coeff.size else 0.0
            if np.any(coeff < -SPECTRUM_CLAMP_REL * scale - 1e-300):
                raise ValueError("kernel spectrum has a significantly negative level")

    @property
    def max_level(self) -> int:
        return len(self.coefficients) - 1

    @property
    def multiplicities(self) -> np.ndarray:
        return np.array(
            [num_harmonics(self.geometry, ell) for ell in range(self.max_level + 1)]
        )

    def active_levels(self) -> np.ndarray:
        """Levels whose coefficient is a structural nonzero (post-clamp)."""
        return np.nonzero(self.coefficients != 0.0)[0]


def kernel_spectrum(
    kernel: ZonalKernel,
    geometry: SphereGeometry,
    max_level: int,
    rule: QuadratureRule | None = None,
) -> Spectrum:
    """Funk-Hecke coefficients lambda_0..lambda_L of the kernel shape."""
    if max_level < 0:
        raise ValueError("max_level must be nonnegative")
    if rule is None:
        rule = build_quadrature(geometry, default_num_nodes(max_level))
    raw = np.asarray(funk_hecke_spectrum(kernel.shape, max_level, rule))
    scale = float(np.max(np.abs(raw))) if raw.size else 0.0
    clamped = np.where(np.abs(raw) <= SPECTRUM_CLAMP_REL * scale, 0.0, raw)
    clamped = np.maximum(clamped, 0.0)
    return Spectrum(geometry=geometry, coefficients=clamped, kind="kernel")


def mercer_reconstruction(spectrum: Spectrum, t):
    """Truncated Mercer sum sum_l a_l (N_l / area) Cbar_l(t)."""
    from .special_math import gegenbauer_normalized_all

    geometry = spectrum.geometry
    basis = gegenbauer_normalized_all(spectrum.max_level, geometry.alpha, jnp.asarray(t))
    weights = spectrum.coefficients * spectrum.multiplicities / geometry.surface_area
    return jnp.tensordot(jnp.asarray(weights), basis, axes=(0, 0))


@dataclass(frozen=True)
class DiagnosticsReport:
    """Outcome of comparing a feature spectrum against a kernel spectrum."""

    mismatch_levels: tuple
    reverse_mismatch_levels: tuple
    divergent: bool
    partial_sum_increments: np.ndarray
    truncation_residual: float


def _structurally_dead(coefficients: np.ndarray, rel_tol: float = 1e-8) -> np.ndarray:
    """A level is dead when its coefficient is negligible against every later
    level; this isolates structural (parity) zeros from smooth decay."""
    mags = np.abs(np.asarray(coefficients, dtype=float))
    tail_max = np.maximum.accumulate(mags[::-1])[::-1]
    return mags <= rel_tol * tail_max


def spectrum_diagnostics(
    kernel_spec: Spectrum, feature_spec: Spectrum
) -> DiagnosticsReport:
    """Spectral compatibility report for a (kernel, activation-feature) pair.

    Reports levels where one spectrum has a structural zero and the other
    does not, plus a divergence indicator for the feature-norm series
    sum_l N_l varsigma_l^2 / lambda_l whose growth renders the inner
    product between features indeterminate.
    """
    if kernel_spec.geometry != feature_spec.geometry:
        raise ValueError("spectra must share a geometry")
    if kernel_spec.max_level != feature_spec.max_level:
        raise ValueError("spectra must share a truncation level")

    lam = np.asarray(kernel_spec.coefficients, dtype=float)
    sig = np.asarray(feature_spec.coefficients, dtype=float)
    mult = kernel_spec.multiplicities.astype(float)
    n_levels = lam.size

    kernel_dead = _structurally_dead(lam)
    feature_dead = _structurally_dead(sig)
    mismatch = tuple(np.nonzero(feature_dead & ~kernel_dead)[0].tolist())
    reverse = tuple(np.nonzero(kernel_dead & ~feature_dead)[0].tolist())

    increments = np.zeros(n_levels)
    valid = ~feature_dead & ~kernel_dead & (lam > 0.0)
    increments[valid] = sig[valid] ** 2 / lam[valid] * mult[valid]
    total = increments.sum()

    # The feature has real mass on a level the kernel cannot support at all.
    lam_floor = 1e-12 * (np.max(lam) if lam.size else 0.0)
    sig_floor = 1e-12 * (np.max(sig**2) if sig.size else 0.0)
    indeterminate = bool(np.any((lam <= lam_floor) & (sig**2 > sig_floor)))

    quartile_start = n_levels - max(1, n_levels // 4)
    tail = increments[quartile_start:]
    significant = tail[tail > 1e-12 * max(total, 1e-300)]
    growing = bool(
        significant.size >= 2
        and np.all(np.diff(significant) >= -1e-9 * significant[:-1])
    )
    divergent = indeterminate or growing

    kernel_mass = lam * mult
    mass_total = kernel_mass.sum()
    residual = float(kernel_mass[-1] / mass_total) if mass_total > 0 else 0.0

    return DiagnosticsReport(
        mismatch_levels=mismatch,
        reverse_mismatch_levels=reverse,
        divergent=divergent,
        partial_sum_increments=increments,
        truncation_residual=residual,
    )
