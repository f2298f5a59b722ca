"""Inducing-feature families and covariance-block assembly.

Three families of inducing variables are supported:

* ``points``      -- classic pseudo-inputs, u_m = f(z_m);
* ``harmonics``   -- RKHS projections onto spherical harmonics Y_{l,j};
* ``activations`` -- RKHS projections onto norm-scaled neural activations
                     H_m(x) = |z~_m| |x~| sigma(zhat_m . xhat).

Every block K_uf, K_uu, K_vf, K_vu, K_vv needed by the decoupled predictive
is assembled here for all nine (base, orthogonal) pairings.  Norm prefactors
follow the kernel's homogeneity degree p so that stationary kernels stay
purely angular while the arc-cosine kernel carries |x~| factors exactly as
in the feature definition.
"""

from __future__ import annotations

from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np

from .harmonics import HarmonicBasis, eval_harmonics
from .kernels import Spectrum, ZonalKernel, gram, lift_points, shape_value
from .special_math import (
    QuadratureRule,
    SphereGeometry,
    build_quadrature,
    default_num_nodes,
    funk_hecke_spectrum,
    gegenbauer_normalized_all,
    num_harmonics,
)

__all__ = [
    "ActivationShape",
    "InducingSet",
    "CovarianceBlocks",
    "activation_sigma",
    "activation_spectrum",
    "activation_feature",
    "zonal_series",
    "cross_cov_Kuf",
    "cov_Kuu",
    "cross_cov_Kvu",
    "nystrom_terms",
    "schur_full",
    "schur_diag",
]

JITTER_REL = 1e-8
JITTER_REL_MAX = 1e-4

ACTIVATION_KINDS = ("relu", "softplus")


class ConditioningError(RuntimeError):
    pass


class DegenerateSpectrumError(RuntimeError):
    pass


def activation_sigma(kind: str, t):
    if kind == "relu":
        return jnp.maximum(jnp.asarray(t), 0.0)
    if kind == "softplus":
        return jnp.log1p(jnp.exp(jnp.asarray(t)))
    raise ValueError(f"unknown activation kind {kind!r}")


def activation_spectrum(
    kind: str,
    geometry: SphereGeometry,
    max_level: int,
    rule: QuadratureRule | None = None,
) -> Spectrum:
    """Projection coefficients varsigma_0..varsigma_L of the activation."""
    if rule is None:
        rule = build_quadrature(geometry, default_num_nodes(max_level))
    coeff = np.asarray(
        funk_hecke_spectrum(lambda t: activation_sigma(kind, t), max_level, rule)
    )
    return Spectrum(geometry=geometry, coefficients=coeff, kind="activation")


@dataclass(frozen=True)
class ActivationShape:
    kind: str
    spectrum: Spectrum

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.spectrum.kind != "activation":
            raise ValueError("ActivationShape requires an activation spectrum")

    @classmethod
    def build(cls, kind: str, geometry: SphereGeometry, max_level: int):
        return cls(kind=kind, spectrum=activation_spectrum(kind, geometry, max_level))


@dataclass(frozen=True)
class InducingSet:
    """One of the three inducing-variable families.

    ``locations`` holds Z (or W): input-space rows in R^d for the points
    variant, ambient weight rows in R^{d+1} (own bias coordinate included)
    for the activations variant.  The harmonics variant carries a basis.
    """

    variant: str
    locations: np.ndarray | None = None
    basis: HarmonicBasis | None = None
    activation: ActivationShape | None = None

    def __post_init__(self):
        if self.variant not in ("points", "harmonics", "activations"):
            raise ValueError(f"unknown inducing variant {self.variant!r}")
        if self.variant in ("points", "activations"):
            if self.locations is None:
                raise ValueError(f"{self.variant} variant requires locations")
            loc = np.atleast_2d(np.asarray(self.locations, dtype=float))
            if loc.shape[0] < 1 or not np.all(np.isfinite(loc)):
                raise ValueError("locations must be a nonempty finite matrix")
            object.__setattr__(self, "locations", loc)
        if self.variant == "harmonics" and self.basis is None:
            raise ValueError("harmonics variant requires a basis")
        if self.variant == "activations" and self.activation is None:
            raise ValueError("activations variant requires an activation shape")

    def size(self, active_levels: np.ndarray | None = None) -> int:
        if self.variant == "harmonics":
            sizes = self.basis.level_sizes
            if active_levels is not None:
                sizes = sizes[active_levels]
            return int(np.sum(sizes))
        return self.locations.shape[0]


@dataclass(frozen=True)
class CovarianceBlocks:
    Kuf: np.ndarray
    Kuu: np.ndarray
    Kvf: np.ndarray | None = None
    Kvu: np.ndarray | None = None
    Kvv: np.ndarray | None = None


def _normalize_rows(z):
    """Unit rows and norms of ambient weight vectors."""
    z = jnp.atleast_2d(jnp.asarray(z, dtype=jnp.float64))
    norms = jnp.linalg.norm(z, axis=1)
    return z / norms[:, None], norms


def activation_feature(z_tilde, x, activation: ActivationShape | str, bias: float = 1.0):
    """H(z~, x) = |z~| |x~| sigma(zhat . xhat).

    ``z_tilde`` is the ambient weight vector (bias coordinate included);
    ``x`` is an input-space point, lifted with the kernel bias.
    """
    kind = activation if isinstance(activation, str) else activation.kind
    zhat, zn = _normalize_rows(np.atleast_2d(z_tilde))
    xhat, xn = lift_points(np.atleast_2d(x), bias)
    value = zn[0] * xn[0] * activation_sigma(kind, zhat[0] @ xhat[0])
    return float(value)


def zonal_series(coefficients, geometry: SphereGeometry, T):
    """sum_l coeff_l (N_l / |S^{D-1}|) Cbar_l(T) for an inner-product array T."""
    coefficients = jnp.asarray(coefficients)
    max_level = coefficients.shape[0] - 1
    mult = np.array(
        [num_harmonics(geometry, ell) for ell in range(max_level + 1)], dtype=float
    )
    basis = gegenbauer_normalized_all(max_level, geometry.alpha, T)
    weights = coefficients * jnp.asarray(mult) / geometry.surface_area
    return jnp.tensordot(weights, basis, axes=(0, 0))


# ---------------------------------------------------------------------------
# Functional block assembly.  All "dynamic" arguments (locations, kernel
# hyperparameters, kernel spectrum) may be jax tracers so the same code path
# serves both the object-level API and the differentiable ELBO.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureStatic:
    """Static (non-traced) description of one inducing set."""

    variant: str
    basis: HarmonicBasis | None = None
    act_kind: str | None = None
    act_coeff: np.ndarray | None = None  # varsigma_0..varsigma_L
    column_levels: np.ndarray | None = None  # level of each harmonic column


def feature_static(
    features: InducingSet,
    active_mask: np.ndarray,
) -> FeatureStatic:
    """Freeze the spectrum-dependent structure of an inducing set.

    ``active_mask`` marks levels with structurally nonzero kernel
    coefficients; harmonic columns on dead levels are excluded.
    """
    if features.variant == "harmonics":
        levels = np.nonzero(active_mask)[0]
        if levels.size == 0:
            raise DegenerateSpectrumError(
                "kernel spectrum vanishes on every level up to the truncation"
            )
        sizes = features.basis.level_sizes[levels]
        column_levels = np.repeat(levels, sizes)
        return FeatureStatic(
            variant="harmonics", basis=features.basis, column_levels=column_levels
        )
    if features.variant == "activations":
        if not np.any(active_mask):
            raise DegenerateSpectrumError(
                "kernel spectrum vanishes on every level up to the truncation"
            )
        return FeatureStatic(
            variant="activations",
            act_kind=features.activation.kind,
            act_coeff=np.asarray(features.activation.spectrum.coefficients),
        )
    return FeatureStatic(variant="points")


@dataclass(frozen=True)
class KernelStatic:
    family: str
    degree: float
    bias: float
    geometry: SphereGeometry
    max_level: int
    active_mask: np.ndarray  # levels with structurally nonzero lambda


def _harmonic_eval(static: FeatureStatic, points_hat):
    levels = np.unique(static.column_levels)
    return eval_harmonics(static.basis, points_hat, levels=levels)


def _norm_factor(norms, degree):
    return norms**degree if degree != 0.0 else jnp.ones_like(norms)


def _masked_ratio(num, lam, mask):
    lam_safe = jnp.where(jnp.asarray(mask), lam, 1.0)
    return jnp.where(jnp.asarray(mask), num / lam_safe, 0.0)


def kuf_block(ks: KernelStatic, fs: FeatureStatic, loc, lam, amplitude, lengthscale, X):
    """Cross-covariance K_uf between inducing variables and f(X)."""
    if fs.variant == "points":
        return gram(
            ks.family,
            loc,
            X,
            amplitude=amplitude,
            lengthscale=lengthscale,
            degree=ks.degree,
            bias=ks.bias,
        )
    xhat, xn = lift_points(X, ks.bias)
    sx = _norm_factor(xn, ks.degree)
    if fs.variant == "harmonics":
        Y = _harmonic_eval(fs, xhat)  # (N, M)
        return (Y * sx[:, None]).T
    # The inducing variable is <f, P H_m> with P the projection onto the
    # kernel-active levels up to the truncation, so the cross-covariance is
    # the level-truncated activation expansion, not the raw activation.
    # This keeps every covariance block consistent (jointly PSD) even for
    # pairings whose full feature-norm series diverges.
    zhat, zn = _normalize_rows(loc)
    sz = _norm_factor(zn, ks.degree)
    coeff = jnp.where(jnp.asarray(ks.active_mask), jnp.asarray(fs.act_coeff), 0.0)
    series = zonal_series(coeff, ks.geometry, jnp.clip(zhat @ xhat.T, -1.0, 1.0))
    return series * sz[:, None] * sx[None, :]


def kuu_block(ks: KernelStatic, fs: FeatureStatic, loc, lam, amplitude, lengthscale):
    """Prior covariance K_uu of the inducing variables."""
    if fs.variant == "points":
        return gram(
            ks.family,
            loc,
            None,
            amplitude=amplitude,
            lengthscale=lengthscale,
            degree=ks.degree,
            bias=ks.bias,
        )
    if fs.variant == "harmonics":
        lam_cols = jnp.asarray(lam)[fs.column_levels]
        return jnp.diag(1.0 / lam_cols)
    zhat, zn = _normalize_rows(loc)
    sz = _norm_factor(zn, ks.degree)
    coeff = _masked_ratio(
        jnp.asarray(fs.act_coeff) ** 2, jnp.asarray(lam), ks.active_mask
    )
    series = zonal_series(coeff, ks.geometry, jnp.clip(zhat @ zhat.T, -1.0, 1.0))
    K = series * sz[:, None] * sz[None, :]
    return 0.5 * (K + K.T)


def kvu_block(
    ks: KernelStatic,
    ortho: FeatureStatic,
    w,
    base: FeatureStatic,
    z,
    lam,
    amplitude,
    lengthscale,
):
    """Cross-covariance K_vu for every (orthogonal, base) variant pairing."""
    ov, bv = ortho.variant, base.variant
    if ov == "points":
        # <k(w_k, .), phi_m> = phi_m(w_k): a K_uf evaluation at W.
        return kuf_block(ks, base, z, lam, amplitude, lengthscale, w).T
    if bv == "points":
        # <psi_k, k(z_m, .)> = psi_k(z_m): a K_vf evaluation at Z.
        return kuf_block(ks, ortho, w, lam, amplitude, lengthscale, z)
    if ov == "harmonics" and bv == "harmonics":
        if ortho.basis is not base.basis:
            raise ValueError(
                "harmonic-harmonic cross-covariance requires a shared basis"
            )
        n_o = ortho.column_levels.size
        n_b = base.column_levels.size
        n = min(n_o, n_b)
        lam_cols = jnp.asarray(lam)[ortho.column_levels[:n]]
        out = jnp.zeros((n_o, n_b))
        return out.at[jnp.arange(n), jnp.arange(n)].set(1.0 / lam_cols)
    if ov == "harmonics" and bv == "activations":
        # <Y_k, H_m> = (varsigma_l / lambda_l) Y_k(zhat_m) * |z~|^p
        zhat, zn = _normalize_rows(z)
        sz = _norm_factor(zn, ks.degree)
        Y = _harmonic_eval(ortho, zhat)  # (M, K)
        ratio = _masked_ratio(
            jnp.asarray(base.act_coeff), jnp.asarray(lam), ks.active_mask
        )[ortho.column_levels]
        return (Y * sz[:, None]).T * ratio[:, None]
    if ov == "activations" and bv == "harmonics":
        what, wn = _normalize_rows(w)
        sw = _norm_factor(wn, ks.degree)
        Y = _harmonic_eval(base, what)  # (K, M)
        ratio = _masked_ratio(
            jnp.asarray(ortho.act_coeff), jnp.asarray(lam), ks.active_mask
        )[base.column_levels]
        return Y * sw[:, None] * ratio[None, :]
    # activations x activations
    what, wn = _normalize_rows(w)
    zhat, zn = _normalize_rows(z)
    sw = _norm_factor(wn, ks.degree)
    sz = _norm_factor(zn, ks.degree)
    coeff = _masked_ratio(
        jnp.asarray(ortho.act_coeff) * jnp.asarray(base.act_coeff),
        jnp.asarray(lam),
        ks.active_mask,
    )
    series = zonal_series(coeff, ks.geometry, jnp.clip(what @ zhat.T, -1.0, 1.0))
    return series * sw[:, None] * sz[None, :]


# ---------------------------------------------------------------------------
# Object-level operations (numpy in / numpy out), per the module contract.
# ---------------------------------------------------------------------------


def _kernel_static(kernel: ZonalKernel, geometry, max_level, spectrum) -> KernelStatic:
    return KernelStatic(
        family=kernel.family,
        degree=kernel.homogeneity_degree,
        bias=kernel.bias,
        geometry=geometry,
        max_level=max_level,
        active_mask=np.asarray(spectrum.coefficients) > 0.0,
    )


def _prepare(features, kernel, geometry, max_level, spectrum):
    ks = _kernel_static(kernel, geometry, max_level, spectrum)
    fs = feature_static(features, ks.active_mask)
    return ks, fs


def cross_cov_Kuf(
    features: InducingSet, kernel: ZonalKernel, X, spectrum: Spectrum
) -> np.ndarray:
    ks, fs = _prepare(features, kernel, spectrum.geometry, spectrum.max_level, spectrum)
    out = kuf_block(
        ks,
        fs,
        features.locations,
        jnp.asarray(spectrum.coefficients),
        kernel.amplitude,
        kernel.lengthscale,
        np.atleast_2d(np.asarray(X, dtype=float)),
    )
    return np.asarray(out)


def cov_Kuu(features: InducingSet, kernel: ZonalKernel, spectrum: Spectrum) -> np.ndarray:
    ks, fs = _prepare(features, kernel, spectrum.geometry, spectrum.max_level, spectrum)
    out = kuu_block(
        ks,
        fs,
        features.locations,
        jnp.asarray(spectrum.coefficients),
        kernel.amplitude,
        kernel.lengthscale,
    )
    return np.asarray(out)


def cross_cov_Kvu(
    orthogonal: InducingSet,
    base: InducingSet,
    kernel: ZonalKernel,
    spectrum: Spectrum,
) -> np.ndarray:
    ks = _kernel_static(kernel, spectrum.geometry, spectrum.max_level, spectrum)
    fs_o = feature_static(orthogonal, ks.active_mask)
    fs_b = feature_static(base, ks.active_mask)
    out = kvu_block(
        ks,
        fs_o,
        orthogonal.locations,
        fs_b,
        base.locations,
        jnp.asarray(spectrum.coefficients),
        kernel.amplitude,
        kernel.lengthscale,
    )
    return np.asarray(out)


def chol_with_jitter(K: np.ndarray, label: str = "Kuu") -> tuple[np.ndarray, float]:
    """Cholesky, exact first, then with escalating jitter; raises
    ConditioningError on failure.  The exact attempt matters for matrices
    whose diagonal spans many orders of magnitude (harmonic spectra), where
    a mean-diagonal jitter would swamp the small eigenvalues."""
    K = np.asarray(K, dtype=float)
    try:
        return np.linalg.cholesky(K), 0.0
    except np.linalg.LinAlgError:
        pass
    mean_diag = float(np.mean(np.diag(K)))
    scale = mean_diag if mean_diag > 0 else 1.0
    jitter = JITTER_REL * scale
    while jitter <= JITTER_REL_MAX * scale * (1 + 1e-12):
        try:
            L = np.linalg.cholesky(K + jitter * np.eye(K.shape[0]))
            return L, jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    eigvals = np.linalg.eigvalsh(K)
    cond = eigvals[-1] / max(abs(eigvals[0]), 1e-300)
    raise ConditioningError(
        f"{label} is not positive definite after jitter "
        f"{JITTER_REL_MAX * scale:.3e} (condition estimate {cond:.3e})"
    )


def nystrom_terms(blocks: CovarianceBlocks, Kff_or_diag=None):
    """Q_ab = K_au K_uu^{-1} K_ub via two triangular solves per block.

    Returns a dict with ``qff_diag`` (or ``qff`` when a full Kff was given),
    plus ``qvf`` and ``qvv`` when orthogonal blocks are present.
    """
    from scipy.linalg import solve_triangular as st

    L, _ = chol_with_jitter(np.asarray(blocks.Kuu))
    A = st(L, np.asarray(blocks.Kuf), lower=True)  # L^{-1} Kuf
    out = {"qff_diag": np.sum(A**2, axis=0)}
    if Kff_or_diag is not None and np.ndim(Kff_or_diag) == 2:
        out["qff"] = A.T @ A
    if blocks.Kvu is not None:
        B = st(L, np.asarray(blocks.Kvu).T, lower=True)  # L^{-1} Kuv
        out["qvf"] = B.T @ A
        out["qvv"] = B.T @ B
    return out


def schur_full(K: np.ndarray, Q: np.ndarray) -> np.ndarray:
    C = np.asarray(K) - np.asarray(Q)
    if C.shape[0] == C.shape[1]:
        C = 0.5 * (C + C.T)
    return C


def schur_diag(k_diag: np.ndarray, q_diag: np.ndarray) -> np.ndarray:
    c = np.asarray(k_diag) - np.asarray(q_diag)
    return np.where(c < 0, np.where(c >= -1e-10, 0.0, c), c)
