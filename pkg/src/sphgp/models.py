"""SVGP and orthogonally-decoupled variational GP models.

The model family is q(f) = integral p(f | u, v) q(u) q(v) du dv with
q(u) = N(m_u, C_u) over the base inducing variables and, in the decoupled
modes, q(v) = N(m_v, C_v) over orthogonal inducing variables v (residuals
of v after projecting out u).  Modes:

* ``svgp``  -- no orthogonal set;
* ``odvgp`` -- C_v pinned to the orthogonal prior C_vv (only m_v free);
* ``solve`` -- both m_v and C_v free.

A small functional core (``ModelCore``) assembles every predictive and the
ELBO from a flat parameter dict of jax arrays, so the same code path serves
the object-level operations and the differentiable training objective.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import jax.numpy as jnp
import numpy as np
from jax.scipy.linalg import solve_triangular

from .features import (
    JITTER_REL,
    ActivationShape,
    ConditioningError,
    FeatureStatic,
    InducingSet,
    KernelStatic,
    feature_static,
    kuf_block,
    kuu_block,
    kvu_block,
)
from .harmonics import HarmonicBasis
from .kernels import Spectrum, ZonalKernel, kernel_spectrum, lift_points, shape_value
from .special_math import (
    SphereGeometry,
    build_quadrature,
    default_num_nodes,
    funk_hecke_spectrum,
)

__all__ = [
    "MODES",
    "VariationalGaussian",
    "PosteriorGaussian",
    "GPModel",
    "ModelCore",
    "svgp_predict",
    "solvegp_predict",
    "predict",
    "kl_gaussian",
    "elbo",
    "prior_variance_decomposition",
    "predictive_variance_terms",
    "save_checkpoint",
    "load_checkpoint",
    "positive",
    "positive_inverse",
]

MODES = ("svgp", "odvgp", "solve")
VARIANCE_CLAMP = -1e-10
CHECKPOINT_VERSION = 1

STATIONARY = ("matern52", "squaredexp")


def positive(raw):
    """Softplus map from unconstrained to positive reals."""
    return jnp.logaddexp(jnp.asarray(raw), 0.0)


def positive_inverse(value):
    """Inverse softplus: log(expm1(value))."""
    value = np.asarray(value, dtype=float)
    if np.any(value <= 0):
        raise ValueError("positive_inverse requires positive input")
    return np.where(value > 30, value, np.log(np.expm1(np.minimum(value, 30.0))))


def scale_to_raw(scale: np.ndarray) -> np.ndarray:
    """Unconstrained parameterization of a lower Cholesky factor."""
    scale = np.asarray(scale, dtype=float)
    raw = np.tril(scale, -1)
    np.fill_diagonal(raw, positive_inverse(np.diag(scale)))
    return raw


def raw_to_scale(raw):
    raw = jnp.asarray(raw)
    return jnp.tril(raw, -1) + jnp.diag(positive(jnp.diag(raw)))


@dataclass(frozen=True)
class VariationalGaussian:
    """N(mean, scale scale^T) with a lower-triangular positive-diagonal scale."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        scale = np.asarray(self.scale, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)
        if scale.shape != (mean.size, mean.size):
            raise ValueError("scale must be square and match the mean dimension")
        if not np.allclose(scale, np.tril(scale)):
            raise ValueError("scale must be lower triangular")
        if np.any(np.diag(scale) <= 0):
            raise ValueError("scale diagonal must be strictly positive")

    @classmethod
    def standard(cls, dim: int) -> "VariationalGaussian":
        return cls(mean=np.zeros(dim), scale=np.eye(dim))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def cov(self) -> np.ndarray:
        return self.scale @ self.scale.T


@dataclass(frozen=True)
class PosteriorGaussian:
    mean: np.ndarray
    var: np.ndarray
    cov: np.ndarray | None = None

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        var = np.asarray(self.var, dtype=float).reshape(-1)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)
        if np.any(var < VARIANCE_CLAMP):
            raise ValueError("marginal variance below the clamp threshold")
        object.__setattr__(self, "var", np.maximum(var, 0.0))


@dataclass(frozen=True)
class GPModel:
    kernel: ZonalKernel
    base: InducingSet
    q_u: VariationalGaussian
    noise_precision: float
    truncation: int
    mode: str
    orthogonal: InducingSet | None = None
    q_v: VariationalGaussian | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not self.noise_precision > 0:
            raise ValueError("noise_precision must be positive")
        if self.truncation < 0:
            raise ValueError("truncation must be nonnegative")
        if self.mode == "svgp":
            if self.orthogonal is not None or self.q_v is not None:
                raise ValueError("svgp mode admits no orthogonal inducing set")
        else:
            if self.orthogonal is None or self.q_v is None:
                raise ValueError(f"{self.mode} mode requires an orthogonal set and q_v")

    @property
    def input_dim(self) -> int:
        if self.base.variant == "harmonics":
            return self.base.basis.geometry.ambient_dim - 1
        if self.base.variant == "activations":
            # Activation weights live in the ambient (bias-lifted) space.
            return self.base.locations.shape[1] - 1
        return self.base.locations.shape[1]

    @property
    def geometry(self) -> SphereGeometry:
        return SphereGeometry.for_dimension(self.input_dim + 1)

    def spectrum(self) -> Spectrum:
        return kernel_spectrum(self.kernel, self.geometry, self.truncation)


# ---------------------------------------------------------------------------
# Functional core.
# ---------------------------------------------------------------------------


def _chol_lower(fs: FeatureStatic, K):
    """Cholesky factor of K_uu; diagonal blocks factor exactly, others get
    a relative jitter.  Failures surface as NaNs caught by the callers."""
    if fs is not None and fs.variant == "harmonics":
        return jnp.diag(jnp.sqrt(jnp.diag(K)))
    jitter = JITTER_REL * jnp.mean(jnp.diag(K))
    return jnp.linalg.cholesky(K + jitter * jnp.eye(K.shape[0]))


def _finite_chol(L: np.ndarray, culprit: str) -> np.ndarray:
    if not np.all(np.isfinite(L)):
        raise ConditioningError(
            f"non-finite prior Cholesky factor; likely ill-conditioning in {culprit}"
        )
    return L


def _kl_whitened(mean, scale):
    """KL(N(mean, scale scale^T) || N(0, I)) for whitened parameters."""
    dim = mean.shape[0]
    return 0.5 * (
        jnp.sum(scale**2)
        + jnp.sum(mean**2)
        - dim
        - 2.0 * jnp.sum(jnp.log(jnp.diag(scale)))
    )


def _kl_from_chol(mean, scale, prior_chol):
    """KL(N(mean, scale scale^T) || N(0, prior_chol prior_chol^T))."""
    a = solve_triangular(prior_chol, scale, lower=True)
    mt = solve_triangular(prior_chol, mean, lower=True)
    dim = mean.shape[0]
    logdet_q = 2.0 * jnp.sum(jnp.log(jnp.diag(scale)))
    logdet_p = 2.0 * jnp.sum(jnp.log(jnp.diag(prior_chol)))
    return 0.5 * (
        jnp.sum(a**2) + jnp.sum(mt**2) - dim - logdet_q + logdet_p
    )


class ModelCore:
    """Static structure of a model plus jax-differentiable assembly.

    Parameters travel as a flat dict of jax arrays (see ``pack_params``);
    everything else (variants, bases, activation coefficients, quadrature)
    is frozen at construction.
    """

    def __init__(self, model: GPModel):
        geometry = model.geometry
        spec = model.spectrum()
        self.mode = model.mode
        self.truncation = model.truncation
        self.family = model.kernel.family
        self.geometry = geometry
        self.ks = KernelStatic(
            family=model.kernel.family,
            degree=model.kernel.homogeneity_degree,
            bias=model.kernel.bias,
            geometry=geometry,
            max_level=model.truncation,
            active_mask=np.asarray(spec.coefficients) > 0.0,
        )
        self.fs_base = feature_static(model.base, self.ks.active_mask)
        self.fs_ortho = (
            feature_static(model.orthogonal, self.ks.active_mask)
            if model.orthogonal is not None
            else None
        )
        self.rule = build_quadrature(geometry, default_num_nodes(model.truncation))
        self.has_lengthscale = model.kernel.family in STATIONARY
        self.base_size = (
            self.fs_base.column_levels.size
            if self.fs_base.variant == "harmonics"
            else model.base.locations.shape[0]
        )
        self.ortho_size = 0
        if self.fs_ortho is not None:
            self.ortho_size = (
                self.fs_ortho.column_levels.size
                if self.fs_ortho.variant == "harmonics"
                else model.orthogonal.locations.shape[0]
            )

    # -- parameters ---------------------------------------------------------
    #
    # The variational parameters travel *whitened*: q_u = N(L_u m~, L_u S~
    # S~^T L_u^T) with L_u the prior Cholesky, and likewise q_v against
    # C_vv.  The KL terms are then against N(0, I), which keeps the
    # optimization landscape well scaled even when the feature covariance
    # has tiny eigenvalues.

    def pack_params(self, model: GPModel) -> dict:
        from scipy.linalg import solve_triangular as np_solve

        params = {
            "raw_amplitude": jnp.asarray(positive_inverse(model.kernel.amplitude)),
            "raw_beta": jnp.asarray(positive_inverse(model.noise_precision)),
        }
        if self.has_lengthscale:
            params["raw_lengthscale"] = jnp.asarray(
                positive_inverse(model.kernel.lengthscale)
            )
        if self.fs_base.variant != "harmonics":
            params["z"] = jnp.asarray(model.base.locations)
        if self.mode != "svgp" and self.fs_ortho.variant != "harmonics":
            params["w"] = jnp.asarray(model.orthogonal.locations)

        amplitude, lengthscale, lam, z, _, Lu = self._base_state(params)
        Lu_np = _finite_chol(np.asarray(Lu), "the base inducing set (K_uu factorization)")
        params["qu_mean"] = jnp.asarray(
            np_solve(Lu_np, model.q_u.mean, lower=True)
        )
        params["qu_scale"] = jnp.asarray(
            scale_to_raw(np_solve(Lu_np, model.q_u.scale, lower=True))
        )
        if self.mode != "svgp":
            _, _, _, Lv, _ = self._ortho_state(
                params, amplitude, lengthscale, lam, z, Lu
            )
            Lv_np = _finite_chol(
                np.asarray(Lv), "the orthogonal inducing set (C_vv factorization)"
            )
            params["qv_mean"] = jnp.asarray(
                np_solve(Lv_np, model.q_v.mean, lower=True)
            )
            if self.mode == "solve":
                params["qv_scale"] = jnp.asarray(
                    scale_to_raw(np_solve(Lv_np, model.q_v.scale, lower=True))
                )
        return params

    def unpack_params(self, model: GPModel, params: dict) -> GPModel:
        kernel = model.kernel.with_params(
            amplitude=float(positive(params["raw_amplitude"])),
            lengthscale=(
                float(positive(params["raw_lengthscale"]))
                if self.has_lengthscale
                else None
            ),
        )
        base = model.base
        if "z" in params:
            base = replace(base, locations=np.asarray(params["z"]))
        amplitude, lengthscale, lam, z, _, Lu = self._base_state(params)
        Lu_np = _finite_chol(np.asarray(Lu), "the base inducing set (K_uu factorization)")
        q_u = VariationalGaussian(
            mean=Lu_np @ np.asarray(params["qu_mean"]),
            scale=Lu_np @ np.asarray(raw_to_scale(params["qu_scale"])),
        )
        orthogonal, q_v = model.orthogonal, model.q_v
        if self.mode != "svgp":
            if "w" in params:
                orthogonal = replace(orthogonal, locations=np.asarray(params["w"]))
            _, _, _, Lv, _ = self._ortho_state(
                params, amplitude, lengthscale, lam, z, Lu
            )
            Lv_np = _finite_chol(
                np.asarray(Lv), "the orthogonal inducing set (C_vv factorization)"
            )
            qv_scale = (
                Lv_np @ np.asarray(raw_to_scale(params["qv_scale"]))
                if self.mode == "solve"
                else Lv_np  # odvgp pins C_v = C_vv
            )
            q_v = VariationalGaussian(
                mean=Lv_np @ np.asarray(params["qv_mean"]), scale=qv_scale
            )
        return replace(
            model,
            kernel=kernel,
            base=base,
            orthogonal=orthogonal,
            q_u=q_u,
            q_v=q_v,
            noise_precision=float(positive(params["raw_beta"])),
        )

    # -- assembly -----------------------------------------------------------

    def _hyper(self, params):
        amplitude = positive(params["raw_amplitude"])
        lengthscale = (
            positive(params["raw_lengthscale"]) if self.has_lengthscale else 1.0
        )
        return amplitude, lengthscale

    def _lam(self, amplitude, lengthscale):
        lam = funk_hecke_spectrum(
            lambda t: shape_value(self.family, t, amplitude, lengthscale),
            self.truncation,
            self.rule,
        )
        mask = jnp.asarray(self.ks.active_mask)
        return jnp.where(mask, jnp.maximum(lam, 1e-300), 0.0)

    def _kff_diag(self, X, amplitude, lengthscale):
        _, norms = lift_points(X, self.ks.bias)
        diag = shape_value(self.family, 1.0, amplitude, lengthscale)
        if self.ks.degree != 0.0:
            return diag * norms ** (2.0 * self.ks.degree)
        return diag * jnp.ones_like(norms)

    def _base_state(self, params):
        amplitude, lengthscale = self._hyper(params)
        lam = self._lam(amplitude, lengthscale)
        z = params.get("z")
        Kuu = kuu_block(self.ks, self.fs_base, z, lam, amplitude, lengthscale)
        Lu = _chol_lower(self.fs_base, Kuu)
        return amplitude, lengthscale, lam, z, Kuu, Lu

    def _ortho_state(self, params, amplitude, lengthscale, lam, z, Lu):
        w = params.get("w")
        Kvv = kuu_block(self.ks, self.fs_ortho, w, lam, amplitude, lengthscale)
        Kvu = kvu_block(
            self.ks, self.fs_ortho, w, self.fs_base, z, lam, amplitude, lengthscale
        )
        Bv = solve_triangular(Lu, Kvu.T, lower=True)  # L^{-1} K_uv
        Cvv = Kvv - Bv.T @ Bv
        Cvv = 0.5 * (Cvv + Cvv.T)
        jitter = JITTER_REL * jnp.mean(jnp.diag(Cvv))
        Lv = jnp.linalg.cholesky(Cvv + jitter * jnp.eye(Cvv.shape[0]))
        return w, Kvu, Cvv, Lv, Bv

    def predictive_terms(self, params, X):
        """Per-point variance pieces and the predictive mean at X.

        Returns (mean, terms) where terms maps the five labeled vectors of
        the decomposition; absent orthogonal pieces are zeros.
        """
        X = jnp.atleast_2d(jnp.asarray(X, dtype=jnp.float64))
        amplitude, lengthscale, lam, z, Kuu, Lu = self._base_state(params)
        Kuf = kuf_block(self.ks, self.fs_base, z, lam, amplitude, lengthscale, X)
        A = solve_triangular(Lu, Kuf, lower=True)  # L_u^{-1} K_uf
        qu_scale = raw_to_scale(params["qu_scale"])  # whitened scale
        mean = A.T @ params["qu_mean"]
        n = X.shape[0]
        terms = {
            "prior": self._kff_diag(X, amplitude, lengthscale),
            "nystrom_subtract": jnp.sum(A**2, axis=0),
            "base_add": jnp.sum((qu_scale.T @ A) ** 2, axis=0),
            "orthogonal_subtract": jnp.zeros(n),
            "orthogonal_add": jnp.zeros(n),
        }
        if self.mode != "svgp":
            w, Kvu, Cvv, Lv, Bv = self._ortho_state(
                params, amplitude, lengthscale, lam, z, Lu
            )
            Kvf = kuf_block(self.ks, self.fs_ortho, w, lam, amplitude, lengthscale, X)
            Cvf = Kvf - Bv.T @ A
            E = solve_triangular(Lv, Cvf, lower=True)  # L_v^{-1} C_vf
            mean = mean + E.T @ params["qv_mean"]
            sub = jnp.sum(E**2, axis=0)
            if self.mode == "solve":
                qv_scale = raw_to_scale(params["qv_scale"])
                add = jnp.sum((qv_scale.T @ E) ** 2, axis=0)
            else:  # odvgp pins C_v = C_vv
                add = sub
            terms["orthogonal_subtract"] = sub
            terms["orthogonal_add"] = add
        return mean, terms

    def predict_diag(self, params, X):
        mean, t = self.predictive_terms(params, X)
        var = (
            t["prior"]
            - t["nystrom_subtract"]
            + t["base_add"]
            - t["orthogonal_subtract"]
            + t["orthogonal_add"]
        )
        return mean, var

    def predict_full(self, params, X):
        """Full predictive covariance (numpy-free jax path)."""
        X = jnp.atleast_2d(jnp.asarray(X, dtype=jnp.float64))
        amplitude, lengthscale, lam, z, Kuu, Lu = self._base_state(params)
        Kuf = kuf_block(self.ks, self.fs_base, z, lam, amplitude, lengthscale, X)
        A = solve_triangular(Lu, Kuf, lower=True)
        qu_scale = raw_to_scale(params["qu_scale"])  # whitened scale
        mean = A.T @ params["qu_mean"]
        from .kernels import gram

        Kff = gram(
            self.family,
            X,
            None,
            amplitude=amplitude,
            lengthscale=lengthscale,
            degree=self.ks.degree,
            bias=self.ks.bias,
        )
        G = qu_scale.T @ A
        cov = Kff - A.T @ A + G.T @ G
        if self.mode != "svgp":
            w, Kvu, Cvv, Lv, Bv = self._ortho_state(
                params, amplitude, lengthscale, lam, z, Lu
            )
            Kvf = kuf_block(self.ks, self.fs_ortho, w, lam, amplitude, lengthscale, X)
            Cvf = Kvf - Bv.T @ A
            E = solve_triangular(Lv, Cvf, lower=True)
            mean = mean + E.T @ params["qv_mean"]
            if self.mode == "solve":
                qv_scale = raw_to_scale(params["qv_scale"])
                H = qv_scale.T @ E
                cov = cov - E.T @ E + H.T @ H
        cov = 0.5 * (cov + cov.T)
        return mean, cov

    def elbo(self, params, X, y, n_total):
        """Evidence lower bound on a (mini)batch scaled to n_total points."""
        X = jnp.atleast_2d(jnp.asarray(X, dtype=jnp.float64))
        y = jnp.asarray(y, dtype=jnp.float64).reshape(-1)
        beta = positive(params["raw_beta"])
        qu_scale = raw_to_scale(params["qu_scale"])
        kl = _kl_whitened(params["qu_mean"], qu_scale)
        if self.mode != "svgp":
            if self.mode == "solve":
                qv_scale = raw_to_scale(params["qv_scale"])
                kl = kl + _kl_whitened(params["qv_mean"], qv_scale)
            else:  # odvgp: C_v = C_vv, only the mean contributes
                kl = kl + 0.5 * jnp.sum(params["qv_mean"] ** 2)
        if y.shape[0] == 0:
            return -kl
        mean, var = self.predict_diag(params, X)
        var = jnp.maximum(var, 0.0)
        point_ll = (
            0.5 * jnp.log(beta / (2.0 * jnp.pi))
            - 0.5 * beta * (y - mean) ** 2
            - 0.5 * beta * var
        )
        scale = n_total / y.shape[0]
        return scale * jnp.sum(point_ll) - kl


# ---------------------------------------------------------------------------
# Object-level operations.
# ---------------------------------------------------------------------------


def _check_finite(arrays, model: GPModel, context: str):
    for name, value in arrays.items():
        if not np.all(np.isfinite(np.asarray(value))):
            culprit = (
                "the orthogonal inducing set (C_vv factorization)"
                if model.mode != "svgp"
                else "the base inducing set (K_uu factorization)"
            )
            raise ConditioningError(
                f"non-finite {name} while computing {context}; "
                f"likely ill-conditioning in {culprit}"
            )


def svgp_predict(model: GPModel, Xstar, full_cov: bool = False) -> PosteriorGaussian:
    """Predictive N(Q*u m_u, K** - Q*u (K_uu - C_u) Q_u*)."""
    if model.mode != "svgp" and model.orthogonal is not None:
        raise ValueError("svgp_predict requires mode svgp or no orthogonal set")
    return _predict_impl(model, Xstar, full_cov)


def solvegp_predict(model: GPModel, Xstar, full_cov: bool = False) -> PosteriorGaussian:
    """Decoupled predictive with the orthogonal mean/covariance corrections."""
    if model.mode == "svgp":
        raise ValueError("solvegp_predict requires an orthogonal inducing set")
    return _predict_impl(model, Xstar, full_cov)


def predict(model: GPModel, Xstar, full_cov: bool = False) -> PosteriorGaussian:
    if model.mode == "svgp":
        return svgp_predict(model, Xstar, full_cov)
    return solvegp_predict(model, Xstar, full_cov)


def _predict_impl(model, Xstar, full_cov):
    core = ModelCore(model)
    params = core.pack_params(model)
    Xstar = np.atleast_2d(np.asarray(Xstar, dtype=float))
    if full_cov:
        mean, cov = core.predict_full(params, Xstar)
        mean, cov = np.asarray(mean), np.asarray(cov)
        _check_finite({"mean": mean, "cov": cov}, model, "the predictive")
        var = np.maximum(np.diag(cov), 0.0)
        return PosteriorGaussian(mean=mean, var=var, cov=cov)
    mean, var = core.predict_diag(params, Xstar)
    mean, var = np.asarray(mean), np.asarray(var)
    _check_finite({"mean": mean, "var": var}, model, "the predictive")
    var = np.where(var < 0, np.where(var >= VARIANCE_CLAMP, 0.0, var), var)
    return PosteriorGaussian(mean=mean, var=var)


def kl_gaussian(q: VariationalGaussian, prior_cov: np.ndarray) -> float:
    """KL(q || N(0, prior_cov)); jitter only enters if the exact factorization fails."""
    from .features import chol_with_jitter

    R, _ = chol_with_jitter(np.asarray(prior_cov), label="prior covariance")
    value = float(_kl_from_chol(jnp.asarray(q.mean), jnp.asarray(q.scale), jnp.asarray(R)))
    if value < -1e-10:
        raise ConditioningError(f"negative KL ({value}) indicates a broken factorization")
    return value


def elbo(model: GPModel, X_batch, y_batch, N_total: int | None = None) -> float:
    X = np.atleast_2d(np.asarray(X_batch, dtype=float)) if np.size(X_batch) else np.zeros((0, model.input_dim))
    y = np.asarray(y_batch, dtype=float).reshape(-1)
    if N_total is None:
        N_total = y.size
    core = ModelCore(model)
    value = float(core.elbo(core.pack_params(model), X, y, N_total))
    if not np.isfinite(value):
        raise ConditioningError("non-finite ELBO (covariance factorization failed)")
    return value


def prior_variance_decomposition(model: GPModel, Xstar):
    """(var_g, var_h): Nystrom prior variance and its residual; sums to diag K**."""
    core = ModelCore(model)
    params = core.pack_params(model)
    X = np.atleast_2d(np.asarray(Xstar, dtype=float))
    _, terms = core.predictive_terms(params, X)
    var_g = np.asarray(terms["nystrom_subtract"])
    if core.fs_base.variant != "harmonics":
        # compensate (to first order) for the factorization jitter so the
        # residual vanishes at the inducing inputs themselves
        amplitude, lengthscale, lam, z, Kuu, Lu = core._base_state(params)
        Kuf = kuf_block(core.ks, core.fs_base, z, lam, amplitude, lengthscale, X)
        A = solve_triangular(Lu, Kuf, lower=True)
        W = solve_triangular(Lu.T, A, lower=False)
        jitter = JITTER_REL * float(np.mean(np.diag(np.asarray(Kuu))))
        var_g = var_g + jitter * np.asarray(jnp.sum(W**2, axis=0))
    var_h = np.asarray(terms["prior"]) - var_g
    return var_g, var_h


def predictive_variance_terms(model: GPModel, Xstar) -> dict:
    """Labeled variance pieces whose signed sum is the predictive variance.

    Keys: ``prior`` (+), ``nystrom_subtract`` (-), ``base_add`` (+),
    ``orthogonal_subtract`` (-), ``orthogonal_add`` (+).
    """
    core = ModelCore(model)
    params = core.pack_params(model)
    _, terms = core.predictive_terms(params, np.atleast_2d(np.asarray(Xstar, dtype=float)))
    return {k: np.asarray(v) for k, v in terms.items()}


# ---------------------------------------------------------------------------
# Checkpointing.
# ---------------------------------------------------------------------------


def _inducing_to_json(features: InducingSet | None):
    if features is None:
        return None
    out = {"variant": features.variant}
    if features.locations is not None:
        out["locations"] = features.locations.tolist()
    if features.variant == "harmonics":
        basis = features.basis
        out["basis"] = {
            "ambient_dim": basis.geometry.ambient_dim,
            "max_level": basis.max_level,
            "levels": [
                {
                    "directions": s.directions.tolist(),
                    "gram_factor": s.gram_factor.tolist(),
                }
                for s in basis.systems
            ],
        }
    if features.variant == "activations":
        out["activation"] = features.activation.kind
    return out


def _inducing_from_json(data, geometry: SphereGeometry, truncation: int):
    if data is None:
        return None
    variant = data["variant"]
    locations = np.asarray(data["locations"]) if "locations" in data else None
    basis = None
    activation = None
    if variant == "harmonics":
        from .harmonics import FundamentalSystem

        meta = data["basis"]
        systems = tuple(
            FundamentalSystem(
                level=ell,
                directions=np.asarray(level["directions"]),
                gram_factor=np.asarray(level["gram_factor"]),
            )
            for ell, level in enumerate(meta["levels"])
        )
        basis = HarmonicBasis(
            geometry=geometry, max_level=meta["max_level"], systems=systems
        )
    if variant == "activations":
        activation = ActivationShape.build(data["activation"], geometry, truncation)
    return InducingSet(
        variant=variant, locations=locations, basis=basis, activation=activation
    )


def save_checkpoint(model: GPModel, path: str, seed: int | None = None) -> None:
    """Versioned JSON snapshot: hyperparameters, locations, q factors."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "mode": model.mode,
        "truncation": model.truncation,
        "input_dim": model.input_dim,
        "noise_precision": model.noise_precision,
        "seed": seed,
        "kernel": {
            "family": model.kernel.family,
            "amplitude": model.kernel.amplitude,
            "lengthscale": model.kernel.lengthscale,
            "homogeneity_degree": model.kernel.homogeneity_degree,
            "bias": model.kernel.bias,
        },
        "base": _inducing_to_json(model.base),
        "orthogonal": _inducing_to_json(model.orthogonal),
        "q_u": {"mean": model.q_u.mean.tolist(), "scale": model.q_u.scale.tolist()},
        "q_v": (
            {"mean": model.q_v.mean.tolist(), "scale": model.q_v.scale.tolist()}
            if model.q_v is not None
            else None
        ),
    }
    with open(path, "w") as handle:
        json.dump(payload, handle)


def load_checkpoint(path: str) -> GPModel:
    with open(path) as handle:
        payload = json.load(handle)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"unsupported checkpoint version {payload.get('version')!r} "
            f"(expected {CHECKPOINT_VERSION})"
        )
    geometry = SphereGeometry.for_dimension(payload["input_dim"] + 1)
    kernel = ZonalKernel(
        family=payload["kernel"]["family"],
        amplitude=payload["kernel"]["amplitude"],
        lengthscale=payload["kernel"]["lengthscale"],
        homogeneity_degree=payload["kernel"]["homogeneity_degree"],
        bias=payload["kernel"]["bias"],
    )
    truncation = payload["truncation"]
    base = _inducing_from_json(payload["base"], geometry, truncation)
    orthogonal = _inducing_from_json(payload["orthogonal"], geometry, truncation)
    q_u = VariationalGaussian(
        mean=np.asarray(payload["q_u"]["mean"]),
        scale=np.asarray(payload["q_u"]["scale"]),
    )
    q_v = (
        VariationalGaussian(
            mean=np.asarray(payload["q_v"]["mean"]),
            scale=np.asarray(payload["q_v"]["scale"]),
        )
        if payload["q_v"] is not None
        else None
    )
    return GPModel(
        kernel=kernel,
        base=base,
        orthogonal=orthogonal,
        q_u=q_u,
        q_v=q_v,
        noise_precision=payload["noise_precision"],
        truncation=truncation,
        mode=payload["mode"],
    )
