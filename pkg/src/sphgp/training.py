"""Fitting harness: initialization defaults and two-phase optimization.

Phase 1 warm-starts the variational parameters and feature locations with
kernel hyperparameters and the noise precision frozen; phase 2 releases
everything.  Full-batch fitting uses L-BFGS; stochastic fitting uses a
hand-rolled Adam loop with per-epoch reshuffling.  The best-ELBO iterate
is returned, with rollback past any non-finite step.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import jax
import jax.numpy as jnp
import numpy as np
from scipy.optimize import minimize
from sklearn.cluster import kmeans_plusplus

from .features import ActivationShape, InducingSet
from .harmonics import build_harmonic_basis
from .kernels import FAMILIES, ZonalKernel, kernel_spectrum
from .models import MODES, GPModel, ModelCore, VariationalGaussian
from .special_math import SphereGeometry

__all__ = [
    "ModelConfig",
    "FitSchedule",
    "FitTrace",
    "init_model",
    "fit",
]

HYPER_KEYS = ("raw_amplitude", "raw_lengthscale", "raw_beta")
OPTIMIZERS = ("lbfgs", "adam")
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class ModelConfig:
    """Declarative model structure used by ``init_model``."""

    kernel: str = "matern52"
    mode: str = "svgp"
    base_family: str = "points"
    num_base: int = 8
    ortho_family: str = "points"
    num_ortho: int = 0
    truncation: int = 8
    activation: str = "softplus"
    bias: float = 1.0

    def __post_init__(self):
        if self.kernel not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.kernel!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.truncation < 0:
            raise ValueError("truncation must be nonnegative")
        if "activations" in (self.base_family, self.ortho_family) and self.activation not in (
            "relu",
            "softplus",
        ):
            raise ValueError(f"unknown activation kind {self.activation!r}")
        if self.base_family != "harmonics" and self.num_base < 1:
            raise ValueError("num_base must be >= 1 for location-based features")
        if self.mode != "svgp":
            if self.ortho_family != "harmonics" and self.num_ortho < 1:
                raise ValueError(
                    f"{self.mode} mode requires an orthogonal set "
                    "(num_ortho >= 1 or harmonic orthogonal features)"
                )
        elif self.num_ortho:
            raise ValueError("svgp mode admits no orthogonal features")


@dataclass(frozen=True)
class FitSchedule:
    """Two-phase optimization schedule.

    ``max_iters`` counts quasi-Newton iterations in full-batch mode and
    epochs in stochastic mode.
    """

    optimizer: str = "lbfgs"
    phase1_iters: int = 100
    max_iters: int = 200
    batch_size: int = 256
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.phase1_iters < 0 or self.max_iters < 0:
            raise ValueError("iteration counts must be nonnegative")
        if self.optimizer == "adam" and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1 for stochastic mode")


@dataclass
class FitTrace:
    elbo: np.ndarray
    elapsed_s: np.ndarray
    param_norm: np.ndarray
    converged: bool
    best_elbo: float

    @property
    def throughput(self) -> float:
        """Completed iterations per second."""
        if self.elbo.size == 0 or self.elapsed_s[-1] <= 0:
            return 0.0
        return float(self.elbo.size / self.elapsed_s[-1])

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["iteration", "elapsed_s", "elbo", "param_norm"])
            for i in range(self.elbo.size):
                writer.writerow(
                    [
                        i,
                        f"{self.elapsed_s[i]:.6f}",
                        repr(float(self.elbo[i])),
                        repr(float(self.param_norm[i])),
                    ]
                )


def _init_locations(family, count, X, seed, stream, activation, geometry, truncation):
    """Locations / basis / activation for one inducing set."""
    rng = np.random.default_rng([seed, stream])
    if family == "points":
        if count > X.shape[0]:
            raise ValueError(
                f"cannot seed {count} point locations from {X.shape[0]} inputs"
            )
        centers, _ = kmeans_plusplus(
            np.asarray(X, dtype=float), n_clusters=count, random_state=int(rng.integers(2**31))
        )
        return InducingSet("points", locations=centers)
    if family == "activations":
        # Ambient weights: one extra coordinate is the feature's own bias.
        w = rng.standard_normal((count, X.shape[1] + 1))
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        shape = ActivationShape.build(activation, geometry, truncation)
        return InducingSet("activations", locations=w, activation=shape)
    if family == "harmonics":
        basis = build_harmonic_basis(geometry, truncation, seed=seed)
        return InducingSet("harmonics", basis=basis)
    raise ValueError(f"unknown feature family {family!r}")


def init_model(config: ModelConfig, dataset, seed: int = 0) -> GPModel:
    """Defaults: unit amplitude/lengthscale, noise variance 1, q matched to
    its prior (zero initial KL), k-means++ points, seeded unit random
    activation weights."""
    X = np.asarray(dataset.X, dtype=float)
    geometry = SphereGeometry.for_dimension(X.shape[1] + 1)
    kernel = ZonalKernel(config.kernel, amplitude=1.0, lengthscale=1.0, bias=config.bias)
    spectrum = kernel_spectrum(kernel, geometry, config.truncation)
    active = spectrum.active_levels()

    base = _init_locations(
        config.base_family, config.num_base, X, seed, 1,
        config.activation, geometry, config.truncation,
    )
    q_u = VariationalGaussian.standard(base.size(active))
    orthogonal = None
    q_v = None
    if config.mode != "svgp":
        orthogonal = _init_locations(
            config.ortho_family, config.num_ortho, X, seed, 2,
            config.activation, geometry, config.truncation,
        )
        q_v = VariationalGaussian.standard(orthogonal.size(active))
    model = GPModel(
        kernel=kernel,
        base=base,
        orthogonal=orthogonal,
        q_u=q_u,
        q_v=q_v,
        noise_precision=1.0,
        truncation=config.truncation,
        mode=config.mode,
    )
    return _match_q_to_prior(model)


def _match_q_to_prior(model: GPModel) -> GPModel:
    """Set q_u = N(0, K_uu) and q_v = N(0, C_vv) so the initial KL is zero.

    Identity-covariance starts can sit tens of ELBO orders below the prior
    when the feature covariance has small eigenvalues, which wastes the
    whole optimization budget climbing back.
    """
    core = ModelCore(model)
    params = core.pack_params(model)
    _, _, lam, z, _, Lu = core._base_state(params)
    q_u = VariationalGaussian(
        mean=np.zeros(Lu.shape[0]), scale=np.asarray(Lu)
    )
    q_v = model.q_v
    if model.mode != "svgp":
        amplitude, lengthscale = core._hyper(params)
        _, _, _, Lv, _ = core._ortho_state(params, amplitude, lengthscale, lam, z, Lu)
        q_v = VariationalGaussian(
            mean=np.zeros(Lv.shape[0]), scale=np.asarray(Lv)
        )
    return replace(model, q_u=q_u, q_v=q_v)


# ---------------------------------------------------------------------------
# Optimization.
# ---------------------------------------------------------------------------


def _flat_spec(params: dict, keys):
    spec = []
    for key in sorted(keys):
        shape = np.shape(params[key])
        spec.append((key, shape, int(np.prod(shape)) if shape else 1))
    return spec


def _flatten(params: dict, spec) -> np.ndarray:
    return np.concatenate(
        [np.asarray(params[key], dtype=float).ravel() for key, _, _ in spec]
    )


def _unflatten(x: np.ndarray, spec) -> dict:
    out, offset = {}, 0
    for key, shape, size in spec:
        out[key] = jnp.asarray(x[offset : offset + size].reshape(shape))
        offset += size
    return out


class _Tracker:
    """Best-iterate bookkeeping and trace rows shared by both optimizers."""

    def __init__(self, start_time):
        self.start = start_time
        self.rows = []
        self.best_value = -np.inf
        self.best_params = None

    def record(self, value, params, param_norm):
        self.rows.append((value, time.perf_counter() - self.start, param_norm))
        if np.isfinite(value) and value > self.best_value:
            self.best_value = value
            self.best_params = {k: np.asarray(v) for k, v in params.items()}


def _run_lbfgs(core, params, free_keys, X, y, n_total, max_iters, tracker):
    if max_iters == 0 or not free_keys:
        return params, True
    spec = _flat_spec(params, free_keys)
    frozen = {k: params[k] for k in params if k not in free_keys}

    def loss(free):
        return -core.elbo({**frozen, **free}, X, y, n_total)

    value_grad = jax.jit(jax.value_and_grad(loss))

    def objective(x):
        value, grads = value_grad(_unflatten(x, spec))
        value = float(value)
        if not np.isfinite(value):
            # Poison the line search away from the non-finite region.
            return 1e30, np.zeros(x.size)
        return value, _flatten({k: np.asarray(v) for k, v in grads.items()}, spec)

    def callback(xk):
        free = _unflatten(xk, spec)
        value = -float(value_grad(free)[0])
        tracker.record(value, {**frozen, **free}, float(np.linalg.norm(xk)))

    x0 = _flatten(params, spec)
    result = minimize(
        objective,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=callback,
        options={"maxiter": max_iters, "maxcor": 10, "gtol": 1e-8, "ftol": 1e-12},
    )
    x = result.x
    ok = bool(result.success)
    if not np.all(np.isfinite(x)) or objective(x)[0] >= 1e30:
        # Non-finite terminal iterate: roll back to the best finite one.
        ok = False
        if tracker.best_params is not None:
            return {k: jnp.asarray(v) for k, v in tracker.best_params.items()}, ok
        x = x0
    best = dict(frozen)
    best.update(_unflatten(x, spec))
    return best, ok


def _run_adam(core, params, free_keys, X, y, schedule, epochs, tracker, rng):
    if epochs == 0 or not free_keys:
        return params, True
    n = y.shape[0]
    batch = min(schedule.batch_size, n)
    frozen_keys = [k for k in params if k not in free_keys]

    def loss(free, frozen, Xb, yb):
        return -core.elbo({**frozen, **free}, Xb, yb, n)

    value_grad = jax.jit(jax.value_and_grad(loss))
    full_elbo = jax.jit(lambda p: core.elbo(p, X, y, n))

    free = {k: jnp.asarray(params[k]) for k in free_keys}
    frozen = {k: jnp.asarray(params[k]) for k in frozen_keys}
    m = {k: jnp.zeros_like(v) for k, v in free.items()}
    v = {k: jnp.zeros_like(vv) for k, vv in free.items()}
    b1, b2 = ADAM_BETAS
    step = 0
    last_finite = dict(free)
    ok = True
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n - batch + 1, batch):
            idx = order[lo : lo + batch]
            value, grads = value_grad(free, frozen, X[idx], y[idx])
            if not np.isfinite(float(value)):
                free = dict(last_finite)  # rollback and stop
                ok = False
                break
            last_finite = dict(free)
            step += 1
            for k in free:
                m[k] = b1 * m[k] + (1 - b1) * grads[k]
                v[k] = b2 * v[k] + (1 - b2) * grads[k] ** 2
                mh = m[k] / (1 - b1**step)
                vh = v[k] / (1 - b2**step)
                free[k] = free[k] - schedule.learning_rate * mh / (jnp.sqrt(vh) + ADAM_EPS)
        else:
            merged = {**frozen, **free}
            value = float(full_elbo(merged))
            norm = float(
                np.sqrt(sum(float(jnp.sum(p**2)) for p in free.values()))
            )
            tracker.record(value, merged, norm)
            continue
        break
    out = {**{k: params[k] for k in frozen_keys}, **free}
    return out, ok


def fit(model: GPModel, dataset, schedule: FitSchedule):
    """Two-phase fit; returns (best model, trace)."""
    X = np.asarray(dataset.X, dtype=float)
    y = np.asarray(dataset.y, dtype=float).reshape(-1)
    if y.size == 0:
        raise ValueError("cannot fit on an empty dataset")
    core = ModelCore(model)
    params = core.pack_params(model)
    tracker = _Tracker(time.perf_counter())
    variational_keys = [k for k in params if k not in HYPER_KEYS]
    rng = np.random.default_rng(schedule.seed)

    converged = True
    if schedule.optimizer == "lbfgs":
        params, ok1 = _run_lbfgs(
            core, params, variational_keys, X, y, y.size, schedule.phase1_iters, tracker
        )
        params, ok2 = _run_lbfgs(
            core, params, list(params), X, y, y.size, schedule.max_iters, tracker
        )
        converged = ok1 and ok2
    else:
        steps_per_epoch = max(1, y.size // min(schedule.batch_size, y.size))
        phase1_epochs = -(-schedule.phase1_iters // steps_per_epoch)
        params, ok1 = _run_adam(
            core, params, variational_keys, X, y, schedule, phase1_epochs, tracker, rng
        )
        params, ok2 = _run_adam(
            core, params, list(params), X, y, schedule, schedule.max_iters, tracker, rng
        )
        converged = ok1 and ok2

    if all(np.all(np.isfinite(np.asarray(p))) for p in params.values()):
        final_value = float(core.elbo(params, X, y, y.size))
        tracker.record(
            final_value,
            params,
            float(np.sqrt(sum(float(np.sum(np.asarray(p) ** 2)) for p in params.values()))),
        )
    best_params = (
        {k: jnp.asarray(v) for k, v in tracker.best_params.items()}
        if tracker.best_params is not None
        else params
    )
    fitted = core.unpack_params(model, best_params)
    rows = np.asarray(tracker.rows, dtype=float).reshape(-1, 3)
    trace = FitTrace(
        elbo=rows[:, 0],
        elapsed_s=rows[:, 1],
        param_norm=rows[:, 2],
        converged=converged,
        best_elbo=float(tracker.best_value),
    )
    return fitted, trace
