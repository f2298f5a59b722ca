"""Orthonormal spherical-harmonic bases on S^{D-1} for arbitrary D.

Closed-form harmonics are inconvenient beyond D = 3, so each level is
realized by a *fundamental system*: N_{D,l} unit directions v_i whose
level-l reproducing-kernel Gram

    G_ij = (N_{D,l} / |S^{D-1}|) * Cbar_l(v_i . v_j)

is positive definite.  With G = R R^T, the functions
Y_j(x) = [R^{-1} g(x)]_j (g the Gram column at x) form an orthonormal
basis of the level; the addition theorem then holds by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np
from scipy.linalg import solve_triangular

from .special_math import (
    SphereGeometry,
    gegenbauer_normalized_all,
    num_harmonics,
)

__all__ = [
    "FundamentalSystem",
    "HarmonicBasis",
    "build_fundamental_system",
    "build_harmonic_basis",
    "eval_harmonics",
    "save_basis",
    "load_basis",
]

CANDIDATES_PER_PIVOT = 20
PIVOT_REL_TOL = 1e-10


class DegenerateSystemError(RuntimeError):
    pass


@dataclass(frozen=True)
class FundamentalSystem:
    level: int
    directions: np.ndarray  # (N, D) unit rows
    gram_factor: np.ndarray  # (N, N) lower Cholesky of the level Gram

    def __post_init__(self):
        dirs = np.asarray(self.directions, dtype=float)
        fac = np.asarray(self.gram_factor, dtype=float)
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "gram_factor", fac)
        norms = np.linalg.norm(dirs, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise ValueError(f"non-unit direction in level-{self.level} system")
        if np.any(np.diag(fac) <= 0):
            raise ValueError(f"level-{self.level} Gram factor is not positive")

    @property
    def size(self) -> int:
        return self.directions.shape[0]


@dataclass(frozen=True)
class HarmonicBasis:
    geometry: SphereGeometry
    max_level: int
    systems: tuple

    def __post_init__(self):
        if len(self.systems) != self.max_level + 1:
            raise ValueError("need one fundamental system per level 0..max_level")

    @property
    def level_sizes(self) -> np.ndarray:
        return np.array([s.size for s in self.systems])

    @property
    def total_size(self) -> int:
        return int(self.level_sizes.sum())

    def level_of_column(self) -> np.ndarray:
        """Level index l for every flat basis column m."""
        return np.repeat(np.arange(self.max_level + 1), self.level_sizes)


def _level_normalizer(geometry: SphereGeometry, level: int) -> float:
    return num_harmonics(geometry, level) / geometry.surface_area


def build_fundamental_system(
    geometry: SphereGeometry,
    level: int,
    seed: int,
    candidates_per_pivot: int = CANDIDATES_PER_PIVOT,
) -> FundamentalSystem:
    """Greedy determinant maximization: grow the Cholesky factor one
    direction at a time, keeping the candidate with the largest new pivot."""
    if level < 0:
        raise ValueError("level must be nonnegative")
    D = geometry.ambient_dim
    n = num_harmonics(geometry, level)
    c = _level_normalizer(geometry, level)
    rng = np.random.default_rng([seed, level])

    directions = np.zeros((n, D))
    factor = np.zeros((n, n))
    for i in range(n):
        cand = rng.standard_normal((candidates_per_pivot * n, D))
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        if i == 0:
            pivots_sq = np.full(cand.shape[0], c)
            rows = np.zeros((0, cand.shape[0]))
        else:
            cos = np.clip(directions[:i] @ cand.T, -1.0, 1.0)
            gram_cols = c * np.asarray(
                gegenbauer_normalized_all(level, geometry.alpha, cos)[-1]
            )
            rows = solve_triangular(factor[:i, :i], gram_cols, lower=True)
            pivots_sq = c - np.sum(rows**2, axis=0)
        best = int(np.argmax(pivots_sq))
        if pivots_sq[best] < PIVOT_REL_TOL * c:
            raise DegenerateSystemError(
                f"no candidate kept the level-{level} Gram positive definite "
                f"(D={D}, achieved size {i} of {n})"
            )
        directions[i] = cand[best]
        factor[i, :i] = rows[:, best] if i else []
        factor[i, i] = np.sqrt(pivots_sq[best])
    return FundamentalSystem(level=level, directions=directions, gram_factor=factor)


def build_harmonic_basis(
    geometry: SphereGeometry, max_level: int, seed: int = 0
) -> HarmonicBasis:
    systems = tuple(
        build_fundamental_system(geometry, ell, seed) for ell in range(max_level + 1)
    )
    return HarmonicBasis(geometry=geometry, max_level=max_level, systems=systems)


def eval_harmonics(basis: HarmonicBasis, points, levels=None):
    """Evaluate all Y_{l,j} at unit points; columns follow (l, j) order.

    ``levels`` restricts to a subset of levels (flat column order preserved).
    """
    points = jnp.atleast_2d(jnp.asarray(points, dtype=jnp.float64))
    norms = jnp.linalg.norm(points, axis=1)
    try:
        ok = bool(jnp.max(jnp.abs(norms - 1.0)) <= 1e-8)
    except Exception:
        ok = True
    if not ok:
        raise ValueError("harmonic evaluation requires unit-normalized rows")

    geometry = basis.geometry
    if levels is None:
        levels = range(basis.max_level + 1)
    cos_all = None
    blocks = []
    for ell in levels:
        system = basis.systems[ell]
        c = _level_normalizer(geometry, ell)
        cos = jnp.clip(points @ system.directions.T, -1.0, 1.0)
        gram_cols = c * gegenbauer_normalized_all(ell, geometry.alpha, cos)[-1]
        y = jax_solve_lower(system.gram_factor, gram_cols.T)
        blocks.append(y.T)
    return jnp.concatenate(blocks, axis=1)


def jax_solve_lower(factor: np.ndarray, rhs):
    from jax.scipy.linalg import solve_triangular as jst

    return jst(jnp.asarray(factor), rhs, lower=True)


def save_basis(basis: HarmonicBasis, path: str) -> None:
    """Flat npz bundle (geometry + per-level directions and factors)."""
    arrays = {
        "meta": np.frombuffer(
            json.dumps(
                {
                    "ambient_dim": basis.geometry.ambient_dim,
                    "alpha": basis.geometry.alpha,
                    "weight_exponent": basis.geometry.weight_exponent,
                    "max_level": basis.max_level,
                }
            ).encode(),
            dtype=np.uint8,
        )
    }
    for system in basis.systems:
        arrays[f"directions_{system.level}"] = system.directions
        arrays[f"factor_{system.level}"] = system.gram_factor
    np.savez(path, **arrays)


def load_basis(path: str) -> HarmonicBasis:
    with np.load(path) as bundle:
        meta = json.loads(bundle["meta"].tobytes().decode())
        geometry = SphereGeometry(
            ambient_dim=int(meta["ambient_dim"]),
            alpha=float(meta["alpha"]),
            weight_exponent=float(meta["weight_exponent"]),
        )
        systems = tuple(
            FundamentalSystem(
                level=ell,
                directions=bundle[f"directions_{ell}"],
                gram_factor=bundle[f"factor_{ell}"],
            )
            for ell in range(int(meta["max_level"]) + 1)
        )
    return HarmonicBasis(
        geometry=geometry, max_level=int(meta["max_level"]), systems=systems
    )
