"""Discrete weighted space on a truncated half-line.

The state space is L^2((0, inf); rho(xi) dxi) with rho(xi) = xi^(1+theta)
("pure_power") or min(1, xi^(1+theta)) ("capped"). It is carried by a graded
mesh on (0, xi_max) whose nodes exclude both endpoints; the boundary values
there are zero and never stored.

A third kind, "unit" (rho = 1), gives the plain L^2(dxi) norm used for the
unweighted comparison runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ConfigError

WeightKind = Literal["pure_power", "capped", "unit"]
_KINDS = ("pure_power", "capped", "unit")


@dataclass(frozen=True)
class WeightSpec:
    theta: float = 0.8
    kind: WeightKind = "capped"

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"weight kind must be one of {_KINDS}, got {self.kind!r}")
        if not np.isfinite(self.theta) or not 0.0 < self.theta < 1.0:
            raise ConfigError(f"theta must lie in (0, 1), got {self.theta!r}")

    def __call__(self, xi):
        return weight_at(self, xi)


def weight_at(weight: WeightSpec, xi):
    """Evaluate rho at ``xi`` (scalar or array, xi >= 0)."""
    xi_arr = np.asarray(xi, dtype=float)
    if not np.all(np.isfinite(xi_arr)):
        raise ConfigError("weight_at: non-finite abscissa")
    if np.any(xi_arr < 0):
        raise ConfigError("weight_at: abscissa must be nonnegative")
    if weight.kind == "unit":
        out = np.ones_like(xi_arr)
    else:
        out = xi_arr ** (1.0 + weight.theta)
        if weight.kind == "capped":
            out = np.minimum(out, 1.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class Grid:
    """Graded mesh on (0, xi_max) with cell-length quadrature weights.

    ``quad_weights[i]`` is the length of the dual cell around ``nodes[i]``
    bounded by the neighbouring midpoints, with the virtual end nodes 0 and
    ``xi_max`` closing the first and last cell. The weights are positive and
    sum to ``xi_max``.
    """

    nodes: np.ndarray
    xi_max: float
    quad_weights: np.ndarray
    weight: WeightSpec
    clustering: float = 2.0
    refinement_level: int = 0

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def spacing(self) -> np.ndarray:
        """Mesh steps h_0..h_n including the virtual endpoints (length n + 1)."""
        return np.diff(np.concatenate(([0.0], self.nodes, [self.xi_max])))

    def refine(self) -> "Grid":
        """Grid with n doubled (2n + 1 nodes, so every old node is kept)."""
        return build_grid(
            self.weight,
            2 * self.n + 1,
            self.xi_max,
            self.clustering,
            refinement_level=self.refinement_level + 1,
        )

    def with_weight(self, weight: WeightSpec) -> "Grid":
        return Grid(self.nodes, self.xi_max, self.quad_weights, weight, self.clustering, self.refinement_level)


def build_grid(
    weight: WeightSpec,
    n: int,
    xi_max: float = 20.0,
    clustering: float = 2.0,
    *,
    refinement_level: int = 0,
) -> Grid:
    """Nodes ``xi_max * ((i + 1) / (n + 1)) ** clustering`` for i < n."""
    if not isinstance(n, (int, np.integer)) or n < 8:
        raise ConfigError(f"grid size n must be an integer >= 8, got {n!r}")
    if not np.isfinite(xi_max) or xi_max < 5:
        raise ConfigError(f"xi_max must be finite and >= 5, got {xi_max!r}")
    if not np.isfinite(clustering) or clustering < 1:
        raise ConfigError(f"clustering must be finite and >= 1, got {clustering!r}")
    s = np.arange(1, n + 1) / (n + 1)
    nodes = xi_max * s**clustering
    full = np.concatenate(([0.0], nodes, [xi_max]))
    if np.any(np.diff(full) <= 0):
        raise ConfigError("degenerate mesh: nodes are not strictly increasing")
    mids = np.concatenate(([0.0], 0.5 * (nodes[1:] + nodes[:-1]), [xi_max]))
    quad = np.diff(mids)
    return Grid(nodes, float(xi_max), quad, weight, float(clustering), int(refinement_level))


@dataclass(frozen=True, eq=False)
class Gram:
    """Diagonal Gram matrix ``rho(nodes) * quad_weights`` and its roots."""

    diag: np.ndarray
    sqrt_diag: np.ndarray = field(repr=False)
    inv_sqrt_diag: np.ndarray = field(repr=False)

    @classmethod
    def from_grid(cls, grid: Grid, weight: WeightSpec | None = None) -> "Gram":
        w = grid.weight if weight is None else weight
        diag = np.asarray(weight_at(w, grid.nodes)) * grid.quad_weights
        if np.any(diag <= 0):
            raise ConfigError("Gram diagonal must be strictly positive")
        root = np.sqrt(diag)
        return cls(diag, root, 1.0 / root)


def _check(f, g, gram):
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != gram.diag.size:
        raise ValueError(f"dimension mismatch: {f.shape[-1]} vs {gram.diag.size}")
    if g is not None:
        g = np.asarray(g, dtype=float)
        if g.shape[-1] != gram.diag.size:
            raise ValueError(f"dimension mismatch: {g.shape[-1]} vs {gram.diag.size}")
    return f, g


def inner(f, g, gram: Gram):
    """Weighted inner product of nodal vectors (batched over leading axes)."""
    f, g = _check(f, g, gram)
    return np.sum(f * g * gram.diag, axis=-1)


def norm(f, gram: Gram):
    return np.sqrt(inner(f, f, gram))


def to_ortho(f, gram: Gram):
    """Coordinates in which the weighted product is the Euclidean one."""
    f, _ = _check(f, None, gram)
    return f * gram.sqrt_diag


def from_ortho(y, gram: Gram):
    y, _ = _check(y, None, gram)
    return y * gram.inv_sqrt_diag
