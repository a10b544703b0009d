"""Dirichlet Laplacian on the weighted grid, its semigroup and boundary data.

All dense operators live in orthonormalized coordinates y = sqrt(G) f, where
G is the diagonal Gram matrix, so that weighted adjoints are transposes.

The generator is *not* self-adjoint in the weighted space. It is, however,
similar to a symmetric matrix: with the nodal stencil L = -W^{-1} K (K the
symmetric stiffness matrix, W the stencil cell widths),

    A = S L S^{-1} = V diag(-mu) V^{-1},   V = S W^{-1/2} Q,

where Q diagonalizes W^{-1/2} K W^{-1/2}. Every function of A (semigroup,
fractional powers, resolvents) is evaluated through this factorization, which
is exact up to the conditioning of the diagonal S W^{-1/2}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg, special

from . import _backend
from .errors import ConfigError, NumericError
from .weighted_space import Gram, Grid, WeightSpec, build_grid, weight_at

__all__ = [
    "Spectrum",
    "LinOp",
    "BoundaryInput",
    "dirichlet_laplacian",
    "heat_kernel",
    "apply_semigroup_kernel",
    "semigroup_on_exponential",
    "semigroup_matrix",
    "fractional_power",
    "dirichlet_map",
    "boundary_input",
    "yosida",
    "regularity_integral",
    "gamma_integral",
    "semigroup_norm",
    "analyticity_norm",
    "phi_functions",
]


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigen-data of -A in orthonormalized coordinates.

    ``mu`` holds the eigenvalues of -A in ascending order. ``vectors`` and
    ``inverse`` are V and V^{-1}; they are stored through their factors
    ``scale`` (diagonal) and ``q`` (orthogonal), V = diag(scale) q.
    """

    mu: np.ndarray
    q: np.ndarray
    scale: np.ndarray

    @cached_property
    def vectors(self) -> np.ndarray:
        return self.scale[:, None] * self.q

    @cached_property
    def inverse(self) -> np.ndarray:
        return self.q.T / self.scale[None, :]

    @cached_property
    def gram(self) -> np.ndarray:
        """V^T V, the metric of eigen-coordinates."""
        return (self.q.T * self.scale**2) @ self.q

    def eigenvalues(self, lambda0: float = 0.0) -> np.ndarray:
        """Eigenvalues of lambda0 I - A, ascending."""
        return lambda0 + self.mu

    def apply_function(self, values: np.ndarray) -> np.ndarray:
        """Dense V diag(values) V^{-1}."""
        return (self.scale[:, None] * (self.q * values[None, :])) @ (self.q.T / self.scale[None, :])

    def to_eigen(self, y):
        """Coordinates c = V^{-1} y (batched over leading axes)."""
        return (np.asarray(y) / self.scale) @ self.q

    def from_eigen(self, c):
        return (np.asarray(c) @ self.q.T) * self.scale


@dataclass(frozen=True, eq=False)
class LinOp:
    """Dense operator in orthonormalized coordinates of ``grid``."""

    matrix: np.ndarray
    grid: Grid
    gram: Gram = field(repr=False)
    spectrum: Spectrum | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def T(self) -> "LinOp":
        """Weighted adjoint."""
        return LinOp(self.matrix.T.copy(), self.grid, self.gram)

    def _same_grid(self, other: "LinOp"):
        if other.grid is not self.grid:
            raise ValueError("operators act on different grids")

    def __matmul__(self, other):
        if isinstance(other, LinOp):
            self._same_grid(other)
            return LinOp(self.matrix @ other.matrix, self.grid, self.gram)
        return self.matrix @ np.asarray(other)

    def apply_nodal(self, f):
        """Apply to nodal vectors (batched over leading axes)."""
        f = np.asarray(f, dtype=float)
        y = f * self.gram.sqrt_diag
        return (y @ self.matrix.T) * self.gram.inv_sqrt_diag

    def norm(self) -> float:
        """Operator norm on the weighted space."""
        return float(np.linalg.norm(self.matrix, 2))

    def get_spectrum(self) -> Spectrum:
        if self.spectrum is not None:
            return self.spectrum
        return _generic_spectrum(self.matrix)


def _generic_spectrum(m: np.ndarray) -> Spectrum:
    # general real-diagonalizable operators (used for the zero operator etc.)
    w, v = linalg.eig(m)
    if np.max(np.abs(w.imag), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(w))):
        raise NumericError("operator has complex spectrum")
    order = np.argsort(-w.real)
    mu = -w.real[order]
    vecs = v.real[:, order]
    col = np.linalg.norm(vecs, axis=0)
    vecs = vecs / col
    inv = np.linalg.inv(vecs)
    # stored as scale * q with scale = 1; q is generally not orthogonal here
    spec = Spectrum(mu, vecs, np.ones(m.shape[0]))
    spec.__dict__["inverse"] = inv
    spec.__dict__["gram"] = vecs.T @ vecs
    spec.__dict__["vectors"] = vecs
    return spec


def _stencil(grid: Grid):
    h = grid.spacing
    hl, hr = h[:-1], h[1:]
    width = 0.5 * (hl + hr)
    if np.any(h <= 0) or not np.all(np.isfinite(h)):
        raise NumericError("degenerate mesh spacing")
    k_diag = 1.0 / hl + 1.0 / hr
    k_off = -1.0 / hr[:-1]
    return width, k_diag, k_off


def nodal_laplacian(grid: Grid) -> np.ndarray:
    """Dense three-point nonuniform second difference with Dirichlet ends."""
    width, k_diag, k_off = _stencil(grid)
    lap = np.diag(-k_diag) - np.diag(k_off, 1) - np.diag(k_off, -1)
    return lap / width[:, None]


def dirichlet_laplacian(grid: Grid) -> LinOp:
    """Discrete generator A, conjugated into orthonormalized coordinates."""
    gram = Gram.from_grid(grid)
    width, k_diag, k_off = _stencil(grid)
    r = 1.0 / np.sqrt(width)
    d = k_diag * r * r
    e = k_off * r[:-1] * r[1:]
    try:
        mu, q = linalg.eigh_tridiagonal(d, e)
    except linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition of the Laplacian failed: {exc}") from exc
    if mu[0] <= 0:
        raise NumericError("discrete Laplacian is not dissipative")
    scale = gram.sqrt_diag * r
    nodal = nodal_laplacian(grid)
    matrix = gram.sqrt_diag[:, None] * nodal * gram.inv_sqrt_diag[None, :]
    return LinOp(matrix, grid, gram, Spectrum(mu, q, scale))


def heat_kernel(t, xi, eta):
    """Dirichlet heat kernel of the half-line."""
    if not np.all(np.asarray(t) > 0):
        raise ConfigError("heat_kernel requires t > 0")
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    out = -np.exp(-((xi - eta) ** 2) / (4.0 * t)) * np.expm1(-xi * eta / t) / np.sqrt(4.0 * np.pi * t)
    return out if out.ndim else float(out)


def apply_semigroup_kernel(t: float, f, grid: Grid) -> np.ndarray:
    """Half-line heat semigroup by quadrature of the exact kernel (no truncation wall)."""
    if t <= 0:
        raise ConfigError("apply_semigroup_kernel requires t > 0")
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ConfigError("non-finite input vector")
    k = _backend.heat_kernel_matrix(float(t), grid.nodes, grid.nodes)
    return (f * grid.quad_weights) @ k.T


def semigroup_on_exponential(t, mu, xi):
    """Closed form of int_0^inf k(t, xi, eta) exp(-mu eta) d eta.

    Completing the square in each image term gives

        exp(mu^2 t - mu xi) N((xi - 2 mu t) / sqrt(2t))
          - 1/2 erfcx((xi + 2 mu t) / (2 sqrt t)) exp(-xi^2 / (4t)),

    with N the standard normal CDF; the second term is written through the
    scaled complementary error function to avoid overflow.
    """
    t = np.asarray(t, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if np.any(t <= 0) or np.any(np.asarray(mu) <= 0):
        raise ConfigError("semigroup_on_exponential requires t > 0 and mu > 0")
    st = np.sqrt(t)
    first = np.exp(mu * mu * t - mu * xi + special.log_ndtr((xi - 2.0 * mu * t) / (np.sqrt(2.0) * st)))
    second = 0.5 * special.erfcx((xi + 2.0 * mu * t) / (2.0 * st)) * np.exp(-xi * xi / (4.0 * t))
    # the two terms cancel at the boundary; pin the Dirichlet value exactly
    out = np.where(xi == 0, 0.0, first - second)
    return out if out.ndim else float(out)


def semigroup_matrix(A: LinOp, t: float) -> LinOp:
    """e^{tA} through the eigen-factorization of A."""
    if t < 0:
        raise ConfigError("semigroup_matrix requires t >= 0")
    if t == 0:
        return LinOp(np.eye(A.n), A.grid, A.gram, None)
    spec = A.get_spectrum()
    return LinOp(spec.apply_function(np.exp(-t * spec.mu)), A.grid, A.gram)


def fractional_power(A: LinOp, lambda0: float, gamma: float) -> LinOp:
    """(lambda0 I - A)^gamma."""
    spec = A.get_spectrum()
    ev = spec.eigenvalues(lambda0)
    if np.any(ev <= 0):
        raise NumericError(
            f"lambda0 I - A has nonpositive eigenvalue {ev.min():.3e}; increase lambda0"
        )
    if gamma == 0:
        return LinOp(np.eye(A.n), A.grid, A.gram)
    return LinOp(spec.apply_function(ev**gamma), A.grid, A.gram)


def dirichlet_map(lam: float, a: float, grid: Grid) -> np.ndarray:
    """Nodal samples of a * exp(-sqrt(lam) xi), the solution of (lam - d^2) phi = 0, phi(0) = a."""
    if lam <= 0:
        raise ConfigError("dirichlet_map requires lambda > 0")
    return a * np.exp(-np.sqrt(lam) * grid.nodes)


@dataclass(frozen=True, eq=False)
class BoundaryInput:
    """Boundary actuation data as nodal vectors.

    ``psi`` is the Dirichlet lift of the unit boundary value, ``e_vec`` its
    image under (lambda0 - A)^alpha and ``b_vec`` = (lambda0 - A) psi, the
    discrete boundary channel (a spike at the first node plus the stencil
    residual of the exponential).
    """

    lambda0: float
    alpha: float
    psi: np.ndarray
    e_vec: np.ndarray
    b_vec: np.ndarray
    gram: Gram = field(repr=False)

    @property
    def b_ortho(self) -> np.ndarray:
        return self.b_vec * self.gram.sqrt_diag

    @property
    def e_ortho(self) -> np.ndarray:
        return self.e_vec * self.gram.sqrt_diag

    @property
    def psi_ortho(self) -> np.ndarray:
        return self.psi * self.gram.sqrt_diag


def admissible_alpha(theta: float) -> tuple[float, float]:
    return 0.5, 0.5 + theta / 4.0


def boundary_input(A: LinOp, grid: Grid, lambda0: float = 1.0, alpha: float | None = None) -> BoundaryInput:
    theta = grid.weight.theta
    lo, hi = admissible_alpha(theta)
    if alpha is None:
        alpha = 0.5 + theta / 8.0
    if not lo < alpha < hi:
        raise ConfigError(f"alpha={alpha} outside the admissible interval ({lo}, {hi}) for theta={theta}")
    if lambda0 <= 0:
        raise ConfigError("lambda0 must be positive")
    psi = dirichlet_map(lambda0, 1.0, grid)
    b_vec = lambda0 * psi - nodal_laplacian(grid) @ psi
    spec = A.get_spectrum()
    e_o = spec.apply_function(spec.eigenvalues(lambda0) ** alpha) @ (psi * A.gram.sqrt_diag)
    e_vec = e_o * A.gram.inv_sqrt_diag
    return BoundaryInput(float(lambda0), float(alpha), psi, e_vec, b_vec, A.gram)


def yosida(A: LinOp, n: int) -> LinOp:
    """(n (n I - A)^{-1})^2."""
    if n < 1:
        raise ConfigError("yosida index must be >= 1")
    spec = A.get_spectrum()
    den = n + spec.mu
    if np.any(den == 0):
        raise NumericError("singular resolvent")
    return LinOp(spec.apply_function((n / den) ** 2), A.grid, A.gram)


def _nodal_functions(A: LinOp, values: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Columns g(mu_k) applied to nodal f for each row of ``values`` (shape (m, n))."""
    spec = A.get_spectrum()
    c = spec.to_eigen(f * A.gram.sqrt_diag)
    return spec.from_eigen(values * c[None, :]) * A.gram.inv_sqrt_diag


def log_grid(lo: float, hi: float, points_per_decade: int) -> np.ndarray:
    m = max(2, int(np.ceil(np.log10(hi / lo) * points_per_decade)) + 1)
    return np.geomspace(lo, hi, m)


def regularity_integral(
    weight: WeightSpec,
    lam: float,
    sigma: float,
    t_cut: float,
    grid: Grid,
    *,
    A: LinOp | None = None,
    points_per_decade: int = 16,
    psi=None,
) -> float:
    """int_0^t_cut t^(2 sigma - 3) |(e^{tA} - I) psi_lam|^2 dt in the ``weight`` norm.

    The t-grid is geometric from 1e-3 / mu_max, below which the integrand is
    in its quadratic regime and integrated in closed form, up to ``t_cut``.
    ``psi`` replaces the Dirichlet-map profile by another nodal vector.
    """
    if not 0 < sigma < 1 or t_cut <= 0 or t_cut > 1:
        raise ConfigError("regularity_integral needs sigma in (0,1) and 0 < t_cut <= 1")
    A = dirichlet_laplacian(grid) if A is None else A
    spec = A.get_spectrum()
    psi = dirichlet_map(lam, 1.0, grid) if psi is None else np.asarray(psi, dtype=float)
    rho_q = np.asarray(weight_at(weight, grid.nodes)) * grid.quad_weights
    t_min = min(1e-3 / spec.mu[-1], 1e-3 * t_cut)
    ts = log_grid(t_min, t_cut, points_per_decade)
    diffs = _nodal_functions(A, np.expm1(-np.outer(ts, spec.mu)), psi)
    sq = np.sum(diffs**2 * rho_q, axis=1)
    y = ts ** (2 * sigma - 2) * sq
    body = np.trapezoid(y, np.log(ts))
    # |(e^{tA} - I) psi|^2 ~ c t^2 below t_min
    head = sq[0] * t_min ** (2 * sigma - 2) / (2 * sigma)
    return float(body + head)


def gamma_integral(
    bi: BoundaryInput,
    A: LinOp,
    gamma: float,
    T: float,
    *,
    points_per_decade: int = 48,
    lower: float = 0.0,
) -> float:
    """int_lower^T s^(-gamma) |(lambda0 - A) e^{sA} psi|^2 ds by geometric quadrature."""
    if gamma >= 1:
        raise ConfigError("gamma_integral requires gamma < 1")
    spec = A.get_spectrum()
    c = spec.to_eigen(bi.b_ortho)
    s_min = 1e-3 / spec.mu[-1]
    if lower > 0:
        s_min = max(s_min, lower)
    ss = log_grid(s_min, T, points_per_decade)
    vals = spec.from_eigen(np.exp(-np.outer(ss, spec.mu)) * c[None, :])
    sq = np.sum(vals**2, axis=1)
    body = np.trapezoid(ss ** (1.0 - gamma) * sq, np.log(ss))
    head = 0.0
    if lower <= 0:
        head = sq[0] * s_min ** (1.0 - gamma) / (1.0 - gamma)
    return float(body + head)


def gamma_integrand(bi: BoundaryInput, A: LinOp, s) -> np.ndarray:
    """|(lambda0 - A) e^{sA} psi|_H^2 at the times ``s``."""
    spec = A.get_spectrum()
    c = spec.to_eigen(bi.b_ortho)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    vals = spec.from_eigen(np.exp(-np.outer(s, spec.mu)) * c[None, :])
    return np.sum(vals**2, axis=1)


def semigroup_norm(A: LinOp, t: float) -> float:
    return semigroup_matrix(A, t).norm()


def analyticity_norm(A: LinOp, t: float) -> float:
    """t |A e^{tA}| on the weighted space."""
    spec = A.get_spectrum()
    m = spec.apply_function(-spec.mu * np.exp(-t * spec.mu))
    return float(t * np.linalg.norm(m, 2))


def phi_functions(z, k_max: int = 3, n_contour: int = 32):
    """phi_1 .. phi_k_max of z (elementwise), phi_k(z) = sum_j z^j / (j + k)!.

    Evaluated as contour means over a unit circle around each point, which is
    accurate uniformly from z = 0 to large negative z.
    """
    z = np.asarray(z, dtype=float)
    roots = np.exp(1j * np.pi * (np.arange(1, n_contour + 1) - 0.5) / n_contour)
    out = []
    w = z[..., None] + roots
    ew = np.exp(w)
    phi = (ew - 1.0) / w
    out.append(np.mean(phi, axis=-1).real)
    fact = 1.0
    for k in range(2, k_max + 1):
        fact /= k - 1
        phi = (phi - fact) / w
        out.append(np.mean(phi, axis=-1).real)
    return out


def refinement_series(weight: WeightSpec, n0: int, levels: int, xi_max: float = 20.0, clustering: float = 2.0):
    """Grids with n = n0, 2 n0, 4 n0, ... (nested levels)."""
    return [build_grid(weight, n0 * 2**k, xi_max, clustering, refinement_level=k) for k in range(levels)]
