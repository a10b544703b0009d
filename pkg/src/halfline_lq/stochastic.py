"""Monte Carlo simulation of the boundary-driven heat equation.

The state is advanced with the exponential Euler scheme

    x_{k+1} = e^{hA} x_k + (int_0^h e^{sA} ds) b u_k + G_k,

where G_k = int e^{(t_{k+1}-s)A} b dW(s) over one step. The pair
(Delta W_k, G_k) is drawn exactly from its joint Gaussian law, so the
discrete Brownian increments returned by :func:`brownian_increments` are
the ones that drive the ensemble. All step matrices are assembled in closed
form from the eigen-factorization of A.

Normals are keyed on (seed, path, step, component) through a Philox counter
stream, so every path sees the same noise however paths are split into
chunks. For a fixed chunk size the ensemble is bit-identical under any worker
count or schedule; a different chunk size changes BLAS blocking and hence
only the last bits.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Literal

import numpy as np

from . import _backend
from .errors import ConfigError, NumericError, SimulationError
from .operators import BoundaryInput, LinOp, phi_functions

__all__ = [
    "NoiseConfig",
    "ControlSignal",
    "TrajectoryEnsemble",
    "StepOperator",
    "brownian_increments",
    "standard_normals",
    "stochastic_convolution",
    "simulate_mild",
    "simulate_closed_loop",
    "moment_recursion",
]

DEFAULT_CHUNK = 256


@dataclass(frozen=True)
class NoiseConfig:
    seed: int = 0
    n_paths: int = 1000
    n_steps: int = 400
    tau: float = 0.0
    horizon_T: float = 1.0
    noise: bool = True

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be positive")
        if self.n_steps < 1:
            raise ConfigError("n_steps must be positive")
        if not (np.isfinite(self.tau) and np.isfinite(self.horizon_T)) or self.tau < 0:
            raise ConfigError("tau must be finite and nonnegative")
        if self.horizon_T <= self.tau:
            raise ConfigError("horizon_T must exceed tau")

    @property
    def dt(self) -> float:
        return (self.horizon_T - self.tau) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.tau, self.horizon_T, self.n_steps + 1)


@dataclass(frozen=True, eq=False)
class ControlSignal:
    """Open-loop or feedback control.

    ``sampled`` values have shape (n_steps + 1,) or (n_paths, n_steps + 1)
    (``n_steps`` per path is accepted for zero-order hold) and are held either constant over each step (``hold="zoh"``) or linearly
    interpolated (``hold="linear"``). ``feedback`` evaluates -g(t_k) . x_k at
    the left end of every step.
    """

    kind: Literal["zero", "constant", "sampled", "feedback"] = "zero"
    value: float = 0.0
    values: np.ndarray | None = None
    riccati: object | None = None
    hold: Literal["zoh", "linear"] = "zoh"

    @classmethod
    def zero(cls) -> "ControlSignal":
        return cls("zero")

    @classmethod
    def constant(cls, c: float) -> "ControlSignal":
        return cls("constant", value=float(c))

    @classmethod
    def sampled(cls, values, hold: str = "linear") -> "ControlSignal":
        return cls("sampled", values=np.asarray(values, dtype=float), hold=hold)

    @classmethod
    def feedback(cls, riccati) -> "ControlSignal":
        return cls("feedback", riccati=riccati)

    @property
    def control_hold(self) -> str:
        return "linear" if self.kind == "sampled" and self.hold == "linear" else "zoh"

    def open_loop(self, paths: np.ndarray, n_steps: int) -> np.ndarray:
        """Values at the step times for the given global path indices."""
        if self.kind == "zero":
            return np.zeros((paths.size, n_steps + 1))
        if self.kind == "constant":
            return np.full((paths.size, n_steps + 1), self.value)
        if self.kind == "sampled":
            v = self.values
            if v.shape[-1] == n_steps and self.hold == "zoh":
                # one value per step; the endpoint repeats the last one
                v = np.concatenate([v, v[..., -1:]], axis=-1)
            if v.shape[-1] != n_steps + 1:
                raise ConfigError(f"sampled control needs {n_steps + 1} values per path, got {v.shape[-1]}")
            if v.ndim == 1:
                return np.broadcast_to(v, (paths.size, n_steps + 1))
            return v[paths]
        raise ConfigError("feedback controls have no open-loop values")


@dataclass(eq=False)
class TrajectoryEnsemble:
    """Simulated paths. ``states`` (nodal, optional) is (n_paths, n_steps + 1, n)."""

    times: np.ndarray
    controls: np.ndarray
    h_norm_sq: np.ndarray
    seed_used: int
    path_start: int = 0
    states: np.ndarray | None = field(default=None, repr=False)
    records: dict = field(default_factory=dict, repr=False)
    control_hold: str = "zoh"

    @property
    def n_paths(self) -> int:
        return self.controls.shape[0]

    @property
    def terminal(self) -> np.ndarray | None:
        return None if self.states is None else self.states[:, -1, :]


class StepOperator:
    """Precomputed one-step data for step size ``dt`` in orthonormalized coordinates."""

    def __init__(self, A: LinOp, bi: BoundaryInput, dt: float, rank_tol: float = 1e-15):
        if dt <= 0:
            raise ConfigError("step size must be positive")
        spec = A.get_spectrum()
        self.dt = float(dt)
        self.gram = A.gram
        mu = spec.mu
        c = spec.to_eigen(bi.b_ortho)
        z = -mu * dt
        p1, p2 = phi_functions(z, 2)
        self.propagator = spec.apply_function(np.exp(z))
        self.drive0 = spec.from_eigen(dt * p1 * c)  # int_0^h e^{sA} ds b
        self.drive1 = spec.from_eigen(dt * p2 * c)  # linear-hold correction
        # joint law of (dW, G) within one step
        rate = mu[:, None] + mu[None, :]
        (q1,) = phi_functions(-rate * dt, 1)
        Qhat = dt * q1 * np.outer(c, c)
        phat = dt * p1 * c
        V = spec.vectors
        cond = V @ (Qhat - np.outer(phat, phat) / dt) @ V.T
        cond = 0.5 * (cond + cond.T)
        self.covariance = V @ Qhat @ V.T
        self.covariance = 0.5 * (self.covariance + self.covariance.T)
        try:
            w, U = np.linalg.eigh(cond)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"noise covariance factorization failed: {exc}") from exc
        w = np.maximum(w, 0.0)
        keep = w > rank_tol * max(w.max(), np.finfo(float).tiny)
        self.noise_factor = (U[:, keep] * np.sqrt(w[keep])).T.copy()  # (r, n)
        self.dw_coupling = self.drive0 / dt

    @property
    def rank(self) -> int:
        return self.noise_factor.shape[0]

    @property
    def n_normals(self) -> int:
        return 1 + self.rank


def standard_normals(seed: int, path_start: int, n_paths: int, n_steps: int, n_comp: int) -> np.ndarray:
    """Box-Muller normals of shape (n_paths, n_steps, n_comp) from the keyed stream."""
    blocks = (n_comp + 1) // 2
    u = _backend.philox_uniforms(int(seed), int(path_start), int(n_paths), int(n_steps), int(blocks))
    r = np.sqrt(-2.0 * np.log(u[..., 0::2]))
    ang = 2.0 * np.pi * u[..., 1::2]
    z = np.empty_like(u)
    z[..., 0::2] = r * np.cos(ang)
    z[..., 1::2] = r * np.sin(ang)
    return z[..., :n_comp]


def brownian_increments(cfg: NoiseConfig, path_index: int) -> np.ndarray:
    """Delta W over each step for one path (variance dt)."""
    if not 0 <= path_index < cfg.n_paths:
        raise ConfigError("path_index out of range")
    if not cfg.noise:
        return np.zeros(cfg.n_steps)
    z = standard_normals(cfg.seed, path_index, 1, cfg.n_steps, 1)
    return math.sqrt(cfg.dt) * z[0, :, 0]


Recorder = Callable[[np.ndarray], np.ndarray]


def _run_chunk(
    step: StepOperator,
    x0_o: np.ndarray,
    control: ControlSignal,
    gains: np.ndarray | None,
    cfg: NoiseConfig,
    start: int,
    count: int,
    record_states: bool,
    recorders: dict[str, Recorder],
):
    n = x0_o.size
    K = cfg.n_steps
    paths = np.arange(start, start + count)
    X = np.broadcast_to(x0_o, (count, n)).copy()
    if control.kind == "feedback":
        U = np.empty((count, K + 1))
    else:
        U = np.array(control.open_loop(paths, K), dtype=float)
    linear = control.control_hold == "linear"
    if cfg.noise:
        Z = standard_normals(cfg.seed, start, count, K, step.n_normals)
        sdt = math.sqrt(step.dt)
    states = np.empty((count, K + 1, n)) if record_states else None
    hsq = np.empty((count, K + 1))
    recs = {name: np.empty((count, K + 1)) for name in recorders}
    Pt = step.propagator.T
    noiseT = step.noise_factor.T

    def observe(k, X):
        if record_states:
            states[:, k, :] = X
        hsq[:, k] = np.einsum("ij,ij->i", X, X)
        for name, fn in recorders.items():
            recs[name][:, k] = fn(X, k)

    for k in range(K):
        observe(k, X)
        if gains is not None:
            U[:, k] = -(X @ gains[k])
        Xn = X @ Pt + U[:, k, None] * step.drive0
        if linear:
            Xn += (U[:, k + 1] - U[:, k])[:, None] * step.drive1
        if cfg.noise:
            z = Z[:, k, :]
            Xn += (sdt * z[:, 0])[:, None] * step.dw_coupling
            Xn += z[:, 1:] @ step.noise_factor
        if not np.all(np.isfinite(Xn)):
            raise SimulationError(f"non-finite state at step {k + 1} (t = {cfg.tau + (k + 1) * step.dt:.6g})")
        X = Xn
    observe(K, X)
    if gains is not None:
        U[:, K] = -(X @ gains[K])
    if record_states:
        states *= step.gram.inv_sqrt_diag
    return states, U, hsq, recs


def simulate_mild(
    A: LinOp,
    bi: BoundaryInput,
    x0,
    u: ControlSignal,
    cfg: NoiseConfig,
    *,
    record_states: bool = True,
    recorders: dict[str, Recorder] | None = None,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
    step: StepOperator | None = None,
) -> TrajectoryEnsemble:
    """Mild solution on the time grid of ``cfg`` for every path.

    ``recorders`` map names to callables f(X, k) evaluated on the batch of
    orthonormalized states at step k; their outputs are stored per path and
    step in ``records``.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (A.n,):
        raise ConfigError(f"initial condition must have length {A.n}")
    step = StepOperator(A, bi, cfg.dt) if step is None else step
    if abs(step.dt - cfg.dt) > 1e-14 * cfg.dt:
        raise ConfigError("step operator built for a different step size")
    gains = None
    if u.kind == "feedback":
        P = u.riccati
        if P.tau > cfg.tau + 1e-12 or P.T < cfg.horizon_T - 1e-12:
            raise ConfigError("Riccati solution does not cover the simulation interval")
        gains = P.gain_at(cfg.times)
    x0_o = x0 * A.gram.sqrt_diag
    recorders = recorders or {}
    chunk_size = max(1, int(chunk_size))
    starts = list(range(0, cfg.n_paths, chunk_size))
    jobs = [(s, min(chunk_size, cfg.n_paths - s)) for s in starts]

    def run(job):
        s, cnt = job
        return _run_chunk(step, x0_o, u, gains, cfg, s, cnt, record_states, recorders)

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    states = np.concatenate([r[0] for r in results]) if record_states else None
    controls = np.concatenate([r[1] for r in results])
    hsq = np.concatenate([r[2] for r in results])
    recs = {name: np.concatenate([r[3][name] for r in results]) for name in recorders}
    return TrajectoryEnsemble(
        times=cfg.times,
        controls=controls,
        h_norm_sq=hsq,
        seed_used=int(cfg.seed),
        states=states,
        records=recs,
        control_hold=u.control_hold,
    )


def stochastic_convolution(A: LinOp, bi: BoundaryInput, cfg: NoiseConfig, **kwargs) -> TrajectoryEnsemble:
    """W_A(t) = int_tau^t e^{(t-s)A} B dW(s): zero initial state, zero control."""
    return simulate_mild(A, bi, np.zeros(A.n), ControlSignal.zero(), cfg, **kwargs)


def simulate_closed_loop(A: LinOp, bi: BoundaryInput, x0, P, cfg: NoiseConfig, **kwargs) -> TrajectoryEnsemble:
    """Closed loop under u = -g(t) . x with left-endpoint evaluation per step."""
    return simulate_mild(A, bi, x0, ControlSignal.feedback(P), cfg, **kwargs)


@dataclass(eq=False)
class Moments:
    """Exact first and second moments of the discrete scheme at the step times."""

    times: np.ndarray
    mean: np.ndarray  # (K + 1, n) orthonormalized
    cov: np.ndarray  # (K + 1, n, n)
    control_mean: np.ndarray
    control_sq: np.ndarray  # E u_k^2

    @cached_property
    def mean_square(self) -> np.ndarray:
        """E |x(t_k)|_H^2."""
        return np.sum(self.mean**2, axis=1) + np.trace(self.cov, axis1=1, axis2=2)


def moment_recursion(
    A: LinOp,
    bi: BoundaryInput,
    x0,
    cfg: NoiseConfig,
    control: ControlSignal | None = None,
    step: StepOperator | None = None,
) -> Moments:
    """Propagate mean and covariance through the same one-step map as the simulator.

    Supports zero, constant and (path-independent) sampled controls, and
    feedback. Serves as a sampling-free reference for ensemble statistics.
    """
    control = ControlSignal.zero() if control is None else control
    step = StepOperator(A, bi, cfg.dt) if step is None else step
    K, n = cfg.n_steps, A.n
    m = np.asarray(x0, float) * A.gram.sqrt_diag
    S = np.zeros((n, n))
    Qn = step.covariance if cfg.noise else np.zeros((n, n))
    means = np.empty((K + 1, n))
    covs = np.empty((K + 1, n, n))
    um = np.zeros(K + 1)
    usq = np.zeros(K + 1)
    if control.kind == "feedback":
        gains = control.riccati.gain_at(cfg.times)
    else:
        gains = None
        if control.kind == "sampled" and np.asarray(control.values).ndim != 1:
            raise ConfigError("moment_recursion needs a path-independent control")
        vals = control.open_loop(np.arange(1), K)[0]
    M = step.propagator
    for k in range(K):
        means[k], covs[k] = m, S
        if gains is not None:
            g = gains[k]
            Mk = M - np.outer(step.drive0, g)
            um[k] = -g @ m
            usq[k] = um[k] ** 2 + g @ S @ g
            m = Mk @ m
            S = Mk @ S @ Mk.T + Qn
        else:
            um[k] = vals[k]
            usq[k] = vals[k] ** 2
            m = M @ m + vals[k] * step.drive0
            if control.control_hold == "linear":
                m = m + (vals[k + 1] - vals[k]) * step.drive1
            S = M @ S @ M.T + Qn
        S = 0.5 * (S + S.T)
    means[K], covs[K] = m, S
    if gains is not None:
        um[K] = -gains[K] @ m
        usq[K] = um[K] ** 2 + gains[K] @ S @ gains[K]
    else:
        um[K] = vals[K]
        usq[K] = vals[K] ** 2
    return Moments(cfg.times, means, covs, um, usq)
