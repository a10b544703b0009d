"""Cost functional, value function and the fundamental identity.

For a control u with trajectory x the identity reads

    E[<G x(T), x(T)> + int |C x|^2 + |u|^2]
        = <P(tau) x0, x0> + E int |u + g(t) x|^2 + k int <b, P(s) b> ds,

with g = b^T P the feedback gain and k the trace coefficient. Both
candidate coefficients (1/2 and 1) are evaluated; the Monte Carlo residual
decides between them.

Time integrals use the trapezoidal rule for state-dependent terms. Controls
held constant over a step are integrated exactly; their cross terms with the
state use the step average of the trapezoid endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import Problem, ProblemConfig
from .errors import ConfigError
from .operators import BoundaryInput
from .riccati import CostSpec, RiccatiSolution, trace_term
from .stochastic import (
    ControlSignal,
    NoiseConfig,
    StepOperator,
    TrajectoryEnsemble,
    simulate_mild,
)
from .weighted_space import Gram

__all__ = [
    "CostReport",
    "cost_recorders",
    "path_costs",
    "evaluate_cost",
    "value_function",
    "fundamental_identity_residual",
    "select_trace_coeff",
    "ProblemConfig",
    "band_limited_perturbations",
    "optimality_check",
    "PerturbationResult",
    "OptimalityReport",
    "TRACE_COEFFS",
]

TRACE_COEFFS = (0.5, 1.0)


@dataclass
class CostReport:
    J_estimate: float
    J_stderr: float
    quadratic_term: float
    identity_residual: float
    value_analytic: float
    trace_coeff: float = 1.0
    residuals: dict = field(default_factory=dict)
    residual_stderr: float = 0.0
    rhs: dict = field(default_factory=dict)
    n_paths: int = 0

    def within(self, coeff: float, k: float = 3.0) -> bool:
        return abs(self.residuals[coeff]) <= k * self.residual_stderr


def _ortho_cost(cost: CostSpec):
    C = np.asarray(cost.C_op, dtype=float)
    G = np.asarray(cost.G_op, dtype=float)
    return C, G


def cost_recorders(cost: CostSpec, gains: np.ndarray | None = None) -> dict:
    """Recorders for |C x|^2, <G x, x> and (optionally) g(t_k) . x."""
    C, G = _ortho_cost(cost)
    rec = {}
    if np.array_equal(C, np.eye(C.shape[0])):
        rec["Cx2"] = lambda X, k: np.einsum("ij,ij->i", X, X)
    else:
        CtC = C.T @ C
        rec["Cx2"] = lambda X, k: np.einsum("ij,ij->i", X @ CtC, X)
    rec["Gx2"] = lambda X, k: np.einsum("ij,ij->i", X @ G, X)
    if gains is not None:
        rec["gx"] = lambda X, k: X @ gains[k]
    return rec


def _records(ens: TrajectoryEnsemble, cost: CostSpec, gram: Gram):
    if "Cx2" in ens.records:
        return ens.records["Cx2"], ens.records["Gx2"][:, -1]
    if ens.states is None:
        raise ConfigError("ensemble carries neither states nor cost records")
    if ens.states.shape[-1] != gram.diag.size:
        raise ConfigError("ensemble and cost live on different grids")
    C, G = _ortho_cost(cost)
    X = ens.states * gram.sqrt_diag
    cx = X @ C.T
    xT = X[:, -1, :]
    return np.sum(cx**2, axis=-1), np.einsum("ij,ij->i", xT @ G, xT)


def _control_energy(u: np.ndarray, h: float, hold: str) -> np.ndarray:
    if hold == "zoh":
        return h * np.sum(u[:, :-1] ** 2, axis=1)
    return np.trapezoid(u**2, dx=h, axis=1)


def _shifted_energy(u: np.ndarray, y: np.ndarray, h: float, hold: str) -> np.ndarray:
    """int |u + y|^2 dt per path, y sampled at the step times."""
    if hold == "zoh":
        ybar = 0.5 * (y[:, :-1] + y[:, 1:])
        y2 = 0.5 * (y[:, :-1] ** 2 + y[:, 1:] ** 2)
        uk = u[:, :-1]
        return h * np.sum(uk**2 + 2 * uk * ybar + y2, axis=1)
    return np.trapezoid((u + y) ** 2, dx=h, axis=1)


def path_costs(ens: TrajectoryEnsemble, cost: CostSpec, gram: Gram) -> np.ndarray:
    """Per-path cost int |Cx|^2 + |u|^2 dt + <G x(T), x(T)>."""
    cx2, gT = _records(ens, cost, gram)
    h = float(ens.times[1] - ens.times[0])
    running = np.trapezoid(cx2, dx=h, axis=1)
    return running + _control_energy(ens.controls, h, ens.control_hold) + gT


def _mean_se(x: np.ndarray):
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))


def evaluate_cost(ens: TrajectoryEnsemble, cost: CostSpec, gram: Gram):
    """Ensemble mean of the cost and its standard error."""
    return _mean_se(path_costs(ens, cost, gram))


def value_function(P: RiccatiSolution, bi: BoundaryInput | None, x0, cfg, gram: Gram) -> float:
    """<P(tau) x0, x0> + trace_coeff * int_tau^T <b, P(s) b> ds.

    ``cfg`` supplies ``tau`` and ``trace_coeff`` (a ProblemConfig or Problem).
    """
    tau, coeff = _tau_coeff(cfg)
    y = np.asarray(x0, dtype=float) * gram.sqrt_diag
    quad = float(y @ P.P_at(tau) @ y)
    if tau >= P.T:
        return quad
    return quad + trace_term(P, bi, coeff, tau, P.T)


def _tau_coeff(cfg):
    cfg = getattr(cfg, "config", cfg)
    return float(cfg.tau), float(cfg.trace_coeff)


def _ensure_gx(ens: TrajectoryEnsemble, P: RiccatiSolution, gram: Gram) -> np.ndarray:
    if "gx" in ens.records:
        return ens.records["gx"]
    if ens.states is None:
        raise ConfigError("ensemble lacks states and gain records")
    g = P.gain_at(ens.times)
    X = ens.states * gram.sqrt_diag
    return np.einsum("pki,ki->pk", X, g)


def fundamental_identity_residual(u: ControlSignal, P: RiccatiSolution, cfg: Problem, ens: TrajectoryEnsemble) -> CostReport:
    """Both sides of the identity from one ensemble (common random numbers).

    ``ens`` must have been generated under ``u`` from ``cfg.x0``. Residuals are
    reported for both trace coefficients; ``identity_residual`` uses the
    configured one.
    """
    x0, cost, gram = cfg.x0, cfg.cost, cfg.gram
    coeff = float(cfg.config.trace_coeff)
    tau, T = float(ens.times[0]), float(ens.times[-1])
    lhs_p = path_costs(ens, cost, gram)
    y = _ensure_gx(ens, P, gram)
    h = float(ens.times[1] - ens.times[0])
    quad_p = _shifted_energy(ens.controls, y, h, ens.control_hold)
    x0o = np.asarray(x0, float) * gram.sqrt_diag
    p_tau = float(x0o @ P.P_at(tau) @ x0o)
    tr = trace_term(P, None, 1.0, tau, T)
    diff = lhs_p - quad_p - p_tau
    lhs, lhs_se = _mean_se(lhs_p)
    mean_diff, se_diff = _mean_se(diff)
    scale = max(1.0, abs(lhs))
    residuals = {c: (mean_diff - c * tr) / scale for c in TRACE_COEFFS}
    rhs = {c: p_tau + float(quad_p.mean()) + c * tr for c in TRACE_COEFFS}
    return CostReport(
        J_estimate=lhs,
        J_stderr=lhs_se,
        quadratic_term=float(quad_p.mean()),
        identity_residual=residuals[coeff],
        value_analytic=p_tau + coeff * tr,
        trace_coeff=coeff,
        residuals=residuals,
        residual_stderr=se_diff / scale,
        rhs=rhs,
        n_paths=ens.n_paths,
    )


def select_trace_coeff(reports, k: float = 3.0) -> float | None:
    """The unique coefficient whose residual is within k stderr in every report."""
    ok = [c for c in TRACE_COEFFS if all(r.within(c, k) for r in reports)]
    return ok[0] if len(ok) == 1 else None


def band_limited_perturbations(count: int, times: np.ndarray, seed: int = 0, modes: int = 4, amplitude: float = 0.5):
    """Random trigonometric signals with ``modes`` harmonics on [tau, T]."""
    rng = np.random.default_rng(seed)
    s = (times - times[0]) / (times[-1] - times[0])
    out = []
    for _ in range(count):
        a = rng.normal(0.0, amplitude / np.sqrt(modes), size=modes)
        b = rng.normal(0.0, amplitude / np.sqrt(modes), size=modes)
        j = np.arange(1, modes + 1)[:, None]
        out.append(a @ np.sin(np.pi * j * s) + b @ np.cos(np.pi * j * s))
    return out


@dataclass
class PerturbationResult:
    index: int
    gap: float
    paired_stderr: float
    predicted_gap: float
    prediction_stderr: float

    @property
    def nonnegative(self) -> bool:
        return self.gap >= -3.0 * self.paired_stderr

    @property
    def matches_prediction(self) -> bool:
        # noise-free runs have no sampling error; fall back to a relative test
        tol = max(3.0 * self.prediction_stderr, 1e-3 * abs(self.predicted_gap))
        return abs(self.gap - self.predicted_gap) <= tol


@dataclass
class OptimalityReport:
    optimal_cost: float
    optimal_stderr: float
    results: list

    @property
    def failures(self) -> list:
        return [r.index for r in self.results if not (r.nonnegative and r.matches_prediction)]

    @property
    def passed(self) -> bool:
        return not self.failures


def optimality_check(
    P: RiccatiSolution,
    cfg: Problem,
    perturbations,
    *,
    noise: NoiseConfig | None = None,
    workers: int = 1,
    step: StepOperator | None = None,
) -> OptimalityReport:
    """Compare the feedback control with u* + delta under common random numbers.

    u* is the per-path control realised by the closed loop; each perturbed run
    applies u* + delta (held over each step) with the same noise. The identity
    predicts the gap as the difference of E int |u + g x|^2 between the runs,
    which tends to E int |delta + g (x_delta - x*)|^2 as the step shrinks.
    """
    A, bi, x0, cost, gram = cfg.A, cfg.bi, cfg.x0, cfg.cost, cfg.gram
    noise = cfg.noise if noise is None else noise
    step = StepOperator(A, bi, noise.dt) if step is None else step
    gains = P.gain_at(noise.times)
    rec = cost_recorders(cost, gains)
    base = simulate_mild(
        A, bi, x0, ControlSignal.feedback(P), noise, record_states=False, recorders=rec, workers=workers, step=step
    )
    h = noise.dt
    j_star = path_costs(base, cost, gram)
    q_star = _shifted_energy(base.controls, base.records["gx"], h, "zoh")
    results = []
    for i, delta in enumerate(perturbations):
        if isinstance(delta, ControlSignal):
            delta = delta.open_loop(np.arange(1), noise.n_steps)[0]
        delta = np.asarray(delta, dtype=float)
        if delta.shape != (noise.n_steps + 1,):
            raise ConfigError("perturbation must be sampled on the simulation grid")
        u = ControlSignal.sampled(base.controls + delta[None, :], hold="zoh")
        ens = simulate_mild(A, bi, x0, u, noise, record_states=False, recorders=rec, workers=workers, step=step)
        j = path_costs(ens, cost, gram)
        q = _shifted_energy(ens.controls, ens.records["gx"], h, "zoh")
        gap, gap_se = _mean_se(j - j_star)
        pred, _ = _mean_se(q - q_star)
        _, pred_se = _mean_se((j - j_star) - (q - q_star))
        results.append(PerturbationResult(i, gap, gap_se, pred, pred_se))
    jm, jse = _mean_se(j_star)
    return OptimalityReport(jm, jse, results)
