"""Command-line harness: ``halfline-lq <subcommand> --config run.json --out DIR``.

Every subcommand writes its CSV artifacts and ``summary.json`` into the output
directory. Outputs depend only on the validated configuration (including the
seed), never on the worker count or the compute backend. Exit codes: 0 success,
2 configuration error, 3 numerical failure, 4 acceptance failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import shutil
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import Problem, RunConfig, config_hash, load_config
from .errors import ConfigError, NumericError
from .lq_control import (
    TRACE_COEFFS,
    band_limited_perturbations,
    cost_recorders,
    evaluate_cost,
    fundamental_identity_residual,
    optimality_check,
    select_trace_coeff,
    value_function,
)
from .operators import (
    admissible_alpha,
    analyticity_norm,
    apply_semigroup_kernel,
    dirichlet_laplacian,
    dirichlet_map,
    fractional_power,
    gamma_integral,
    regularity_integral,
    semigroup_matrix,
    semigroup_norm,
)
from .riccati import solve_riccati_mild, solve_riccati_ode, trace_term
from .stochastic import ControlSignal, StepOperator, moment_recursion, simulate_mild
from .weighted_space import WeightSpec, build_grid, norm

log = logging.getLogger("halfline_lq")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 2, 3, 4

# below this size the semigroup and regularity studies only report
MIN_ACCEPTANCE_N = 100


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def render_csv(header, rows, digest: str) -> str:
    lines = [f"# config_sha256={digest}", ",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _relchange(values) -> list[float]:
    v = np.asarray(values, dtype=float)
    return list(np.abs(np.diff(v)) / np.abs(v[:-1]))


def _growth(values) -> list[float]:
    v = np.asarray(values, dtype=float)
    return list(v[1:] / v[:-1] - 1.0)


# --------------------------------------------------------------------------
# subcommands; each returns (files, metrics, acceptance, extra summary fields)


def _smooth_bump(xi, a, b):
    s = (2 * xi - (a + b)) / (b - a)
    out = np.zeros_like(xi)
    inside = np.abs(s) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def cmd_semigroup_check(cfg: RunConfig, digest: str, workers: int):
    pc, sec = cfg.problem, cfg.semigroup
    weight = pc.weight.spec()
    grid = build_grid(weight, sec.n, pc.grid.xi_max, pc.grid.clustering)
    a, b = sec.bump_support
    if not 0 <= a < b <= pc.grid.xi_max / 2:
        raise ConfigError("semigroup.bump_support must lie in (0, xi_max/2)")
    A = dirichlet_laplacian(grid)
    gram = A.gram
    f = _smooth_bump(grid.nodes, a, b)
    rows, errs = [], []
    for t in sec.times:
        if t <= 0:
            raise ConfigError("semigroup.times must be positive")
        y_mat = semigroup_matrix(A, t).apply_nodal(f)
        y_ker = apply_semigroup_kernel(t, f, grid)
        err = float(norm(y_ker - y_mat, gram) / norm(y_mat, gram))
        errs.append(err)
        rows.append((t, err, semigroup_norm(A, t), analyticity_norm(A, t)))
    files = {
        "semigroup.csv": render_csv(
            ("t", "kernel_vs_matrix_relerr", "weighted_norm_ratio", "t_times_AeAt_norm"), rows, digest
        )
    }

    ts = np.geomspace(sec.t_min, 1.0, sec.sweep_points)
    level_rows = []
    for n in sec.levels:
        An = dirichlet_laplacian(build_grid(weight, n, pc.grid.xi_max, pc.grid.clustering))
        sup_s = max(semigroup_norm(An, t) for t in ts)
        sup_a = max(analyticity_norm(An, t) for t in ts)
        level_rows.append((n, sup_s, sup_a))
    files["semigroup_levels.csv"] = render_csv(("n", "sup_semigroup_norm", "sup_t_AeAt_norm"), level_rows, digest)
    sup_s = [r[1] for r in level_rows]
    sup_a = [r[2] for r in level_rows]
    spread_s = (max(sup_s) - min(sup_s)) / min(sup_s)
    spread_a = (max(sup_a) - min(sup_a)) / min(sup_a)
    metrics = {
        "max_kernel_vs_matrix_relerr": max(errs),
        "semigroup_bound_spread": spread_s,
        "analyticity_bound_spread": spread_a,
    }
    acceptance = {}
    if sec.n >= MIN_ACCEPTANCE_N:
        acceptance["kernel_vs_matrix"] = max(errs) <= sec.tolerance
    if min(sec.levels) >= MIN_ACCEPTANCE_N:
        acceptance["semigroup_bound_stable"] = spread_s <= 0.2
        acceptance["analyticity_bound_stable"] = spread_a <= 0.2
    return files, metrics, acceptance, {}


def cmd_regularity(cfg: RunConfig, digest: str, workers: int):
    pc, sec = cfg.problem, cfg.regularity
    weight = pc.weight.spec()
    unit = WeightSpec(weight.theta, "unit")
    alpha = pc.alpha_value if sec.alpha is None else sec.alpha
    rows = []
    for level in range(sec.levels):
        n = sec.n0 * 2**level
        grid = build_grid(weight, n, pc.grid.xi_max, pc.grid.clustering, refinement_level=level)
        A = dirichlet_laplacian(grid)
        psi = dirichlet_map(pc.lambda0, 1.0, grid)
        wn = float(norm(fractional_power(A, pc.lambda0, alpha).apply_nodal(psi), A.gram))
        ugrid = grid.with_weight(unit)
        Au = dirichlet_laplacian(ugrid)
        un = float(norm(fractional_power(Au, pc.lambda0, sec.unweighted_alpha).apply_nodal(psi), Au.gram))
        ii = regularity_integral(weight, pc.lambda0, sec.sigma, sec.t_cut, grid, A=A)
        ii_u = regularity_integral(unit, pc.lambda0, sec.sigma, sec.t_cut, ugrid, A=Au)
        rows.append((level, n, alpha, wn, un, ii, ii_u))
    header = ("level", "n", "alpha", "weighted_norm", "unweighted_norm", "interp_integral", "interp_integral_unweighted")
    files = {"regularity.csv": render_csv(header, rows, digest)}
    w_change = _relchange([r[3] for r in rows])
    u_growth = _growth([r[4] for r in rows])
    i_change = _relchange([r[5] for r in rows])
    metrics = {
        "weighted_norm_change_per_doubling": w_change,
        "unweighted_norm_growth_per_doubling": u_growth,
        "interp_integral_change_per_doubling": i_change,
        "interp_integral_unweighted_growth": _growth([r[6] for r in rows]),
    }
    # verdicts only where a trend is expected: alpha inside the admissible
    # window for the weighted norm, exponent above 1/4 for the unweighted one
    acceptance = {}
    lo, hi = admissible_alpha(weight.theta)
    if sec.n0 >= MIN_ACCEPTANCE_N:
        if alpha < hi:
            acceptance["weighted_norm_stable"] = max(w_change) <= 0.10
        if sec.unweighted_alpha > 0.25:
            acceptance["unweighted_norm_grows"] = min(u_growth) >= 0.25
        if lo - 0.25 * weight.theta < sec.sigma < lo:
            acceptance["interp_integral_stable"] = max(i_change) <= 0.10
    return files, metrics, acceptance, {}


def _solve_pair(prob: Problem, m: int):
    pc = prob.config
    ode = solve_riccati_ode(prob.A, prob.bi, prob.cost, pc.tau, pc.T, m)
    mild = solve_riccati_mild(prob.A, ode.problem, prob.cost, pc.tau, pc.T, m)
    return ode, mild


def cmd_riccati(cfg: RunConfig, digest: str, workers: int):
    prob = cfg.problem.build()
    pc = prob.config
    m = pc.riccati_steps
    ode, mild = _solve_pair(prob, m)
    P1, P2 = ode.P_mats, mild.P_mats
    scale = max(float(np.max(np.linalg.norm(P1, axis=(1, 2)))), np.finfo(float).tiny)
    diff = np.linalg.norm(P1 - P2, axis=(1, 2)) / scale
    idx = np.unique(np.linspace(0, prob.grid.n - 1, 8).round().astype(int))
    gnorm = np.linalg.norm(ode.gain_cache, axis=1)
    header = ["t"] + [f"P_diag_{i}" for i in idx] + ["gain_norm", "trace_integrand", "solver_diff"]
    rows = []
    for k, t in enumerate(ode.times):
        rows.append([t, *np.diagonal(P1[k])[idx], gnorm[k], ode.trace_integrand[k], diff[k]])
    files = {"riccati.csv": render_csv(header, rows, digest)}

    asym = float(np.max(np.abs(P1 - np.swapaxes(P1, 1, 2))))
    min_eig = float(min(np.linalg.eigvalsh(P)[0] for P in P1))
    terminal = float(np.max(np.abs(P1[-1] - np.asarray(prob.cost.G_op))))
    fine = solve_riccati_ode(prob.A, ode.problem, prob.cost, pc.tau, pc.T, 2 * m)
    tr = trace_term(ode)
    tr_fine = trace_term(fine)
    trace_change = abs(tr_fine - tr) / max(abs(tr_fine), np.finfo(float).tiny)
    report = ode.alpha_norm_report
    weighted = report["weighted_VP"]
    metrics = {
        "sup_solver_diff": float(diff.max()),
        "picard_iterations": mild.iterations,
        "max_asymmetry": asym,
        "min_eigenvalue": min_eig,
        "terminal_error": terminal,
        "trace_integral": tr,
        "trace_integral_refined": tr_fine,
        "trace_change_on_doubling": trace_change,
        "trace_term": {str(c): c * tr for c in TRACE_COEFFS},
        "sup_P": report["sup_P"],
        "sup_weighted_VP": report["sup_weighted_VP"],
        "weighted_VP_final_over_max": float(weighted[-1] / weighted.max()) if weighted.max() > 0 else 0.0,
    }
    acceptance = {
        "solvers_agree": diff.max() <= 1e-4,
        "symmetric": asym <= 1e-10,
        "positive_semidefinite": min_eig >= -1e-10,
        "terminal_exact": terminal == 0.0,
        "trace_stable": trace_change <= 0.01,
    }
    if not np.any(prob.cost.G_op):
        acceptance["VP_endpoint_vanishes"] = metrics["weighted_VP_final_over_max"] <= 0.1
    return files, metrics, acceptance, {"trace_coeff": pc.trace_coeff}


def _open_loop(name: str, sec, times) -> ControlSignal:
    if name == "zero":
        return ControlSignal.zero()
    if name == "constant":
        return ControlSignal.constant(sec.constant)
    if name == "sinusoid":
        vals = sec.sin_amplitude * np.sin(2 * np.pi * sec.sin_frequency * (times - times[0]))
        return ControlSignal.sampled(vals, hold="linear")
    raise ConfigError(f"unknown control {name!r}")


def _three_se(mc: float, se: float, ref: float) -> bool:
    return abs(mc - ref) <= 3.0 * se


def cmd_simulate(cfg: RunConfig, digest: str, workers: int):
    prob = cfg.problem.build()
    pc, noise = prob.config, prob.noise
    step = StepOperator(prob.A, prob.bi, noise.dt)
    name = cfg.simulate.control
    if name == "feedback":
        P = solve_riccati_ode(prob.A, prob.bi, prob.cost, pc.tau, pc.T, pc.riccati_steps)
        u = ControlSignal.feedback(P)
    else:
        u = _open_loop(name, cfg.identity, noise.times)
    ens = simulate_mild(prob.A, prob.bi, prob.x0, u, noise, record_states=False, workers=workers, step=step)
    rows = []
    for p in range(min(cfg.simulate.export_paths, ens.n_paths)):
        for k, t in enumerate(ens.times):
            rows.append((p, t, math.sqrt(ens.h_norm_sq[p, k]), ens.controls[p, k]))
    files = {"trajectories.csv": render_csv(("path", "t", "H_norm", "control"), rows, digest)}

    terminal = ens.h_norm_sq[:, -1]
    mc = float(terminal.mean())
    se = float(terminal.std(ddof=1) / math.sqrt(terminal.size)) if terminal.size > 1 else 0.0
    moments = moment_recursion(prob.A, prob.bi, prob.x0, noise, u, step=step)
    exact = float(moments.mean_square[-1])
    metrics = {
        "terminal_mean_square": mc,
        "terminal_mean_square_stderr": se,
        "terminal_mean_square_exact": exact,
        "noise_rank": step.rank,
    }
    acceptance = {"terminal_moment": _three_se(mc, se, exact)}
    if name == "zero" and not np.any(prob.x0) and noise.noise:
        quad = gamma_integral(prob.bi, prob.A, 0.0, pc.T - pc.tau)
        metrics["stochastic_convolution_quadrature"] = quad
        acceptance["stochastic_convolution_moment"] = _three_se(mc, se, quad)
    return files, metrics, acceptance, {}


def cmd_verify_identity(cfg: RunConfig, digest: str, workers: int):
    prob = cfg.problem.build()
    pc, noise = prob.config, prob.noise
    P = solve_riccati_ode(prob.A, prob.bi, prob.cost, pc.tau, pc.T, pc.riccati_steps)
    step = StepOperator(prob.A, prob.bi, noise.dt)
    rec = cost_recorders(prob.cost, P.gain_at(noise.times))
    rows, reports, det = [], [], []
    header = ("u_name", "lhs", "rhs_half", "rhs_one", "residual_half", "residual_one", "stderr")
    for name in cfg.identity.controls:
        u = _open_loop(name, cfg.identity, noise.times)
        ens = simulate_mild(prob.A, prob.bi, prob.x0, u, noise, record_states=False, recorders=rec, workers=workers, step=step)
        r = fundamental_identity_residual(u, P, prob, ens)
        reports.append(r)
        rows.append((name, r.J_estimate, r.rhs[0.5], r.rhs[1.0], r.residuals[0.5], r.residuals[1.0], r.residual_stderr))
    quiet = replace(noise, n_paths=1, noise=False)
    for name in cfg.identity.controls:
        u = _open_loop(name, cfg.identity, quiet.times)
        ens = simulate_mild(prob.A, prob.bi, prob.x0, u, quiet, record_states=False, recorders=rec)
        r = fundamental_identity_residual(u, P, prob, ens)
        # without noise the trace term is absent
        tr = trace_term(P)
        res = r.residuals[1.0] + tr / max(1.0, abs(r.J_estimate))
        det.append(res)
        rows.append((f"{name}_deterministic", r.J_estimate, r.rhs[0.5] - 0.5 * tr, r.rhs[1.0] - tr, res, res, 0.0))
    files = {"identity.csv": render_csv(header, rows, digest)}
    selected = select_trace_coeff(reports) if noise.noise else None
    metrics = {
        "within_3se": {str(c): [r.within(c) for r in reports] for c in TRACE_COEFFS},
        "max_deterministic_residual": max(abs(d) for d in det),
    }
    acceptance = {"deterministic_identity": metrics["max_deterministic_residual"] <= 1e-3}
    if noise.noise:
        acceptance["unique_trace_coeff"] = selected is not None
    return files, metrics, acceptance, {"trace_coeff_selected": selected}


def cmd_optimal(cfg: RunConfig, digest: str, workers: int):
    prob = cfg.problem.build()
    pc, noise, sec = prob.config, prob.noise, cfg.optimal
    P = solve_riccati_ode(prob.A, prob.bi, prob.cost, pc.tau, pc.T, pc.riccati_steps)
    step = StepOperator(prob.A, prob.bi, noise.dt)
    small = replace(noise, n_paths=sec.perturbation_paths)
    deltas = band_limited_perturbations(sec.n_perturbations, noise.times, sec.perturbation_seed, sec.modes, sec.amplitude)
    rep = optimality_check(P, prob, deltas, noise=small, workers=workers, step=step)
    rows = [(r.index, r.gap, r.paired_stderr, r.predicted_gap) for r in rep.results]
    quiet = replace(noise, n_paths=1, noise=False)
    det = optimality_check(P, prob, [np.full(noise.n_steps + 1, 0.5)], noise=quiet, step=step).results[0]
    rows.append(("deterministic_const_0.5", det.gap, det.paired_stderr, det.predicted_gap))
    files = {"optimal.csv": render_csv(("perturbation_id", "gap", "paired_stderr", "predicted_gap"), rows, digest)}

    rec = cost_recorders(prob.cost)
    ens = simulate_mild(
        prob.A, prob.bi, prob.x0, ControlSignal.feedback(P), noise, record_states=False, recorders=rec, workers=workers, step=step
    )
    J, se = evaluate_cost(ens, prob.cost, prob.gram)
    V = value_function(P, prob.bi, prob.x0, pc, prob.gram)
    metrics = {
        "closed_loop_cost": J,
        "closed_loop_stderr": se,
        "value_function": V,
        "perturbation_failures": rep.failures,
        "deterministic_gap": det.gap,
        "deterministic_predicted_gap": det.predicted_gap,
    }
    acceptance = {
        "perturbations_nonnegative": all(r.nonnegative for r in rep.results),
        "gap_matches_prediction": all(r.matches_prediction for r in rep.results),
        "deterministic_gap": det.gap > 0 and det.matches_prediction,
    }
    if noise.noise:
        acceptance["value_function_matches"] = _three_se(J, se, V)
    else:
        acceptance["value_function_matches"] = abs(J - V) <= 1e-3 * max(abs(V), 1.0)
    return files, metrics, acceptance, {"trace_coeff": pc.trace_coeff}


COMMANDS = {
    "semigroup-check": cmd_semigroup_check,
    "regularity": cmd_regularity,
    "riccati": cmd_riccati,
    "simulate": cmd_simulate,
    "verify-identity": cmd_verify_identity,
    "optimal": cmd_optimal,
}


# --------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="halfline-lq", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path, help="JSON run configuration (defaults when omitted)")
    ap.add_argument("--out", type=Path, help="output directory (default runs/<subcommand>)")
    ap.add_argument("--seed", type=int, help="override problem.noise.seed")
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="threads for path simulation")
    ap.add_argument("--force", action="store_true", help="overwrite outputs of a different configuration")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _existing_hash(out: Path):
    summary = out / "summary.json"
    if not summary.exists():
        return None
    try:
        return json.loads(summary.read_text(encoding="utf-8")).get("config_sha256")
    except (OSError, json.JSONDecodeError):
        return "unreadable"


def run(subcommand: str, cfg: RunConfig, out: Path, *, workers: int = 1, force: bool = False) -> int:
    """Execute one subcommand and publish its artifacts atomically into ``out``."""
    digest = config_hash(cfg)
    previous = _existing_hash(out)
    if previous is not None and previous != digest and not force:
        log.error("%s holds outputs of another configuration (%s); use --force", out, previous)
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".partial-", dir=out))
    try:
        files, metrics, acceptance, extra = COMMANDS[subcommand](cfg, digest, max(1, workers))
        passed = all(acceptance.values())
        summary = {
            "subcommand": subcommand,
            "config_sha256": digest,
            "seed": cfg.problem.noise.seed,
            "acceptance": acceptance,
            "status": "pass" if passed else "fail",
            "metrics": metrics,
        }
        summary.update(extra)
        summary.setdefault("trace_coeff_selected", None)
        if "summary" in cfg.emit:
            files["summary.json"] = json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n"
        if "csv" not in cfg.emit:
            files = {k: v for k, v in files.items() if not k.endswith(".csv")}
        for name, text in files.items():
            (staging / name).write_text(text, encoding="utf-8")
        for name in files:
            os.replace(staging / name, out / name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    for item, ok in acceptance.items():
        log.info("%-32s %s", item, "pass" if ok else "FAIL")
    return EXIT_OK if passed else EXIT_ACCEPTANCE


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.workers < 1:
            raise ConfigError("--workers must be positive")
        out = args.out or Path("runs") / args.subcommand
        return run(args.subcommand, cfg, out, workers=args.workers, force=args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
