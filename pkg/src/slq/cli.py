"""Command-line interface: problem ingestion, pipeline orchestration, reports.

Problem files are JSON with the matrices named after the usual symbols
(A, C, B, D, Q, S, R), optional piecewise-constant forcing, an optional
initial state, and optional solver overrides.  Reports are JSON with sorted
keys and no environmental input (every random stream is seeded from the file
or flags), so identical invocations produce byte-identical output.

Exit codes: 0 success/solvable, 1 input error, 2 not stabilizable
(or a supplied gain fails the stabilizer test), 3 unsolvable.
"""

from __future__ import annotations

import argparse
import json
import sys as _sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .errors import NotStabilizableError, SlqError, UnsupportedInputError
from .inhomogeneous import (
    InhomogeneityGrid,
    assemble_value,
    check_range_ez,
    solve_eta,
)
from .montecarlo import SimConfig, simulate_closed_loop
from .oracle1d import solve_1d
from .riccati import (
    CostWeights,
    FlowConfig,
    GareConfig,
    GareSolution,
    GareUnsolvable,
    solve_gare,
)
from .stability import ControlledSystem, is_stabilizer, solve_lyapunov
from .stabilizability import stabilizability_report

__all__ = ["ProblemData", "load_problem", "main"]

_EXIT_OK = 0
_EXIT_INPUT = 1
_EXIT_NOT_STABILIZABLE = 2
_EXIT_UNSOLVABLE = 3


@dataclass
class ProblemData:
    """In-memory form of a problem file."""

    sys: ControlledSystem
    w: CostWeights
    grid: InhomogeneityGrid | None
    x0: np.ndarray
    solver: dict


class ProblemFileError(SlqError):
    pass


def _matrix_field(doc: dict, key: str, shape: tuple[int, int]) -> np.ndarray:
    if key not in doc:
        raise ProblemFileError(f"missing field: {key}")
    arr = np.asarray(doc[key], dtype=float)
    if arr.ndim == 1 and shape[1] == 1:
        arr = arr.reshape(-1, 1)
    if arr.shape != shape:
        raise ProblemFileError(f"dimension mismatch: {key}")
    if not np.all(np.isfinite(arr)):
        raise ProblemFileError(f"non-finite entries: {key}")
    return arr


def _symmetrized(name: str, arr: np.ndarray) -> np.ndarray:
    gap = np.linalg.norm(arr - arr.T)
    if gap > 1e-12 * (1.0 + np.linalg.norm(arr)):
        print(f"warning: {name} symmetrized (asymmetry {gap:.3e})", file=_sys.stderr)
    return (arr + arr.T) / 2.0


def load_problem(path: str) -> ProblemData:
    """Parse and validate a problem file."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ProblemFileError("problem file must be a JSON object")
    try:
        n = int(doc["n"])
        m = int(doc["m"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemFileError("fields 'n' and 'm' must be integers") from exc
    if n < 1 or m < 1:
        raise ProblemFileError("dimensions must be positive")

    A = _matrix_field(doc, "A", (n, n))
    C = _matrix_field(doc, "C", (n, n))
    B = _matrix_field(doc, "B", (n, m))
    D = _matrix_field(doc, "D", (n, m))
    Q = _symmetrized("Q", _matrix_field(doc, "Q", (n, n)))
    S = _matrix_field(doc, "S", (m, n))
    R = _symmetrized("R", _matrix_field(doc, "R", (m, m)))

    grid = None
    if doc.get("inhomogeneity"):
        sub = doc["inhomogeneity"]
        try:
            grid = InhomogeneityGrid(
                times=np.asarray(sub["grid"], dtype=float),
                b=np.asarray(sub.get("b", np.zeros((len(sub["grid"]) - 1, n))), float),
                sigma=np.asarray(sub.get("sigma", np.zeros((len(sub["grid"]) - 1, n))), float),
                q=np.asarray(sub.get("q", np.zeros((len(sub["grid"]) - 1, n))), float),
                rho=np.asarray(sub.get("rho", np.zeros((len(sub["grid"]) - 1, m))), float),
            )
        except (KeyError, TypeError) as exc:
            raise ProblemFileError(f"malformed inhomogeneity block: {exc}") from exc
        if grid.n != n or grid.m != m:
            raise ProblemFileError("dimension mismatch: inhomogeneity")

    x0 = np.zeros(n)
    if doc.get("x0") is not None:
        x0 = np.asarray(doc["x0"], dtype=float).reshape(-1)
        if x0.size != n:
            raise ProblemFileError("dimension mismatch: x0")

    solver = doc.get("solver", {})
    if not isinstance(solver, dict):
        raise ProblemFileError("'solver' must be an object")
    return ProblemData(
        sys=ControlledSystem(A, C, B, D),
        w=CostWeights(Q, S, R),
        grid=grid,
        x0=x0,
        solver=solver,
    )


_DEFAULT_CONFIG = {
    "epsilon_schedule": [10.0 ** -k for k in range(1, 9)],
    "path_tol": 1e-6,
    "res_tol": 1e-6,
    "range_tol": 1e-6,
    "psd_tol": 1e-8,
    "stat_tol": 1e-10,
    "flow_res_tol": 1e-8,
    "divergence_norm": 1e8,
    "max_horizon": 1e4,
    "rtol": 1e-9,
    "seed": 0,
    "simulate": {"paths": 10_000, "dt": 1e-3, "horizon": None},
}


def _resolve_config(problem: ProblemData, args) -> dict:
    cfg = json.loads(json.dumps(_DEFAULT_CONFIG))  # deep copy
    for key, value in problem.solver.items():
        if key == "simulate" and isinstance(value, dict):
            cfg["simulate"].update(value)
        elif key in cfg:
            cfg[key] = value
        else:
            raise ProblemFileError(f"unknown solver option: {key}")
    if getattr(args, "eps_schedule", None):
        cfg["epsilon_schedule"] = [float(v) for v in args.eps_schedule.split(",")]
    if getattr(args, "tol", None) is not None:
        cfg["path_tol"] = cfg["res_tol"] = cfg["range_tol"] = float(args.tol)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = int(args.seed)
    if getattr(args, "simulate", None) is not None:
        cfg["simulate"]["paths"] = int(args.simulate)
    return cfg


def _flow_config(cfg: dict) -> FlowConfig:
    return FlowConfig(
        stat_tol=float(cfg["stat_tol"]),
        res_tol=float(cfg["flow_res_tol"]),
        divergence_norm=float(cfg["divergence_norm"]),
        max_horizon=float(cfg["max_horizon"]),
        rtol=float(cfg["rtol"]),
    )


def _gare_config(cfg: dict) -> GareConfig:
    return GareConfig(
        epsilon_schedule=tuple(float(e) for e in cfg["epsilon_schedule"]),
        path_tol=float(cfg["path_tol"]),
        res_tol=float(cfg["res_tol"]),
        range_tol=float(cfg["range_tol"]),
        psd_tol=float(cfg["psd_tol"]),
        flow=_flow_config(cfg),
    )


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return [[float(v) for v in row] for row in np.atleast_2d(obj)]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _emit(report: dict, out_path: str | None):
    text = json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        _sys.stdout.write(text)


def _epsilon_path_block(path) -> list:
    return [{"epsilon": eps, "P": P} for eps, P in path]


def _solution_block(sol: GareSolution) -> dict:
    diag = {
        k: v
        for k, v in sol.diagnostics.items()
        if k in ("are_residual", "range_defect", "n_min_eig", "identity_gap",
                 "settled_at_epsilon", "extrapolation_norm")
    }
    return {
        "P": sol.P,
        "Theta": sol.Theta,
        "Pi": sol.Pi,
        "epsilon_path": _epsilon_path_block(sol.epsilon_path),
        "diagnostics": diag,
        "sigma": sol.diagnostics.get("sigma"),
    }


def _strategy_block(strategy) -> dict | None:
    if strategy is None:
        return None
    return {
        "kind": strategy.kind,
        "theta": strategy.theta,
        "v_free": strategy.v_free,
        "center": strategy.center,
        "radius": strategy.radius,
        "bound": strategy.bound,
        "side": strategy.side,
    }


def _oracle_block(problem: ProblemData, sol: GareSolution | None) -> dict:
    coeffs = (
        problem.sys.A[0, 0], problem.sys.C[0, 0], problem.sys.B[0, 0],
        problem.sys.D[0, 0], problem.w.Q[0, 0], problem.w.S[0, 0], problem.w.R[0, 0],
    )
    res = solve_1d(*coeffs)
    block = {
        "case": res.case,
        "solvable": res.solvable,
        "P": res.P,
        "strategy": _strategy_block(res.strategy),
        "alpha": res.alpha,
        "beta": res.beta,
        "gamma": res.gamma,
        "Sigma": res.Sigma,
        "Delta": res.Delta,
    }
    if sol is not None:
        agree = {"verdicts_agree": res.solvable}
        if res.solvable:
            agree["p_abs_diff"] = abs(float(sol.P[0, 0]) - res.P)
            theta = float(sol.Theta[0, 0])
            if res.strategy.kind == "point":
                agree["theta_abs_diff"] = abs(theta - res.strategy.theta)
                agree["theta_matches"] = agree["theta_abs_diff"] <= 1e-6
            else:
                agree["theta_matches"] = res.strategy.contains(theta)
            agree["p_matches"] = agree["p_abs_diff"] <= 1e-6
        block["agreement"] = agree
    else:
        block["agreement"] = {"verdicts_agree": not res.solvable}
    return block


def _closed_loop_time_constant(sys: ControlledSystem, Theta: np.ndarray) -> float:
    lam = np.linalg.eigvals(sys.A + sys.B @ Theta)
    rate = -float(np.max(lam.real))
    return 1.0 / rate if rate > 0 else 1.0


def _sim_horizon(cfg: dict, sys: ControlledSystem, Theta: np.ndarray,
                 grid: InhomogeneityGrid | None) -> float:
    dt = float(cfg["simulate"]["dt"])
    horizon = cfg["simulate"]["horizon"]
    if horizon is None:
        tau = _closed_loop_time_constant(sys, Theta)
        horizon = 20.0 * tau
        if grid is not None:
            horizon = max(horizon, grid.support_end + 5.0 * tau)
    return np.ceil(float(horizon) / dt) * dt


def _simulation_block(problem: ProblemData, cfg: dict, sol: GareSolution,
                      terms, value: float | None) -> dict:
    sim = cfg["simulate"]
    horizon = _sim_horizon(cfg, problem.sys, sol.Theta, problem.grid)
    sim_cfg = SimConfig(
        horizon=horizon, dt=float(sim["dt"]), n_paths=int(sim["paths"]),
        seed=int(cfg["seed"]),
    )
    result = simulate_closed_loop(
        problem.sys, problem.w, sol, problem.x0, sim_cfg,
        terms=terms, g=problem.grid,
    )
    block = {
        "estimate": result.estimate,
        "std_error": result.std_error,
        "terminal_second_moment": result.terminal_second_moment,
        "tail_estimate": result.tail_estimate,
        "cost_quantiles": {f"{q:.2f}": v for q, v in result.cost_quantiles.items()},
        "paths": result.n_paths,
        "horizon": result.horizon,
        "dt": result.dt,
        "seed": int(cfg["seed"]),
    }
    if value is not None:
        block["reference_value"] = value
        block["abs_error"] = abs(result.estimate - value)
        block["within_3se"] = abs(result.estimate - value) <= 3.0 * result.std_error
    return block


def cmd_check(args) -> int:
    problem = load_problem(args.problem)
    cfg = _resolve_config(problem, args)
    report = stabilizability_report(problem.sys, _flow_config(cfg))
    doc = {
        "version": __version__,
        "command": "check",
        "config": cfg,
        "verdict": {"stabilizable": report.stabilizable},
        "stabilizability": {
            "gamma": report.gamma,
            "P": report.P,
            "flow_status": report.flow_status,
            "residual": report.residual,
        },
    }
    _emit(doc, args.out)
    return _EXIT_OK if report.stabilizable else _EXIT_NOT_STABILIZABLE


def _run_solve(problem: ProblemData, cfg: dict, args):
    """Shared solve pipeline; returns (exit_code, report_doc, sol, terms)."""
    doc: dict = {"version": __version__, "command": "solve", "config": cfg}
    stab = stabilizability_report(problem.sys, _flow_config(cfg))
    doc["stabilizability"] = {
        "gamma": stab.gamma,
        "P": stab.P,
        "flow_status": stab.flow_status,
        "residual": stab.residual,
    }
    if not stab.stabilizable:
        doc["verdict"] = {"stabilizable": False, "solvable": False}
        if getattr(args, "oracle", False) and problem.sys.n == 1 and problem.sys.m == 1:
            doc["oracle_1d"] = _oracle_block(problem, None)
        return _EXIT_NOT_STABILIZABLE, doc, None, None

    outcome = solve_gare(problem.sys, problem.w, _gare_config(cfg))
    if isinstance(outcome, GareUnsolvable):
        doc["verdict"] = {"stabilizable": True, "solvable": False}
        doc["unsolvable"] = {
            "reason": outcome.reason,
            "epsilon_path": _epsilon_path_block(outcome.epsilon_path),
            "diagnostics": {k: v for k, v in outcome.diagnostics.items()
                            if not isinstance(v, np.ndarray) or k == "sigma"},
        }
        if getattr(args, "oracle", False) and problem.sys.n == 1 and problem.sys.m == 1:
            doc["oracle_1d"] = _oracle_block(problem, None)
        return _EXIT_UNSOLVABLE, doc, None, None

    sol = outcome
    doc["verdict"] = {"stabilizable": True, "solvable": True}
    doc["solution"] = _solution_block(sol)

    terms = None
    value = None
    if problem.grid is not None:
        terms = solve_eta(sol, problem.sys, problem.w, problem.grid)
        check = check_range_ez(sol, terms, problem.grid)
        doc["inhomogeneous"] = {
            "times": [float(t) for t in terms.times],
            "eta": terms.eta,
            "v_star": terms.v_star,
            "zeta": "identically zero (deterministic forcing)",
            "range_defect": check.max_defect,
            "range_ok": check.ok,
        }
        if not check.ok:
            doc["verdict"]["solvable"] = False
            doc["unsolvable"] = {"reason": "range condition fails on the forcing grid"}
            return _EXIT_UNSOLVABLE, doc, sol, terms
        value = assemble_value(sol, terms, problem.grid, problem.x0)
    else:
        value = float(problem.x0 @ sol.P @ problem.x0)
    doc["value"] = {"x0": [float(v) for v in problem.x0], "V": value}

    if getattr(args, "oracle", False) and problem.sys.n == 1 and problem.sys.m == 1:
        doc["oracle_1d"] = _oracle_block(problem, sol)
    if getattr(args, "simulate", None):
        doc["simulation"] = _simulation_block(problem, cfg, sol, terms, value)
    return _EXIT_OK, doc, sol, terms


def cmd_solve(args) -> int:
    problem = load_problem(args.problem)
    cfg = _resolve_config(problem, args)
    code, doc, _, _ = _run_solve(problem, cfg, args)
    _emit(doc, args.out)
    return code


def _parse_theta(text: str, m: int, n: int) -> np.ndarray:
    rows = [[float(v) for v in row.split(",")] for row in text.split(";")]
    theta = np.asarray(rows, dtype=float)
    if theta.shape != (m, n):
        raise ProblemFileError("dimension mismatch: theta flag")
    return theta


def cmd_simulate(args) -> int:
    problem = load_problem(args.problem)
    cfg = _resolve_config(problem, args)
    doc: dict = {"version": __version__, "command": "simulate", "config": cfg}

    if args.theta is not None:
        theta = _parse_theta(args.theta, problem.sys.m, problem.sys.n)
        if not is_stabilizer(problem.sys, theta):
            pair = problem.sys.closed_loop(theta)
            try:
                solve_lyapunov(pair, np.eye(problem.sys.n))
                detail = "Lyapunov solution exists but is not positive definite"
            except SlqError as exc:
                detail = str(exc)
            doc["verdict"] = {"stabilizer": False, "detail": detail}
            _emit(doc, args.out)
            return _EXIT_NOT_STABILIZABLE
        sol = GareSolution(P=np.zeros((problem.sys.n, problem.sys.n)),
                           Theta=theta, Pi=np.zeros_like(theta),
                           epsilon_path=[], diagnostics={})
        terms = None
        value = None
    else:
        solve_args = argparse.Namespace(**{**vars(args), "simulate": None})
        code, solve_doc, sol, terms = _run_solve(problem, cfg, solve_args)
        if code != _EXIT_OK:
            _emit(solve_doc, args.out)
            return code
        value = solve_doc["value"]["V"]

    doc["simulation"] = _simulation_block(problem, cfg, sol, terms, value)
    doc["verdict"] = {"stabilizer": True}
    _emit(doc, args.out)
    return _EXIT_OK


def cmd_oracle(args) -> int:
    problem = load_problem(args.problem)
    cfg = _resolve_config(problem, args)
    if problem.sys.n != 1 or problem.sys.m != 1:
        raise ProblemFileError("the closed-form solver applies to n = m = 1 only")
    doc = {
        "version": __version__,
        "command": "oracle1d",
        "config": cfg,
        "oracle_1d": _oracle_block(problem, None),
    }
    _emit(doc, args.out)
    res = doc["oracle_1d"]
    if res["case"] == "not-stabilizable":
        return _EXIT_NOT_STABILIZABLE
    return _EXIT_OK if res["solvable"] else _EXIT_UNSOLVABLE


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slq",
        description="Infinite-horizon stochastic linear-quadratic solver",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("problem", help="path to a JSON problem file")
        p.add_argument("--out", default=None, help="write the report here instead of stdout")
        p.add_argument("--seed", type=int, default=None, help="override the random seed")
        p.add_argument("--eps-schedule", default=None,
                       help="comma-separated epsilon schedule override")
        p.add_argument("--tol", type=float, default=None,
                       help="override the path/residual/range tolerances")

    p_check = sub.add_parser("check", help="decide stabilizability")
    common(p_check)
    p_check.set_defaults(func=cmd_check)

    p_solve = sub.add_parser("solve", help="run the full solver pipeline")
    common(p_solve)
    p_solve.add_argument("--simulate", type=int, default=None, metavar="N",
                         help="append a Monte Carlo cross-check with N paths")
    p_solve.add_argument("--oracle", action="store_true",
                         help="append the closed-form block on 1-d problems")
    p_solve.set_defaults(func=cmd_solve)

    p_sim = sub.add_parser("simulate", help="simulate a strategy")
    common(p_sim)
    p_sim.add_argument("--simulate", type=int, default=None, metavar="N",
                       help="number of Monte Carlo paths")
    p_sim.add_argument("--theta", default=None,
                       help="explicit gain, rows separated by ';' entries by ','")
    p_sim.set_defaults(func=cmd_simulate, oracle=False)

    p_orc = sub.add_parser("oracle1d", help="closed-form scalar solver")
    common(p_orc)
    p_orc.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NotStabilizableError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return _EXIT_NOT_STABILIZABLE
    except UnsupportedInputError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return _EXIT_INPUT
    except (ProblemFileError, SlqError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return _EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
