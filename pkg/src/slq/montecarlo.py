"""Euler-Maruyama simulation and Monte Carlo cost estimation.

The running cost is accumulated with the left-point rule (the Ito-consistent
choice), the state with the explicit Euler-Maruyama scheme; weak order one is
enough for mean-cost estimation at the tolerances used here.  Noise comes
from the Philox counter-based generator keyed by (seed, path index), so every
result is bit-reproducible and independent of path scheduling and buffering.
The discarded tail of the infinite-horizon cost is estimated through the
closed-loop Lyapunov certificate and reported next to the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, LyapunovUnsolvableError, SimulationBudgetError
from .inhomogeneous import AffineTerms, InhomogeneityGrid, forcing_on_steps, vstar_on_steps
from .riccati import CostWeights, GareSolution
from .stability import ControlledSystem, solve_lyapunov

__all__ = [
    "FeedbackCheck",
    "SimConfig",
    "SimResult",
    "feedback_parametrization_check",
    "simulate_closed_loop",
    "simulate_open_loop",
]

_NOISE_BUFFER_BYTES = 192_000_000
_QUANTILES = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass
class SimConfig:
    """Monte Carlo configuration; results are a pure function of its fields."""

    horizon: float
    dt: float
    n_paths: int
    seed: int = 0
    budget: float = 1e9           # cap on n_paths * horizon / dt
    report_tail: bool = True

    def steps(self) -> int:
        ratio = self.horizon / self.dt
        k = round(ratio)
        if self.dt <= 0.0 or k < 1 or abs(ratio - k) > 1e-9 * max(1.0, ratio):
            raise InvalidInputError("horizon must be an integral number of steps")
        return int(k)


@dataclass
class SimResult:
    """Cost estimate with its sampling error and path statistics."""

    estimate: float
    std_error: float
    terminal_second_moment: float
    cost_quantiles: dict[float, float]
    tail_estimate: float | None
    n_paths: int
    horizon: float
    dt: float


def _validate(cfg: SimConfig, g: InhomogeneityGrid | None, nsteps: int):
    if cfg.n_paths < 1:
        raise InvalidInputError("need at least one path")
    if cfg.n_paths * float(nsteps) > cfg.budget:
        raise SimulationBudgetError(
            f"{cfg.n_paths} paths x {nsteps} steps exceeds budget {cfg.budget:g}"
        )
    if g is not None:
        for t in g.times:
            if abs(t / cfg.dt - round(t / cfg.dt)) > 1e-9 * max(1.0, abs(t) / cfg.dt):
                raise InvalidInputError(
                    f"forcing breakpoint t={t:g} is not a multiple of dt={cfg.dt:g}"
                )


def _noise_blocks(seed: int, n_paths: int, nsteps: int):
    """Yield (start, dW_block) spanning all paths, in time blocks.

    Path p's increments come, in time order, from Philox keyed by (seed, p);
    the block width only controls buffering, never the streams.
    """
    gens = [np.random.Generator(np.random.Philox(key=[seed, p])) for p in range(n_paths)]
    width = max(64, min(nsteps, _NOISE_BUFFER_BYTES // (8 * n_paths)))
    buf = np.empty((n_paths, width))
    k = 0
    while k < nsteps:
        w = min(width, nsteps - k)
        for i, gen in enumerate(gens):
            gen.standard_normal(out=buf[i, :w])
        yield k, buf[:, :w]
        k += w


def _tail_estimate(sys: ControlledSystem, w: CostWeights, Theta: np.ndarray,
                   ex_xx: np.ndarray, g: InhomogeneityGrid | None,
                   horizon: float) -> float | None:
    """E <P_cl X_T, X_T> with P_cl the Lyapunov value of the closed-loop cost."""
    if g is not None and g.support_end > horizon:
        return None
    Qcl = w.Q + w.S.T @ Theta + Theta.T @ w.S + Theta.T @ w.R @ Theta
    try:
        Pcl = solve_lyapunov(sys.closed_loop(Theta), Qcl)
    except LyapunovUnsolvableError:
        return None
    return float(np.sum(Pcl * ex_xx))


def _finish(costs: np.ndarray, ex_xx: np.ndarray, tail: float | None,
            cfg: SimConfig, nsteps: int) -> SimResult:
    est = float(np.mean(costs))
    se = float(np.std(costs, ddof=1) / np.sqrt(costs.size)) if costs.size > 1 else 0.0
    qs = {q: float(v) for q, v in zip(_QUANTILES, np.quantile(costs, _QUANTILES))}
    return SimResult(
        estimate=est,
        std_error=se,
        terminal_second_moment=float(np.trace(ex_xx)),
        cost_quantiles=qs,
        tail_estimate=tail,
        n_paths=cfg.n_paths,
        horizon=cfg.dt * nsteps,
        dt=cfg.dt,
    )


def _euler_cost_run(sys: ControlledSystem, w: CostWeights, x0: np.ndarray,
                    cfg: SimConfig, nsteps: int,
                    AT: np.ndarray, CT: np.ndarray,
                    drift_c: np.ndarray, diff_c: np.ndarray,
                    q_arr: np.ndarray, rho_arr: np.ndarray,
                    feedback_T: np.ndarray | None, v_arr: np.ndarray | None,
                    u_arr: np.ndarray | None):
    """One pass over time for all paths; returns (per-path costs, E[X_T X_T'])."""
    n, m = sys.n, sys.m
    dt = cfg.dt
    sqrt_dt = np.sqrt(dt)
    step_T = np.eye(n) + dt * AT          # X <- X @ step_T + ...
    has_drift_c = bool(np.any(drift_c))
    has_diff_c = bool(np.any(diff_c))
    has_lin = bool(np.any(q_arr)) or bool(np.any(rho_arr))
    has_S = bool(np.any(w.S))

    X = np.tile(x0, (cfg.n_paths, 1))
    costs = np.zeros(cfg.n_paths)
    for k0, block in _noise_blocks(cfg.seed, cfg.n_paths, nsteps):
        for j in range(block.shape[1]):
            k = k0 + j
            if feedback_T is not None:
                U = X @ feedback_T
                if v_arr is not None:
                    U = U + v_arr[k]
            else:
                U = np.broadcast_to(u_arr[k], (cfg.n_paths, m))
            c = np.einsum("ij,ij->i", X @ w.Q, X)
            c += np.einsum("ij,ij->i", U @ w.R, U)
            if has_S:
                c += 2.0 * np.einsum("ij,ij->i", X @ w.S.T, U)
            if has_lin:
                c += 2.0 * (X @ q_arr[k]) + 2.0 * (U @ rho_arr[k])
            costs += c
            dW = block[:, j:j + 1] * sqrt_dt
            diff = X @ CT
            if has_diff_c:
                diff = diff + diff_c[k]
            Xn = X @ step_T + diff * dW
            if has_drift_c:
                Xn += dt * drift_c[k]
            X = Xn
    costs *= dt
    ex_xx = (X.T @ X) / cfg.n_paths
    return costs, ex_xx


def simulate_closed_loop(
    sys: ControlledSystem,
    w: CostWeights,
    sol: GareSolution,
    x,
    cfg: SimConfig,
    terms: AffineTerms | None = None,
    g: InhomogeneityGrid | None = None,
    v_grid=None,
) -> SimResult:
    """Estimate the cost of the strategy u = Theta* X + v* by simulation.

    Simulates dX = [(A + B Th)X + B v* + b]dt + [(C + D Th)X + D v* + sigma]dW
    over cfg.horizon and accumulates the running cost pathwise.  Every
    forcing breakpoint must be a multiple of dt.  ``v_grid`` (one row per
    step) replaces the affine term derived from ``terms``, e.g. to cost a
    perturbed strategy.
    """
    nsteps = cfg.steps()
    _validate(cfg, g, nsteps)
    n, m = sys.n, sys.m
    x0 = np.asarray(x, dtype=float).reshape(-1)
    if x0.size != n:
        raise InvalidInputError("x has the wrong dimension")

    Theta = sol.Theta
    b_arr, sig_arr, q_arr, rho_arr = forcing_on_steps(g, cfg.dt, nsteps, n, m)
    if v_grid is not None:
        v_arr = np.asarray(v_grid, dtype=float).reshape(nsteps, m)
    else:
        v_arr = vstar_on_steps(terms, g, cfg.dt, nsteps, m) if terms is not None else None
    drift_c = b_arr if v_arr is None else v_arr @ sys.B.T + b_arr
    diff_c = sig_arr if v_arr is None else v_arr @ sys.D.T + sig_arr

    costs, ex_xx = _euler_cost_run(
        sys, w, x0, cfg, nsteps,
        AT=(sys.A + sys.B @ Theta).T, CT=(sys.C + sys.D @ Theta).T,
        drift_c=drift_c, diff_c=diff_c, q_arr=q_arr, rho_arr=rho_arr,
        feedback_T=Theta.T, v_arr=v_arr, u_arr=None,
    )
    tail = None
    if cfg.report_tail:
        tail = _tail_estimate(sys, w, Theta, ex_xx, g, cfg.horizon)
    return _finish(costs, ex_xx, tail, cfg, nsteps)


def simulate_open_loop(
    sys: ControlledSystem,
    w: CostWeights,
    u_grid,
    x,
    cfg: SimConfig,
    g: InhomogeneityGrid | None = None,
) -> SimResult:
    """Estimate the cost of a deterministic open-loop control given per step."""
    nsteps = cfg.steps()
    _validate(cfg, g, nsteps)
    n, m = sys.n, sys.m
    x0 = np.asarray(x, dtype=float).reshape(-1)
    if x0.size != n:
        raise InvalidInputError("x has the wrong dimension")
    u_arr = np.asarray(u_grid, dtype=float)
    if u_arr.ndim == 1:
        u_arr = u_arr.reshape(-1, 1)
    if u_arr.shape != (nsteps, m):
        raise InvalidInputError("u_grid must have one control row per step")

    b_arr, sig_arr, q_arr, rho_arr = forcing_on_steps(g, cfg.dt, nsteps, n, m)
    costs, ex_xx = _euler_cost_run(
        sys, w, x0, cfg, nsteps,
        AT=sys.A.T, CT=sys.C.T,
        drift_c=u_arr @ sys.B.T + b_arr, diff_c=u_arr @ sys.D.T + sig_arr,
        q_arr=q_arr, rho_arr=rho_arr,
        feedback_T=None, v_arr=None, u_arr=u_arr,
    )
    tail = None
    if cfg.report_tail and not np.any(u_arr[-1]):
        try:
            P0 = solve_lyapunov(sys.pair(), w.Q)
            tail = float(np.sum(P0 * ex_xx))
        except LyapunovUnsolvableError:
            tail = None
    return _finish(costs, ex_xx, tail, cfg, nsteps)


@dataclass
class FeedbackCheck:
    """Pathwise agreement of the feedback parametrization of admissible controls."""

    max_deviation: float
    n_paths: int
    steps: int


def feedback_parametrization_check(
    sys: ControlledSystem,
    Theta,
    x,
    cfg: SimConfig,
    v_grid=None,
    g: InhomogeneityGrid | None = None,
) -> FeedbackCheck:
    """Confirm that u = Theta X_Th + v drives the raw state onto X_Th.

    Runs the feedback recursion for X_Th and, with the same noise increments,
    the raw state recursion under the control it generates; their pathwise
    gap is pure floating-point noise because the two Euler recursions are
    algebraically identical.
    """
    nsteps = cfg.steps()
    _validate(cfg, g, nsteps)
    n, m = sys.n, sys.m
    Th = np.asarray(Theta, dtype=float).reshape(m, n)
    x0 = np.asarray(x, dtype=float).reshape(-1)
    v_arr = np.zeros((nsteps, m)) if v_grid is None else np.asarray(v_grid, float).reshape(nsteps, m)

    b_arr, sig_arr, _, _ = forcing_on_steps(g, cfg.dt, nsteps, n, m)
    AclT = (sys.A + sys.B @ Th).T
    CclT = (sys.C + sys.D @ Th).T
    drift_c = v_arr @ sys.B.T + b_arr
    diff_c = v_arr @ sys.D.T + sig_arr
    dt = cfg.dt
    sqrt_dt = np.sqrt(dt)

    worst = 0.0
    Xfb = np.tile(x0, (cfg.n_paths, 1))
    Xraw = Xfb.copy()
    for k0, block in _noise_blocks(cfg.seed, cfg.n_paths, nsteps):
        for j in range(block.shape[1]):
            k = k0 + j
            U = Xfb @ Th.T + v_arr[k]
            dWk = block[:, j:j + 1] * sqrt_dt
            Xfb = Xfb + (Xfb @ AclT + drift_c[k]) * dt + (Xfb @ CclT + diff_c[k]) * dWk
            Xraw = (Xraw + (Xraw @ sys.A.T + U @ sys.B.T + b_arr[k]) * dt
                    + (Xraw @ sys.C.T + U @ sys.D.T + sig_arr[k]) * dWk)
            gap = float(np.max(np.abs(Xraw - Xfb)))
            if gap > worst:
                worst = gap
    return FeedbackCheck(max_deviation=worst, n_paths=cfg.n_paths, steps=nsteps)
