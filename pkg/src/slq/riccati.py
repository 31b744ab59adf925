"""Riccati machinery: differential flow, strict ARE solver, GARE pipeline.

The differential Riccati equation is integrated as a forward flow in horizon
length,

    dSig/dt = Sig A + A'Sig + C'Sig C + Q
              - (Sig B + C'Sig D + S') (R + D'Sig D)^{-1} (B'Sig + D'Sig C + S),
    Sig(0) = G,

whose stationary points solve the algebraic Riccati equation.  On top of the
flow sit:

* ``solve_are_strict`` -- the strictly convex ARE (R + D'PD > 0) for a stable
  uncontrolled pair, started from the Lyapunov terminal value;
* ``transform_problem`` -- pre-feedback reduction of a stabilizable problem to
  one with a stable uncontrolled pair;
* ``solve_gare`` -- the generalized ARE with pseudoinverse, range condition
  and semidefinite constraint, computed as the epsilon -> 0 limit of the
  regularized strictly convex solutions;
* ``verify_static_stabilizing`` -- an independent recheck of a candidate P.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InternalInconsistencyError,
    InvalidInputError,
    InvalidTerminalError,
    NotStabilizableError,
    NotStableError,
)
from .linalg import as_matrix, fro, pinv, range_defect, symmetrize
from .stability import ControlledSystem, is_l2_stable, is_stabilizer, solve_lyapunov

__all__ = [
    "CostWeights",
    "FlowConfig",
    "GareConfig",
    "GareMaps",
    "GareSolution",
    "GareUnsolvable",
    "GareVerification",
    "RiccatiFlow",
    "control_pseudoinverse",
    "integrate_riccati_flow",
    "solve_are_strict",
    "solve_gare",
    "transform_problem",
    "verify_static_stabilizing",
]


@dataclass(frozen=True, eq=False)
class CostWeights:
    """Quadratic cost weights: state Q (n x n), cross S (m x n), control R (m x m)."""

    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = symmetrize(self.Q, "Q")
        S = as_matrix(self.S, "S")
        R = symmetrize(self.R, "R")
        if S.shape != (R.shape[0], Q.shape[0]):
            raise InvalidInputError("S must be m x n")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "R", R)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.R.shape[0]


class GareMaps:
    """The three matrix maps entering the generalized ARE at a candidate P."""

    def __init__(self, sys: ControlledSystem, w: CostWeights):
        if (w.n, w.m) != (sys.n, sys.m):
            raise InvalidInputError("cost weights do not match system dimensions")
        self.sys = sys
        self.w = w

    def lyapunov_part(self, P) -> np.ndarray:
        """P A + A'P + C'P C + Q."""
        A, C = self.sys.A, self.sys.C
        return P @ A + A.T @ P + C.T @ P @ C + self.w.Q

    def cross_part(self, P) -> np.ndarray:
        """P B + C'P D + S'  (n x m)."""
        return P @ self.sys.B + self.sys.C.T @ P @ self.sys.D + self.w.S.T

    def control_part(self, P) -> np.ndarray:
        """R + D'P D  (m x m)."""
        return symmetrize(self.w.R + self.sys.D.T @ P @ self.sys.D)

    def residual(self, P) -> np.ndarray:
        """Pseudoinverse ARE residual  M(P) - L(P) N(P)^+ L(P)'."""
        L = self.cross_part(P)
        N = self.control_part(P)
        return symmetrize(self.lyapunov_part(P) - L @ pinv(N) @ L.T)

    def range_defect(self, P) -> float:
        """Normalized defect of  range(L(P)') <= range(N(P))."""
        return range_defect(self.cross_part(P).T, self.control_part(P))


@dataclass
class FlowConfig:
    """Termination and step control for the Riccati flow."""

    stat_tol: float = 1e-10        # relative stationarity threshold on ||dSig/dt||
    res_tol: float = 1e-8          # relative residual bound on accepted fixed points
    divergence_norm: float = 1e8   # ||Sig|| beyond which the flow counts as diverged
    max_horizon: float = 1e4       # horizon cap (time units)
    rtol: float = 1e-9             # relative per-step error tolerance
    min_step: float = 1e-12        # step collapse below this is finite escape
    max_steps: int = 500_000


@dataclass
class RiccatiFlow:
    """Time-stamped trajectory of the Riccati flow."""

    times: np.ndarray              # (k,), strictly increasing, starts at 0
    values: np.ndarray             # (k, n, n), symmetric
    terminal: np.ndarray           # the starting value G
    status: str                    # 'converged' | 'diverged' | 'max-horizon'
    derivative_norm: float         # ||dSig/dt|| at the final point (inf if diverged)


class _PositivityLost(Exception):
    pass


# Cash-Karp 5(4) embedded pair.
_CK_A = (
    (1 / 5,),
    (3 / 40, 9 / 40),
    (3 / 10, -9 / 10, 6 / 5),
    (-11 / 54, 5 / 2, -70 / 27, 35 / 27),
    (1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096),
)
_CK_B5 = (37 / 378, 0.0, 250 / 621, 125 / 594, 0.0, 512 / 1771)
_CK_ERR = (-277 / 64512, 0.0, 6925 / 370944, -6925 / 202752, -277 / 14336, 277 / 7084)


def _adaptive_flow(rhs, sym, norm, y0, cfg: FlowConfig):
    """Run the embedded Cash-Karp pair until stationarity, divergence or cap.

    ``rhs`` raises :class:`_PositivityLost` when R + D'Sig D stops being
    positive definite at an evaluation point; the step is then rejected and
    shrunk, and step collapse below ``min_step`` counts as finite escape.
    Works uniformly for matrix states and (as floats) scalar ones.
    """
    t = 0.0
    y = sym(y0)
    f = rhs(y)  # entry point is pre-validated by the caller
    times = [0.0]
    values = [y]
    dnorm = norm(f)
    if dnorm < cfg.stat_tol * (1.0 + norm(y)):
        return "converged", times, values, dnorm

    h = min(1.0, 0.01 * (1.0 + norm(y)) / (1.0 + dnorm))
    lam_est = 0.0  # local Jacobian scale, to keep h inside the stability region
    for _ in range(cfg.max_steps):
        h = min(h, cfg.max_horizon - t)
        try:
            k1 = f
            k2 = rhs(sym(y + h * (_CK_A[0][0] * k1)))
            k3 = rhs(sym(y + h * (_CK_A[1][0] * k1 + _CK_A[1][1] * k2)))
            k4 = rhs(sym(y + h * (_CK_A[2][0] * k1 + _CK_A[2][1] * k2 + _CK_A[2][2] * k3)))
            k5 = rhs(sym(y + h * (_CK_A[3][0] * k1 + _CK_A[3][1] * k2
                                  + _CK_A[3][2] * k3 + _CK_A[3][3] * k4)))
            k6 = rhs(sym(y + h * (_CK_A[4][0] * k1 + _CK_A[4][1] * k2 + _CK_A[4][2] * k3
                                  + _CK_A[4][3] * k4 + _CK_A[4][4] * k5)))
        except _PositivityLost:
            h *= 0.25
            if h < cfg.min_step:
                return "diverged", times, values, float("inf")
            continue

        err = h * (_CK_ERR[0] * k1 + _CK_ERR[2] * k3 + _CK_ERR[3] * k4
                   + _CK_ERR[4] * k5 + _CK_ERR[5] * k6)
        err_norm = norm(err)
        tol = cfg.rtol * (1.0 + norm(y))
        if err_norm > tol:
            h *= max(0.2, 0.9 * (tol / err_norm) ** 0.2)
            if h < cfg.min_step:
                return "diverged", times, values, float("inf")
            continue

        y_new = sym(y + h * (_CK_B5[0] * k1 + _CK_B5[2] * k3 + _CK_B5[3] * k4 + _CK_B5[5] * k6))
        t += h
        try:
            f_new = rhs(y_new)
        except _PositivityLost:
            return "diverged", times, values, float("inf")
        step_norm = norm(y_new - y)
        if step_norm > 0.0:
            lam_est = norm(f_new - f) / step_norm
        y, f = y_new, f_new
        times.append(t)
        values.append(y)

        ynorm = norm(y)
        dnorm = norm(f)
        if not np.isfinite(ynorm) or ynorm > cfg.divergence_norm:
            return "diverged", times, values, dnorm
        if dnorm < cfg.stat_tol * (1.0 + ynorm):
            return "converged", times, values, dnorm
        if t >= cfg.max_horizon:
            return "max-horizon", times, values, dnorm

        if err_norm > 0.0:
            h *= min(5.0, max(0.2, 0.9 * (tol / err_norm) ** 0.2))
        else:
            h *= 5.0
        if lam_est > 0.0:
            # Explicit RK contracts toward the stationary point only well
            # inside its stability region; unguarded growth makes the iterate
            # hover near the boundary instead of settling.
            h = min(h, 2.5 / lam_est)
    return "max-horizon", times, values, dnorm


def _matrix_rhs(sys: ControlledSystem, w: CostWeights):
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    Q, S, R = w.Q, w.S, w.R

    def rhs(Sig):
        N = R + D.T @ Sig @ D
        try:
            np.linalg.cholesky((N + N.T) / 2.0)
        except np.linalg.LinAlgError:
            raise _PositivityLost from None
        L = Sig @ B + C.T @ Sig @ D + S.T
        K = np.linalg.solve((N + N.T) / 2.0, L.T)
        return Sig @ A + A.T @ Sig + C.T @ Sig @ C + Q - L @ K

    return rhs


def _scalar_rhs(sys: ControlledSystem, w: CostWeights):
    a = float(sys.A[0, 0])
    b = float(sys.B[0, 0])
    c = float(sys.C[0, 0])
    d = float(sys.D[0, 0])
    q = float(w.Q[0, 0])
    s = float(w.S[0, 0])
    r = float(w.R[0, 0])
    two_a_c2 = 2.0 * a + c * c

    def rhs(sig):
        n_val = r + d * d * sig
        if n_val <= 0.0:
            raise _PositivityLost
        l_val = sig * b + c * sig * d + s
        return two_a_c2 * sig + q - l_val * l_val / n_val

    return rhs


def integrate_riccati_flow(
    sys: ControlledSystem, w: CostWeights, G, cfg: FlowConfig | None = None
) -> RiccatiFlow:
    """Integrate the Riccati flow from Sig(0) = G until it settles or escapes.

    The flow is only defined while R + D'Sig D > 0; a terminal value violating
    this raises :class:`InvalidTerminalError`.  The state is symmetrized after
    every accepted step.
    """
    cfg = cfg or FlowConfig()
    if (w.n, w.m) != (sys.n, sys.m):
        raise InvalidInputError("cost weights do not match system dimensions")
    G0 = symmetrize(G, "G")
    if G0.shape != (sys.n, sys.n):
        raise InvalidInputError("G must be n x n")
    N0 = symmetrize(w.R + sys.D.T @ G0 @ sys.D)
    try:
        np.linalg.cholesky(N0)
    except np.linalg.LinAlgError:
        raise InvalidTerminalError("R + D'GD is not positive definite") from None

    if sys.n == 1 and sys.m == 1:
        status, times, vals, dnorm = _adaptive_flow(
            _scalar_rhs(sys, w), lambda y: y, abs, float(G0[0, 0]), cfg
        )
        values = np.asarray(vals, dtype=float).reshape(-1, 1, 1)
    else:
        status, times, vals, dnorm = _adaptive_flow(
            _matrix_rhs(sys, w), lambda y: (y + y.T) / 2.0, fro, G0, cfg
        )
        values = np.asarray(vals, dtype=float)
    return RiccatiFlow(
        times=np.asarray(times, dtype=float),
        values=values,
        terminal=G0,
        status=status,
        derivative_norm=float(dnorm),
    )


def solve_are_strict(
    sys: ControlledSystem,
    w: CostWeights,
    cfg: FlowConfig | None = None,
    terminal: np.ndarray | None = None,
) -> np.ndarray | None:
    """Solve the strictly convex ARE (with R + D'PD > 0) over a stable pair.

    The flow starts from the Lyapunov terminal value G solving
    G A + A'G + C'G C + Q = 0 (the infinite-horizon cost of the uncontrolled
    system), which may be passed in via ``terminal`` when already available.
    Returns None when the flow diverges, exits positivity, or the candidate
    fails its residual check -- i.e. the strictly convex problem has no
    solution.
    """
    cfg = cfg or FlowConfig()
    pair = sys.pair()
    if not is_l2_stable(pair):
        raise NotStableError("solve_are_strict requires a mean-square stable [A, C]")
    G = terminal if terminal is not None else solve_lyapunov(pair, w.Q)
    try:
        flow = integrate_riccati_flow(sys, w, G, cfg)
    except InvalidTerminalError:
        return None
    if flow.status != "converged":
        return None
    P = flow.values[-1]
    maps = GareMaps(sys, w)
    N = maps.control_part(P)
    try:
        np.linalg.cholesky(N)
    except np.linalg.LinAlgError:
        return None
    L = maps.cross_part(P)
    res = fro(maps.lyapunov_part(P) - L @ np.linalg.solve(N, L.T))
    if res > cfg.res_tol * (1.0 + fro(P)):
        return None
    return P


def transform_problem(
    sys: ControlledSystem, w: CostWeights, Sigma
) -> tuple[ControlledSystem, CostWeights]:
    """Absorb a stabilizing pre-feedback u = Sigma x + v into the data.

    Returns ([A + B Sigma, C + D Sigma; B, D], (Q~, S~, R)) with

        Q~ = Q + S'Sigma + Sigma'S + Sigma'R Sigma,    S~ = S + R Sigma,

    so that the transformed uncontrolled pair is L2-stable and the cost of
    (x, v) equals the original cost of (x, Sigma x + v).
    """
    Sig = as_matrix(Sigma, "Sigma")
    if Sig.shape != (sys.m, sys.n):
        raise InvalidInputError("Sigma must be m x n")
    if not is_stabilizer(sys, Sig):
        raise InvalidInputError("Sigma is not a stabilizer of the system")
    At = sys.A + sys.B @ Sig
    Ct = sys.C + sys.D @ Sig
    Qt = symmetrize(w.Q + w.S.T @ Sig + Sig.T @ w.S + Sig.T @ w.R @ Sig)
    St = w.S + w.R @ Sig
    return ControlledSystem(At, Ct, sys.B, sys.D), CostWeights(Qt, St, w.R)


@dataclass
class GareConfig:
    """Configuration of the epsilon-path GARE solver."""

    epsilon_schedule: tuple[float, ...] = tuple(10.0 ** -k for k in range(1, 9))
    path_tol: float = 1e-6         # relative settling threshold on consecutive P_eps
    res_tol: float = 1e-6          # relative ARE residual bound on the final P
    range_tol: float = 1e-6        # normalized range-condition defect bound
    psd_tol: float = 1e-8          # relative lower bound slack on eigenvalues of N(P)
    flow: FlowConfig = field(default_factory=FlowConfig)
    reduction_stabilizer: np.ndarray | None = None   # override the computed Sigma


@dataclass
class GareSolution:
    """Static stabilizing solution of the generalized ARE with its feedback."""

    P: np.ndarray                    # the static stabilizing solution
    Theta: np.ndarray                # stabilizing feedback -N^+L' + (I - N^+N) Pi
    Pi: np.ndarray                   # the free parameter actually chosen
    epsilon_path: list[tuple[float, np.ndarray]]
    diagnostics: dict


@dataclass
class GareUnsolvable:
    """Outcome when the epsilon path diverges, fails to settle, or the limit
    fails verification -- the problem has no static stabilizing solution (or
    is numerically indistinguishable from such a problem)."""

    reason: str
    epsilon_path: list[tuple[float, np.ndarray]]
    diagnostics: dict


def control_pseudoinverse(N, psd_tol: float = 1e-8) -> np.ndarray:
    """Pseudoinverse of R + D'PD with noise-aware rank detection.

    At a degenerate solution N(P) is exactly singular in exact arithmetic but
    carries O(eps) rounding; eigenvalues within ``psd_tol * (1 + ||N||)`` of
    zero are treated as zero so the induced feedback family keeps its full
    null-space freedom (matching the null-basis detection below).
    """
    Nm = symmetrize(N)
    return pinv(Nm, abs_tol=psd_tol * (1.0 + fro(Nm)))


def _null_basis(N: np.ndarray, tol: float) -> np.ndarray:
    w, V = np.linalg.eigh(symmetrize(N))
    mask = np.abs(w) <= tol * (1.0 + fro(N))
    return V[:, mask]


def _select_feedback(sys: ControlledSystem, N: np.ndarray, Lt: np.ndarray,
                     null_tol: float, flow_cfg: FlowConfig):
    """Pick Theta = -N^+ L' + (I - N^+N) Pi stabilizing, trying Pi = 0 first.

    When N is singular and Pi = 0 fails, the search reduces to stabilizing
    the system restricted to the control directions in the null space of N
    (deterministic and complete, since the restricted search is itself the
    full stabilizability test).  Returns (Theta, Pi) or None.
    """
    from .stabilizability import find_stabilizer

    Nd = control_pseudoinverse(N, null_tol)
    Theta0 = -Nd @ Lt
    if is_stabilizer(sys, Theta0):
        return Theta0, np.zeros_like(Theta0)
    U0 = _null_basis(N, null_tol)
    if U0.shape[1] == 0:
        return None
    restricted = ControlledSystem(
        sys.A + sys.B @ Theta0, sys.C + sys.D @ Theta0, sys.B @ U0, sys.D @ U0
    )
    Z = find_stabilizer(restricted, flow_cfg)
    if Z is None:
        return None
    Pi = U0 @ Z
    Theta = Theta0 + (np.eye(sys.m) - Nd @ N) @ Pi
    if not is_stabilizer(sys, Theta):
        return None
    return Theta, Pi


def solve_gare(
    sys: ControlledSystem, w: CostWeights, cfg: GareConfig | None = None
) -> GareSolution | GareUnsolvable:
    """Compute the static stabilizing solution of the generalized ARE.

    Pipeline: stabilize the system with a pre-feedback Sigma, reduce to the
    stable case, follow the strictly convex solutions P_eps of the problems
    with control weight R + eps I down the epsilon schedule, detect settling
    of the path, and verify the three GARE conditions of the limit on the
    original (untransformed) data before constructing the feedback.

    Raises :class:`NotStabilizableError` when the system has no stabilizer.
    Returns :class:`GareUnsolvable` when the epsilon path breaks down or its
    limit fails verification (the problem has no optimal control).
    """
    cfg = cfg or GareConfig()
    if cfg.reduction_stabilizer is not None:
        Sigma = as_matrix(cfg.reduction_stabilizer, "reduction_stabilizer")
        if not is_stabilizer(sys, Sigma):
            raise InvalidInputError("reduction_stabilizer is not a stabilizer")
    else:
        from .stabilizability import find_stabilizer

        Sigma = find_stabilizer(sys, cfg.flow)
        if Sigma is None:
            raise NotStabilizableError("system [A,C;B,D] is not L2-stabilizable")

    tsys, tw = transform_problem(sys, w, Sigma)
    G = solve_lyapunov(tsys.pair(), tw.Q)
    eye_m = np.eye(sys.m)

    path: list[tuple[float, np.ndarray]] = []
    diagnostics: dict = {"sigma": Sigma}
    prev = None
    settled = False
    for eps in cfg.epsilon_schedule:
        w_eps = CostWeights(tw.Q, tw.S, tw.R + eps * eye_m)
        P_eps = solve_are_strict(tsys, w_eps, cfg.flow, terminal=G)
        if P_eps is None:
            diagnostics["failed_epsilon"] = eps
            return GareUnsolvable(
                f"strictly convex solve failed at epsilon={eps:g}", path, diagnostics
            )
        path.append((eps, P_eps))
        if prev is not None:
            diff = fro(P_eps - prev[1])
            if diff < cfg.path_tol * (1.0 + fro(P_eps)):
                # the whole schedule still runs: the regularized gains only
                # approach their limit linearly in epsilon even when P_eps
                # has already settled
                settled = True
                if "first_settled_epsilon" not in diagnostics:
                    diagnostics["first_settled_epsilon"] = eps
            else:
                settled = False
        prev = (eps, P_eps)

    if not settled:
        return GareUnsolvable(
            "epsilon path did not settle by the end of the schedule; "
            "problem unsolvable or ill-conditioned",
            path,
            diagnostics,
        )

    # Geometric-schedule limit estimate: with P_eps ~= P + c*eps the residual
    # correction after the last refinement is (P_k - P_{k-1}) * r / (1 - r).
    (eps_prev, P_prev), (eps_last, P_last) = path[-2], path[-1]
    ratio = eps_last / eps_prev
    P = symmetrize(P_last + (P_last - P_prev) * (ratio / (1.0 - ratio)))
    diagnostics["settled_at_epsilon"] = eps_last
    diagnostics["extrapolation_norm"] = fro(P - P_last)

    maps = GareMaps(sys, w)
    res_norm = fro(maps.residual(P))
    N = maps.control_part(P)
    Lt = maps.cross_part(P).T
    rdefect = range_defect(Lt, N)
    n_min = float(np.linalg.eigvalsh(N)[0])
    diagnostics.update(are_residual=res_norm, range_defect=rdefect, n_min_eig=n_min)

    if res_norm > cfg.res_tol * (1.0 + fro(P)):
        return GareUnsolvable("limit fails the ARE residual check", path, diagnostics)
    if rdefect > cfg.range_tol:
        return GareUnsolvable("limit fails the range condition", path, diagnostics)
    if n_min < -cfg.psd_tol * (1.0 + fro(N)):
        return GareUnsolvable("R + D'PD is not positive semidefinite", path, diagnostics)

    picked = _select_feedback(sys, N, Lt, cfg.psd_tol, cfg.flow)
    if picked is None:
        return GareUnsolvable(
            "no feedback of the admissible family stabilizes the system",
            path,
            diagnostics,
        )
    Theta, Pi = picked
    if not is_stabilizer(sys, Theta):
        raise InternalInconsistencyError("selected feedback failed the stabilizer check")

    # Consistency of the reduction: N(P) (Sigma* + Sigma) = -L(P)' must hold
    # once the range condition does, for any transformed-problem feedback.
    Lt_t = (P @ tsys.B + tsys.C.T @ P @ tsys.D + tw.S.T).T
    Sigma_star = -control_pseudoinverse(N, cfg.psd_tol) @ Lt_t
    identity_gap = fro(N @ (Sigma_star + Sigma) + Lt) / (1.0 + fro(Lt))
    diagnostics["identity_gap"] = identity_gap
    if identity_gap > 1e-6:
        raise InternalInconsistencyError(
            f"reduction identity violated (gap {identity_gap:.3e})"
        )

    return GareSolution(P=P, Theta=Theta, Pi=Pi, epsilon_path=path, diagnostics=diagnostics)


@dataclass
class GareVerification:
    """Independent recheck of a candidate GARE solution."""

    are_residual: float
    n_min_eig: float
    range_defect: float
    stabilizer_found: bool
    theta: np.ndarray | None
    passed: bool


def verify_static_stabilizing(
    sys: ControlledSystem, w: CostWeights, P, cfg: GareConfig | None = None
) -> GareVerification:
    """Recompute, from scratch, whether P is a static stabilizing GARE solution.

    All four findings (residual, semidefiniteness of N(P), range condition,
    existence of a stabilizing feedback in the induced family) are evaluated
    directly from the inputs, independent of how P was produced.
    """
    cfg = cfg or GareConfig()
    Pm = symmetrize(P, "P")
    maps = GareMaps(sys, w)
    res_norm = fro(maps.residual(Pm))
    N = maps.control_part(Pm)
    Lt = maps.cross_part(Pm).T
    rdefect = range_defect(Lt, N)
    n_min = float(np.linalg.eigvalsh(N)[0])
    picked = _select_feedback(sys, N, Lt, cfg.psd_tol, cfg.flow)
    passed = (
        res_norm <= cfg.res_tol * (1.0 + fro(Pm))
        and rdefect <= cfg.range_tol
        and n_min >= -cfg.psd_tol * (1.0 + fro(N))
        and picked is not None
    )
    return GareVerification(
        are_residual=res_norm,
        n_min_eig=n_min,
        range_defect=rdefect,
        stabilizer_found=picked is not None,
        theta=picked[0] if picked else None,
        passed=passed,
    )
