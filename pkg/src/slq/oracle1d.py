"""Closed-form solver for the scalar problem (n = m = 1).

The scalar generalized ARE splits into explicit cases after normalizing the
control direction (rescale u so that B = 1 when D = 0, or D = 1 otherwise;
the value P is invariant and gains map back through the same factor):

* D = 0:  the ARE is P(2A + C^2) + Q - R^+ (P + S)^2 = 0, with subcases by
  the sign of R; for R > 0 solvability is governed by the discriminant
  Sigma = R(2A+C^2)^2 - 4S(2A+C^2) + 4Q > 0.
* D = 1:  with alpha = (B+C)^2 - (2A+C^2) > 0 (equivalent to
  stabilizability), beta = Q - (2A+C^2)R + 2(B+C)[(B+C)R - S] and
  gamma = [(B+C)R - S]^2, the substitution y = R + P turns the ARE into
  alpha y^2 - beta y + gamma = 0, y > 0.  The degenerate solution P = -R
  exists exactly when Q = (2A+C^2)R and S = (B+C)R; otherwise the problem is
  solvable iff beta > 0 and beta^2 - 4 alpha gamma > 0, with the static
  stabilizing root y2 = (beta + sqrt(beta^2 - 4 alpha gamma)) / (2 alpha).

Used both standalone and as the ground-truth oracle for the matrix pipeline.
"""

from __future__ import annotations

import decimal
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import NotStabilizableError, UnsupportedInputError
from .stability import SystemPair, is_l2_stable

__all__ = [
    "CaseReport",
    "Oracle1dResult",
    "StrategySet",
    "classify_1d_cases",
    "solve_1d",
]

#: Relative tolerance for the exact-degeneracy tests Q = (2A+C^2)R, S = (B+C)R.
DEGENERACY_RTOL = 1e-12

#: Window inside which a near-degenerate input triggers a dual report.
NEAR_DEGENERACY_RTOL = 1e-9

# The normalization by 1/D (or 1/B) inflates coefficients when the scale is
# small, and the discriminants beta^2 - 4 alpha gamma then cancel
# catastrophically in doubles even though the underlying problem is well
# conditioned.  All polynomial quantities are therefore carried as exact
# rationals and only the final square roots are taken, at 60 digits.
_PREC = 60


def _dec(x: Fraction) -> decimal.Decimal:
    return decimal.Decimal(x.numerator) / decimal.Decimal(x.denominator)


def _dec_sqrt(x: Fraction) -> decimal.Decimal:
    return _dec(x).sqrt()


@dataclass
class StrategySet:
    """A closed-loop strategy: one gain, or a set of gains with free affine term.

    kind 'point': the unique optimal gain ``theta`` with v = 0.
    kind 'interval': every theta with |theta - center| < radius is optimal,
    with arbitrary square-integrable v; ``theta`` is the midpoint.
    kind 'half-line': every theta strictly on ``side`` of ``bound`` is
    optimal with arbitrary v; ``theta`` is a canonical interior point.
    """

    kind: str
    theta: float
    v_free: bool = False
    center: float | None = None
    radius: float | None = None
    bound: float | None = None
    side: str | None = None

    def contains(self, theta: float, margin: float = 0.0) -> bool:
        if self.kind == "point":
            return abs(theta - self.theta) <= margin
        if self.kind == "interval":
            return abs(theta - self.center) < self.radius + margin
        if self.side == "below":
            return theta < self.bound + margin
        return theta > self.bound - margin


@dataclass
class Oracle1dResult:
    """Closed-form outcome: case label, solution P, and the strategy set.

    Case labels name the branch taken: D0-R-negative / D0-R-zero /
    D0-R-positive for the noise-free-control branch, D1-degenerate /
    D1-case-ii / D1-case-iii / D1-case-iv for the noisy one, plus
    'unsolvable' (noisy branch, none of the solvability cases holds) and
    'not-stabilizable'.  ``solvable`` is authoritative: the D0-* labels also
    cover the unsolvable outcomes of their branch.
    """

    case: str
    solvable: bool
    P: float | None = None
    strategy: StrategySet | None = None
    alpha: float | None = None
    beta: float | None = None
    gamma: float | None = None
    Sigma: float | None = None
    Delta: float | None = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class CaseReport:
    """Evaluation of every solvability inequality of the noisy branch."""

    alpha: float
    beta: float
    gamma: float
    Delta: float
    two_a_c2: float
    degenerate: bool
    case_ii_applies: bool
    case_iii_applies: bool
    case_iv_applies: bool
    threshold_ii: float | None
    threshold_iii: float | None
    threshold_iv: float | None
    reformulation_holds: bool     # beta > 0 and beta^2 - 4 alpha gamma > 0
    case: str | None              # which case (if any) holds


def _is_stabilizable_1d(A, C, B, D) -> bool:
    a, c, b, d = map(Fraction, (A, C, B, D))
    return (2 * a + c * c) * d * d < (b + c * d) ** 2


def _rel_close(x: Fraction, y: Fraction, rtol: float) -> bool:
    return abs(x - y) <= Fraction(rtol) * (1 + abs(x) + abs(y))


def _solve_d0(A, C, Q, S, R, scale_k: float) -> Oracle1dResult:
    """Normalized branch D = 0, B = 1; gains are divided by scale_k on return."""
    a2 = 2 * A + C * C
    half = -a2 / 2
    if R < 0:
        return Oracle1dResult("D0-R-negative", False,
                              diagnostics={"detail": "negative control weight"})
    if R == 0:
        solvable = _rel_close(Q, S * a2, DEGENERACY_RTOL)
        if not solvable:
            return Oracle1dResult("D0-R-zero", False,
                                  diagnostics={"detail": "requires Q = S(2A+C^2)"})
        theta_norm = half - 1
        strategy = _half_line(half, theta_norm, scale_k)
        return Oracle1dResult("D0-R-zero", True, P=float(-S), strategy=strategy)
    Sigma = R * a2 * a2 - 4 * S * a2 + 4 * Q
    if Sigma <= 0:
        return Oracle1dResult("D0-R-positive", False, Sigma=float(Sigma),
                              diagnostics={"detail": "discriminant not positive"})
    with decimal.localcontext() as ctx:
        ctx.prec = _PREC
        sq_delta = _dec_sqrt(R * Sigma)
        P = (_dec(a2 * R - 2 * S) + sq_delta) / 2
        theta_norm = -(_dec(a2) + _dec_sqrt(Sigma / R)) / 2
        rejected = (_dec(a2 * R - 2 * S) - sq_delta) / 2
    strategy = StrategySet("point", float(theta_norm) / scale_k)
    result = Oracle1dResult("D0-R-positive", True, P=float(P), strategy=strategy,
                            Sigma=float(Sigma), Delta=float(R * Sigma))
    result.diagnostics["rejected_root"] = float(rejected)
    return result


def _half_line(bound_norm: Fraction, theta_norm: Fraction, k: float) -> StrategySet:
    # {theta' < bound} maps to {theta < bound/k} for k > 0 and flips for k < 0.
    side = "below" if k > 0 else "above"
    return StrategySet("half-line", float(theta_norm) / k, v_free=True,
                       bound=float(bound_norm) / k, side=side)


def _abg(A, C, B, Q, S, R) -> tuple[Fraction, Fraction, Fraction]:
    bc = B + C
    a2 = 2 * A + C * C
    alpha = bc * bc - a2
    beta = Q - a2 * R + 2 * bc * (bc * R - S)
    gamma = (bc * R - S) ** 2
    return alpha, beta, gamma


def _classify_d1(A, C, B, Q, S, R) -> CaseReport:
    bc = B + C
    a2 = 2 * A + C * C
    alpha, beta, gamma = _abg(A, C, B, Q, S, R)
    if alpha <= 0:
        raise NotStabilizableError("alpha <= 0: the scalar system has no stabilizer")
    Delta = beta * beta - 4 * alpha * gamma
    degenerate = (_rel_close(Q, a2 * R, DEGENERACY_RTOL)
                  and _rel_close(S, bc * R, DEGENERACY_RTOL))

    thr_ii = thr_iii = thr_iv = None
    case_ii = case_iii = case_iv = False
    with decimal.localcontext() as ctx:
        ctx.prec = _PREC
        if a2 != 0:
            sq = _dec_sqrt(alpha)
            den_m = _dec(bc) - sq
            den_p = _dec(bc) + sq
            thr_ii = (2 * den_m * _dec(S) - _dec(Q)) / (den_m * den_m)
            thr_iii = (2 * den_p * _dec(S) - _dec(Q)) / (den_p * den_p)
            if a2 * S >= bc * Q:
                case_ii = _dec(R) > thr_ii
            else:
                case_iii = _dec(R) > thr_iii
        else:
            thr_iv = (4 * bc * S - Q) / (4 * bc * bc)
            case_iv = Q > 0 and R > thr_iv

    reformulation = beta > 0 and Delta > 0
    case = None
    if case_ii:
        case = "D1-case-ii"
    elif case_iii:
        case = "D1-case-iii"
    elif case_iv:
        case = "D1-case-iv"
    return CaseReport(float(alpha), float(beta), float(gamma), float(Delta),
                      float(a2), degenerate, case_ii, case_iii, case_iv,
                      None if thr_ii is None else float(thr_ii),
                      None if thr_iii is None else float(thr_iii),
                      None if thr_iv is None else float(thr_iv),
                      reformulation, case)


def _solve_d1(A, C, B, Q, S, R, scale_k: float) -> Oracle1dResult:
    """Normalized branch D = 1; gains are divided by scale_k on return."""
    bc = B + C
    a2 = 2 * A + C * C
    alpha, beta, gamma = _abg(A, C, B, Q, S, R)
    Delta = beta * beta - 4 * alpha * gamma

    exactly_degenerate = (_rel_close(Q, a2 * R, DEGENERACY_RTOL)
                          and _rel_close(S, bc * R, DEGENERACY_RTOL))
    nearly_degenerate = (not exactly_degenerate
                         and _rel_close(Q, a2 * R, NEAR_DEGENERACY_RTOL)
                         and _rel_close(S, bc * R, NEAR_DEGENERACY_RTOL))
    if exactly_degenerate:
        radius = math.sqrt(float(alpha)) / abs(scale_k)
        center = float(-bc) / scale_k
        strategy = StrategySet("interval", center, v_free=True,
                               center=center, radius=radius)
        return Oracle1dResult("D1-degenerate", True, P=float(-R), strategy=strategy,
                              alpha=float(alpha), beta=float(beta),
                              gamma=float(gamma), Delta=float(Delta))

    report = _classify_d1(A, C, B, Q, S, R)
    diagnostics: dict = {"case_report": report}
    if nearly_degenerate:
        diagnostics["near_degenerate"] = {
            "degenerate_P": float(-R),
            "degenerate_center": float(-bc) / scale_k,
            "degenerate_radius": math.sqrt(float(alpha)) / abs(scale_k),
        }
    if not (beta > 0 and Delta > 0):
        return Oracle1dResult("unsolvable", False, alpha=float(alpha),
                              beta=float(beta), gamma=float(gamma),
                              Delta=float(Delta), diagnostics=diagnostics)

    with decimal.localcontext() as ctx:
        ctx.prec = _PREC
        sq_delta = _dec_sqrt(Delta)
        two_alpha = 2 * _dec(alpha)
        y2 = (_dec(beta) + sq_delta) / two_alpha
        y1 = (_dec(beta) - sq_delta) / two_alpha
        P = y2 - _dec(R)
        theta_norm = _dec(bc * R - S) / y2 - _dec(bc)
        rejected = None if y1 <= 0 else _dec(bc * R - S) / y1 - _dec(bc)
    diagnostics["roots_y"] = (float(y1), float(y2))
    if rejected is not None:
        diagnostics["rejected_theta"] = float(rejected)
    case = report.case or "unsolvable"
    return Oracle1dResult(case, True, P=float(P),
                          strategy=StrategySet("point", float(theta_norm) / scale_k),
                          alpha=float(alpha), beta=float(beta), gamma=float(gamma),
                          Delta=float(Delta), diagnostics=diagnostics)


def solve_1d(A: float, C: float, B: float, D: float,
             Q: float, S: float, R: float) -> Oracle1dResult:
    """Solve the scalar homogeneous problem in closed form.

    Requires control authority (B != 0 or D != 0); a system with none falls
    outside the classification and raises :class:`UnsupportedInputError`
    with the stability verdict of [A, C] attached.
    """
    A, C, B, D, Q, S, R = map(float, (A, C, B, D, Q, S, R))
    if B == 0.0 and D == 0.0:
        stable = is_l2_stable(SystemPair([[A]], [[C]]))
        raise UnsupportedInputError(
            "no control authority (B = D = 0); "
            f"[A, C] is {'L2-stable' if stable else 'not L2-stable'}"
        )
    if not _is_stabilizable_1d(A, C, B, D):
        return Oracle1dResult("not-stabilizable", False)
    a, c, b, d = map(Fraction, (A, C, B, D))
    q, s, r = map(Fraction, (Q, S, R))
    if D == 0.0:
        # Rescale u -> B u so the control enters the drift with coefficient 1.
        return _solve_d0(a, c, q, s / b, r / (b * b), scale_k=B)
    return _solve_d1(a, c, b / d, q, s / d, r / (d * d), scale_k=D)


def classify_1d_cases(A: float, C: float, B: float, D: float,
                      Q: float, S: float, R: float) -> CaseReport:
    """Report every solvability inequality of the noisy scalar branch.

    Normalizes to D = 1 first; raises :class:`NotStabilizableError` when
    alpha <= 0 and :class:`UnsupportedInputError` when D = 0.
    """
    A, C, B, D, Q, S, R = map(float, (A, C, B, D, Q, S, R))
    if D == 0.0:
        raise UnsupportedInputError("case classification applies to the D != 0 branch")
    a, c, b, d = map(Fraction, (A, C, B, D))
    q, s, r = map(Fraction, (Q, S, R))
    return _classify_d1(a, c, b / d, q, s / d, r / (d * d))
