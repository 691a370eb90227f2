"""Scaled-plant construction, controller assembly and the epsilon search.

The scaling parameter eps trades the uncertainty channel against the
disturbance channel: for a fixed eps the synthesis is a pair of Riccati
equations plus assumption checks, and feasibility additionally demands that
the resulting scaled closed loop be strictly bounded real with unitary
attenuation.  Existence of a good eps is not constructive in the underlying
theory, so the search evaluates a logarithmic grid and refines around the
best feasible point by golden section on the worst-case closed-loop norm.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import analysis
from .analysis import ClosedLoopSystem, InvalidConfig, ScaledCheckReport, close_loop
from .qmodel import (
    CommutationStructure,
    DimensionError,
    OpenPlant,
    UncertaintySample,
    canonical_theta,
    matrix_to_json,
)
from .realization import CoherentController, complete_realization
from .riccati import (
    AssumptionReport,
    AssumptionViolation,
    CareSolution,
    NoStabilizingSolution,
    SubspaceSingular,
    check_assumptions,
    riccati_X,
    riccati_Y,
)

__all__ = [
    "EpsEvaluation",
    "NoFeasibleEpsilon",
    "ScaledPlant",
    "SpectralRadiusViolation",
    "SynthesisConfig",
    "SynthesisReport",
    "controller_matrices",
    "sampled_delta_grid",
    "scalar_delta_grid",
    "scale_plant",
    "search_epsilon",
    "synthesize",
]

DEFAULT_EPS_RANGE = (1e-3, 1e3)
DEFAULT_POINTS_PER_DECADE = 8
#: Golden-section refinement stops once the eps bracket ratio drops below this.
BRACKET_RATIO = 1.05


class NoFeasibleEpsilon(RuntimeError):
    """No evaluated scaling parameter passed the full feasibility chain."""

    def __init__(self, message: str, trace: tuple = ()):
        super().__init__(message)
        self.trace = trace


class SpectralRadiusViolation(RuntimeError):
    """I - YX is numerically singular, so rho(XY) < 1 fails."""


def scalar_delta_grid(m: int, num: int = 21) -> tuple[UncertaintySample, ...]:
    """Evenly spaced scalar samples Delta = delta * I, delta in [-1, 1]."""
    if num < 1:
        raise InvalidConfig("delta grid needs at least one point")
    if num == 1:
        return (UncertaintySample(np.zeros((m, m))),)
    return tuple(
        UncertaintySample(d * np.eye(m)) for d in np.linspace(-1.0, 1.0, num)
    )


def sampled_delta_grid(m: int, num: int = 16, seed: int = 0) -> tuple[UncertaintySample, ...]:
    """Random admissible samples for matrix-valued uncertainty, plus +/- I.

    Each sample conjugates a diagonal of entries drawn in [-1, 1] by a random
    orthogonal matrix, so the contraction bound holds exactly.
    """
    rng = np.random.default_rng(seed)
    samples = [UncertaintySample(np.eye(m)), UncertaintySample(-np.eye(m))]
    for _ in range(num):
        Q = np.linalg.qr(rng.standard_normal((m, m)))[0]
        d = rng.uniform(-1.0, 1.0, size=m)
        samples.append(UncertaintySample(Q @ np.diag(d) @ Q.T))
    return tuple(samples)


@dataclass(frozen=True)
class SynthesisConfig:
    """Knobs of one synthesis run.

    ``eps=None`` triggers the grid-plus-refinement search over
    ``eps_range``; ``delta_grid=None`` selects the default 21-point scalar
    verification grid.
    """

    g: float
    eps: float | None = None
    eps_range: tuple[float, float] = DEFAULT_EPS_RANGE
    points_per_decade: int = DEFAULT_POINTS_PER_DECADE
    delta_grid: tuple[UncertaintySample, ...] | None = None
    workers: int = 1

    def __post_init__(self):
        if self.g <= 0:
            raise InvalidConfig(f"attenuation g must be positive, got {self.g}")
        if self.eps is not None and self.eps <= 0:
            raise InvalidConfig(f"eps must be positive, got {self.eps}")
        lo, hi = self.eps_range
        if not (0 < lo < hi):
            raise InvalidConfig(f"eps_range must satisfy 0 < lo < hi, got {self.eps_range}")
        if self.points_per_decade < 1:
            raise InvalidConfig("points_per_decade must be at least 1")
        if self.delta_grid is not None:
            if len(self.delta_grid) == 0:
                raise InvalidConfig("delta_grid must be non-empty")
            object.__setattr__(self, "delta_grid", tuple(self.delta_grid))

    def resolved_delta_grid(self, m: int) -> tuple[UncertaintySample, ...]:
        if self.delta_grid is not None:
            return self.delta_grid
        return scalar_delta_grid(m)


@dataclass(frozen=True)
class ScaledPlant:
    """Uncertainty-free auxiliary plant whose unitary-attenuation control
    problem stands in for the robust one.

    Same nine-matrix shape as OpenPlant: the disturbance input gains the
    uncertainty columns, the performance output gains the uncertainty rows,
    and the measurement feedthrough is zero-padded to match.
    """

    A: np.ndarray
    B0: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    D12: np.ndarray
    C2: np.ndarray
    D20: np.ndarray
    D21: np.ndarray
    theta: CommutationStructure
    m: int

    @property
    def n(self) -> int:
        return self.A.shape[0]


def scale_plant(plant: OpenPlant, g: float, eps: float) -> ScaledPlant:
    """Exact block assembly of the scaled control problem at (g, eps)."""
    if g <= 0 or eps <= 0:
        raise InvalidConfig("g and eps must be positive")
    E = plant.uncertainty.E
    th = plant.theta.theta
    root = np.sqrt(eps)
    return ScaledPlant(
        A=plant.A,
        B0=plant.B0,
        B1=np.hstack([2.0 * root * th @ E.T, plant.B1 / g]),
        B2=plant.B2,
        C1=np.vstack([E / root, plant.C1]),
        D12=np.vstack([np.zeros((plant.m, plant.n_u)), plant.D12]),
        C2=plant.C2,
        D20=plant.D20,
        D21=np.hstack([np.zeros((plant.n_y, plant.m)), plant.D21 / g]),
        theta=plant.theta,
        m=plant.m,
    )


def controller_matrices(
    plant: OpenPlant, g: float, eps: float, X: CareSolution, Y: CareSolution
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Controller triple (A_K, B_K, C_K) from the two Riccati solutions."""
    E1 = plant.D12.T @ plant.D12
    E2 = (plant.D21 @ plant.D21.T) / g**2
    if np.linalg.eigvalsh(E1).min() <= 1e-10:
        raise AssumptionViolation(1, "D12'D12 is singular")
    if np.linalg.eigvalsh(E2).min() <= 1e-10:
        raise AssumptionViolation(2, "D21 D21' / g^2 is singular")
    Xm, Ym = X.X, Y.X
    closure = np.eye(plant.n) - Ym @ Xm
    if np.linalg.cond(closure) > 1e12:
        raise SpectralRadiusViolation(
            "I - YX is numerically singular; the spectral-radius condition fails"
        )
    E1_inv = np.linalg.inv(E1)
    E2_inv = np.linalg.inv(E2)
    E = plant.uncertainty.E
    th = plant.theta.theta

    C_K = -E1_inv @ (plant.B2.T @ Xm + plant.D12.T @ plant.C1)
    B_K = np.linalg.solve(closure, Ym @ plant.C2.T + (plant.B1 @ plant.D21.T) / g**2) @ E2_inv
    A_K = (
        plant.A
        + plant.B2 @ C_K
        - B_K @ plant.C2
        + 4.0 * eps * th @ E.T @ E @ th.T @ Xm
        + (plant.B1 @ plant.B1.T @ Xm) / g**2
        - (B_K @ plant.D21 @ plant.B1.T @ Xm) / g**2
    )
    return A_K, B_K, C_K


# ---------------------------------------------------------------------------
# Single-eps evaluation and the search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpsEvaluation:
    """Everything learned about one scaling parameter."""

    eps: float
    feasible: bool
    worst_norm: float
    rho_XY: float
    reason: str
    X: CareSolution | None = None
    Y: CareSolution | None = None
    assumptions: AssumptionReport | None = None
    controller: CoherentController | None = None
    closed: ClosedLoopSystem | None = None
    scaled_report: ScaledCheckReport | None = None
    per_sample_norms: tuple[float, ...] = ()

    def trace_row(self) -> tuple[float, bool, float]:
        return (self.eps, self.feasible, self.worst_norm)


def evaluate_epsilon(
    plant: OpenPlant, g: float, eps: float, samples: Sequence[UncertaintySample]
) -> EpsEvaluation:
    """Run the full fixed-eps pipeline and report feasibility evidence."""

    def infeasible(reason: str, **kw) -> EpsEvaluation:
        return EpsEvaluation(
            eps=eps, feasible=False, worst_norm=float("inf"), rho_XY=float("nan"),
            reason=reason, **kw,
        )

    try:
        X = riccati_X(plant, g, eps)
        Y = riccati_Y(plant, g, eps)
    except (NoStabilizingSolution, SubspaceSingular, AssumptionViolation) as exc:
        return infeasible(str(exc))

    report = check_assumptions(plant, g, eps, X, Y)
    if not report.all_ok:
        return infeasible(
            "assumptions failed: " + _describe_failures(report),
            X=X, Y=Y, assumptions=report,
        )

    try:
        A_K, B_K, C_K = controller_matrices(plant, g, eps, X, Y)
        controller = complete_realization(
            A_K,
            B_K,
            C_K,
            theta_K=canonical_theta(plant.n),
            theta_y=canonical_theta(plant.n_y),
            theta_u=canonical_theta(plant.n_u),
        )
    except (SpectralRadiusViolation, DimensionError) as exc:
        return infeasible(str(exc), X=X, Y=Y, assumptions=report)

    closed = close_loop(plant, controller)
    scaled = analysis.scaled_equivalence_check(closed, g, eps, samples)
    if not scaled.verdict:
        return infeasible(
            f"scaled closed loop not strictly bounded real (norm {scaled.scaled.norm:.6f})",
            X=X, Y=Y, assumptions=report, controller=controller,
            closed=closed, scaled_report=scaled,
        )

    robust = analysis.robust_sbr_check(closed, g, samples, witness=scaled.scaled.witness)
    worst = max(robust.per_sample_norms)
    return EpsEvaluation(
        eps=eps,
        feasible=True,
        worst_norm=worst,
        rho_XY=report.rho_XY,
        reason="",
        X=X,
        Y=Y,
        assumptions=report,
        controller=controller,
        closed=closed,
        scaled_report=scaled,
        per_sample_norms=robust.per_sample_norms,
    )


def _describe_failures(report: AssumptionReport) -> str:
    labels = {
        "e1_ok": "D12'D12 > 0",
        "e2_ok": "D21 D21'/g^2 > 0",
        "rank_cond_3_ok": "column-rank condition",
        "rank_cond_4_ok": "row-rank condition",
        "stab_1_ok": "first closed-loop matrix stable",
        "stab_2_ok": "second closed-loop matrix stable",
        "rho_ok": f"rho(XY) = {report.rho_XY:.6f} < 1",
    }
    return "; ".join(text for name, text in labels.items() if not getattr(report, name))


def _eps_grid(config: SynthesisConfig) -> np.ndarray:
    lo, hi = config.eps_range
    decades = math.log10(hi / lo)
    count = max(2, int(round(decades * config.points_per_decade)) + 1)
    return np.geomspace(lo, hi, count)


def _evaluate_many(
    plant: OpenPlant,
    g: float,
    eps_values: Sequence[float],
    samples: Sequence[UncertaintySample],
    workers: int,
) -> list[EpsEvaluation]:
    # Grid points are independent; the result list keeps the input order, so
    # the outcome is identical however many workers run.
    if workers > 1 and len(eps_values) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda e: evaluate_epsilon(plant, g, e, samples), eps_values))
    return [evaluate_epsilon(plant, g, eps, samples) for eps in eps_values]


def _better(a: EpsEvaluation, b: EpsEvaluation) -> bool:
    """Whether a beats b: smaller worst-case norm, ties by smaller rho(XY)."""
    if not b.feasible:
        return a.feasible
    if not a.feasible:
        return False
    if a.worst_norm != b.worst_norm:
        return a.worst_norm < b.worst_norm
    return a.rho_XY < b.rho_XY


def search_epsilon(
    plant: OpenPlant, config: SynthesisConfig
) -> tuple[float, list[EpsEvaluation], tuple[str, ...]]:
    """Grid search plus golden-section refinement of the scaling parameter.

    Returns the chosen eps, every evaluation performed (the trace), and any
    informational flags.  When the uncertainty shape matrix is zero the
    problem does not depend on eps at all, so only the low end of the grid is
    evaluated and the result is flagged ``epsilon-inert``.
    """
    samples = config.resolved_delta_grid(plant.m)
    grid = _eps_grid(config)

    if not plant.uncertainty.E.any():
        evaluation = evaluate_epsilon(plant, config.g, float(grid[0]), samples)
        if not evaluation.feasible:
            raise NoFeasibleEpsilon(
                f"eps-independent problem is infeasible: {evaluation.reason}",
                trace=(evaluation.trace_row(),),
            )
        return evaluation.eps, [evaluation], ("epsilon-inert",)

    trace = _evaluate_many(plant, config.g, [float(e) for e in grid], samples, config.workers)
    feasible = [ev for ev in trace if ev.feasible]
    if not feasible:
        raise NoFeasibleEpsilon(
            f"no feasible eps on the grid {config.eps_range} "
            f"({len(grid)} points)",
            trace=tuple(ev.trace_row() for ev in trace),
        )

    best = feasible[0]
    for ev in feasible[1:]:
        if _better(ev, best):
            best = ev

    # Golden-section refinement between the grid neighbours of the best point,
    # on log(eps), minimizing the worst-case closed-loop norm.
    index = int(np.argmin(np.abs(grid - best.eps)))
    lo = math.log(grid[max(index - 1, 0)])
    hi = math.log(grid[min(index + 1, len(grid) - 1)])
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0

    def objective(ev: EpsEvaluation) -> float:
        return ev.worst_norm if ev.feasible else float("inf")

    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    if hi > lo:
        e1 = evaluate_epsilon(plant, config.g, math.exp(x1), samples)
        e2 = evaluate_epsilon(plant, config.g, math.exp(x2), samples)
        trace.extend([e1, e2])
        while math.exp(hi - lo) > BRACKET_RATIO:
            if objective(e1) <= objective(e2):
                hi, x2, e2 = x2, x1, e1
                x1 = hi - inv_phi * (hi - lo)
                e1 = evaluate_epsilon(plant, config.g, math.exp(x1), samples)
                trace.append(e1)
            else:
                lo, x1, e1 = x1, x2, e2
                x2 = lo + inv_phi * (hi - lo)
                e2 = evaluate_epsilon(plant, config.g, math.exp(x2), samples)
                trace.append(e2)

    for ev in trace:
        if _better(ev, best):
            best = ev
    return best.eps, trace, ()


@dataclass(frozen=True)
class SynthesisReport:
    """Result bundle of one synthesis run."""

    eps_used: float
    feasible: bool
    X: CareSolution | None
    Y: CareSolution | None
    assumptions: AssumptionReport | None
    controller: CoherentController | None
    worst_case_norm: float
    per_eps_trace: tuple[tuple[float, bool, float], ...]
    flags: tuple[str, ...] = ()
    closed: ClosedLoopSystem | None = None
    scaled_report: ScaledCheckReport | None = None
    per_sample_norms: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        out = {
            "feasible": self.feasible,
            "eps_used": self.eps_used,
            "worst_case_norm": self.worst_case_norm,
            "flags": list(self.flags),
            "per_eps_trace": [
                {"eps": e, "feasible": ok, "worst_norm": norm}
                for e, ok, norm in self.per_eps_trace
            ],
        }
        if self.X is not None:
            out["X"] = matrix_to_json(self.X.X)
            out["X_residual"] = self.X.residual
        if self.Y is not None:
            out["Y"] = matrix_to_json(self.Y.X)
            out["Y_residual"] = self.Y.residual
        if self.assumptions is not None:
            out["assumptions"] = self.assumptions.to_dict()
        if self.scaled_report is not None:
            out["scaled_closed_loop_norm"] = self.scaled_report.scaled.norm
            out["scaled_witness_certifies"] = self.scaled_report.witness_certifies
        if self.per_sample_norms:
            out["per_sample_norms"] = list(self.per_sample_norms)
        return out


def synthesize(plant: OpenPlant, config: SynthesisConfig) -> SynthesisReport:
    """End-to-end synthesis: Riccati pair, assumptions, controller,
    realization completion and closed-loop verification.

    Raises
    ------
    NoFeasibleEpsilon
        When the fixed eps fails the feasibility chain, or the search
        exhausts its grid.  The exception carries the per-eps trace.
    """
    samples = config.resolved_delta_grid(plant.m)
    flags: tuple[str, ...] = ()
    if config.eps is not None:
        evaluation = evaluate_epsilon(plant, config.g, config.eps, samples)
        trace = [evaluation]
        if not evaluation.feasible:
            raise NoFeasibleEpsilon(
                f"eps = {config.eps:g} is infeasible: {evaluation.reason}",
                trace=(evaluation.trace_row(),),
            )
    else:
        eps, trace, flags = search_epsilon(plant, config)
        evaluation = next(ev for ev in trace if ev.eps == eps and ev.feasible)

    return SynthesisReport(
        eps_used=evaluation.eps,
        feasible=True,
        X=evaluation.X,
        Y=evaluation.Y,
        assumptions=evaluation.assumptions,
        controller=evaluation.controller,
        worst_case_norm=evaluation.worst_norm,
        per_eps_trace=tuple(ev.trace_row() for ev in trace),
        flags=flags,
        closed=evaluation.closed,
        scaled_report=evaluation.scaled_report,
        per_sample_norms=evaluation.per_sample_norms,
    )
