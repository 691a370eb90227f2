"""Stabilizing solver for continuous algebraic Riccati equations.

Both synthesis equations are instances of

    X-form:  Acl' X + X Acl + X Quad X + Const = 0
    Y-form:  Acl Y + Y Acl' + Y Quad Y + Const = 0

with symmetric (possibly indefinite) Quad and Const.  The stabilizing
solution is read off the stable invariant subspace of the 2n x 2n
Hamiltonian-structured matrix [[Acl, Quad], [-Const, -Acl']] via an ordered
real Schur decomposition, then polished with Newton (Kleinman) steps.  The
indefinite Quad blocks produced by the scaled-plant equations rule out the
positive-semidefinite contracts of off-the-shelf LQR solvers, which is why
the subspace extraction lives here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg as sla

from .qmodel import DimensionError, OpenPlant

__all__ = [
    "AssumptionReport",
    "AssumptionViolation",
    "CareProblem",
    "CareSolution",
    "NoStabilizingSolution",
    "SubspaceSingular",
    "check_assumptions",
    "riccati_X",
    "riccati_Y",
    "solve_care_stabilizing",
]

#: Hamiltonian eigenvalues closer than this to the imaginary axis mean the
#: stabilizing solution does not exist (relative to eigenvalue magnitude).
AXIS_MARGIN = 1e-8

#: Positive-semidefiniteness slack: exact zero solutions must pass.
PSD_SLACK = 1e-9

#: Strict-stability margin for the closed-loop matrices of the assumptions.
STABILITY_MARGIN = 1e-10

#: Strictness margin on the spectral radius condition rho(XY) < 1.
SPECTRAL_RADIUS_MARGIN = 1e-9


class NoStabilizingSolution(RuntimeError):
    """The equation has no admissible stabilizing solution."""


class SubspaceSingular(RuntimeError):
    """The stable invariant subspace has a singular leading block."""


class AssumptionViolation(RuntimeError):
    """A structural assumption required by the synthesis fails."""

    def __init__(self, item: int, message: str):
        super().__init__(f"assumption {item}: {message}")
        self.item = item


def _symmetric(mat: np.ndarray, name: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionError(f"{name} must be square, got {mat.shape}")
    scale = 1.0 + np.linalg.norm(mat)
    if np.linalg.norm(mat - mat.T) > 1e-12 * scale:
        raise DimensionError(f"{name} must be symmetric")
    return 0.5 * (mat + mat.T)


@dataclass(frozen=True)
class CareProblem:
    """One Riccati equation; ``orientation`` selects the X- or Y-form."""

    acl: np.ndarray
    quad: np.ndarray
    const: np.ndarray
    orientation: Literal["x", "y"] = "x"

    def __post_init__(self):
        acl = np.asarray(self.acl, dtype=float)
        if acl.ndim != 2 or acl.shape[0] != acl.shape[1]:
            raise DimensionError(f"acl must be square, got {acl.shape}")
        quad = _symmetric(self.quad, "quad")
        const = _symmetric(self.const, "const")
        if quad.shape != acl.shape or const.shape != acl.shape:
            raise DimensionError("acl, quad, const must share one square shape")
        if self.orientation not in ("x", "y"):
            raise ValueError(f"orientation must be 'x' or 'y', got {self.orientation!r}")
        object.__setattr__(self, "acl", acl)
        object.__setattr__(self, "quad", quad)
        object.__setattr__(self, "const", const)

    @property
    def n(self) -> int:
        return self.acl.shape[0]

    def residual_matrix(self, X: np.ndarray) -> np.ndarray:
        if self.orientation == "x":
            return self.acl.T @ X + X @ self.acl + X @ self.quad @ X + self.const
        return self.acl @ X + X @ self.acl.T + X @ self.quad @ X + self.const

    def closed_loop_matrix(self, X: np.ndarray) -> np.ndarray:
        if self.orientation == "x":
            return self.acl + self.quad @ X
        return self.acl + X @ self.quad


@dataclass(frozen=True)
class CareSolution:
    """Symmetric stabilizing solution with its residual and closed-loop spectrum.

    ``marginal`` marks the zero-dynamics corner case where the closed-loop
    spectrum check is waived.
    """

    X: np.ndarray
    residual: float
    closed_loop_spectrum: np.ndarray
    marginal: bool = False

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        scale = 1.0 + np.linalg.norm(X)
        if np.linalg.norm(X - X.T) > 1e-10 * scale:
            raise ValueError("solution must be symmetric")
        if np.linalg.eigvalsh(X).min() < -PSD_SLACK:
            raise ValueError("solution must be positive semidefinite up to tolerance")
        if self.residual > 1e-9:
            raise ValueError(f"relative residual {self.residual:.3e} exceeds 1e-9")
        spectrum = np.asarray(self.closed_loop_spectrum, dtype=complex)
        if not self.marginal and spectrum.size and spectrum.real.max() >= 0.0:
            raise ValueError("solution is not stabilizing")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "closed_loop_spectrum", spectrum)

    @property
    def max_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.X).max())


def solve_care_stabilizing(problem: CareProblem, newton_iterations: int = 20) -> CareSolution:
    """Unique symmetric stabilizing solution of a CareProblem.

    Raises
    ------
    NoStabilizingSolution
        If the Hamiltonian-structured matrix has eigenvalues within
        ``AXIS_MARGIN`` of the imaginary axis, or the candidate solution is
        not positive semidefinite.
    SubspaceSingular
        If the stable subspace basis has a singular leading block.
    """
    n = problem.n
    # The Y-form is the X-form of the transposed linear term.
    acl = problem.acl if problem.orientation == "x" else problem.acl.T
    quad, const = problem.quad, problem.const

    if not (acl.any() or quad.any() or const.any()):
        return CareSolution(
            X=np.zeros((n, n)),
            residual=0.0,
            closed_loop_spectrum=np.zeros(n, dtype=complex),
            marginal=True,
        )

    H = np.block([[acl, quad], [-const, -acl.T]])
    eigs = np.linalg.eigvals(H)
    axis_distance = np.abs(eigs.real) / (1.0 + np.abs(eigs))
    if axis_distance.min() < AXIS_MARGIN:
        raise NoStabilizingSolution(
            "Hamiltonian matrix has eigenvalues within "
            f"{AXIS_MARGIN:g} of the imaginary axis (closest: {axis_distance.min():.3e})"
        )

    T, Z, sdim = sla.schur(H, output="real", sort="lhp")
    if sdim != n:
        raise NoStabilizingSolution(
            f"stable invariant subspace has dimension {sdim}, expected {n}"
        )
    U1 = Z[:n, :n]
    U2 = Z[n:, :n]
    if np.linalg.cond(U1) > 1e12:
        raise SubspaceSingular(
            f"leading block of the stable subspace has condition number "
            f"{np.linalg.cond(U1):.3e}"
        )
    X = sla.solve(U1.T, U2.T).T
    X = 0.5 * (X + X.T)

    # Newton (Kleinman) polish: each step solves a Lyapunov equation in the
    # current closed-loop matrix.
    def rel_residual(Xc: np.ndarray) -> tuple[float, np.ndarray]:
        res = acl.T @ Xc + Xc @ acl + Xc @ quad @ Xc + const
        return np.linalg.norm(res) / (1.0 + np.linalg.norm(Xc)), res

    best_X = X
    best_rel, res = rel_residual(X)
    for _ in range(newton_iterations):
        if best_rel <= 1e-12:
            break
        acl_closed = acl + quad @ best_X
        try:
            step = sla.solve_continuous_lyapunov(acl_closed.T, -res)
        except np.linalg.LinAlgError:
            break
        candidate = 0.5 * ((best_X + step) + (best_X + step).T)
        rel, res_c = rel_residual(candidate)
        if rel >= best_rel:
            break
        best_X, best_rel, res = candidate, rel, res_c

    X = best_X
    min_eig = np.linalg.eigvalsh(X).min()
    if min_eig < -PSD_SLACK:
        raise NoStabilizingSolution(
            f"stabilizing solution is indefinite (min eigenvalue {min_eig:.3e})"
        )
    if best_rel > 1e-9:
        raise NoStabilizingSolution(
            f"Newton refinement stalled at relative residual {best_rel:.3e}"
        )
    spectrum = np.linalg.eigvals(problem.closed_loop_matrix(X))
    return CareSolution(X=X, residual=float(best_rel), closed_loop_spectrum=spectrum)


# ---------------------------------------------------------------------------
# The two synthesis equations
# ---------------------------------------------------------------------------


def _weighting_matrices(plant: OpenPlant, g: float) -> tuple[np.ndarray, np.ndarray]:
    E1 = plant.D12.T @ plant.D12
    E2 = (plant.D21 @ plant.D21.T) / g**2
    return E1, E2


def _uncertainty_terms(plant: OpenPlant, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """(theta E'E theta', E'E) for the eps-scaled quadratic and constant parts."""
    E = plant.uncertainty.E
    th = plant.theta.theta
    EtE = E.T @ E
    return th @ EtE @ th.T, EtE


def assemble_riccati_X(plant: OpenPlant, g: float, eps: float) -> CareProblem:
    """X-form problem of the first synthesis equation."""
    E1, _ = _weighting_matrices(plant, g)
    if np.linalg.eigvalsh(E1).min() <= 1e-10:
        raise AssumptionViolation(1, "D12'D12 is singular")
    E1_inv = np.linalg.inv(E1)
    theta_term, EtE = _uncertainty_terms(plant, eps)
    acl = plant.A - plant.B2 @ E1_inv @ plant.D12.T @ plant.C1
    quad = (
        4.0 * eps * theta_term
        + (plant.B1 @ plant.B1.T) / g**2
        - plant.B2 @ E1_inv @ plant.B2.T
    )
    const = (
        EtE / eps
        + plant.C1.T @ plant.C1
        - plant.C1.T @ plant.D12 @ E1_inv @ plant.D12.T @ plant.C1
    )
    return CareProblem(acl, 0.5 * (quad + quad.T), 0.5 * (const + const.T), "x")


def assemble_riccati_Y(plant: OpenPlant, g: float, eps: float) -> CareProblem:
    """Y-form problem of the second synthesis equation."""
    _, E2 = _weighting_matrices(plant, g)
    if np.linalg.eigvalsh(E2).min() <= 1e-10:
        raise AssumptionViolation(2, "D21 D21' / g^2 is singular")
    E2_inv = np.linalg.inv(E2)
    theta_term, EtE = _uncertainty_terms(plant, eps)
    acl = plant.A - (plant.B1 @ plant.D21.T @ E2_inv @ plant.C2) / g**2
    quad = EtE / eps + plant.C1.T @ plant.C1 - plant.C2.T @ E2_inv @ plant.C2
    const = (
        4.0 * eps * theta_term
        + (plant.B1 @ plant.B1.T) / g**2
        - (plant.B1 @ plant.D21.T @ E2_inv @ plant.D21 @ plant.B1.T) / g**4
    )
    return CareProblem(acl, 0.5 * (quad + quad.T), 0.5 * (const + const.T), "y")


def riccati_X(plant: OpenPlant, g: float, eps: float) -> CareSolution:
    """Stabilizing solution of the first synthesis equation."""
    return solve_care_stabilizing(assemble_riccati_X(plant, g, eps))


def riccati_Y(plant: OpenPlant, g: float, eps: float) -> CareSolution:
    """Stabilizing solution of the second synthesis equation."""
    return solve_care_stabilizing(assemble_riccati_Y(plant, g, eps))


# ---------------------------------------------------------------------------
# Feasibility assumptions
# ---------------------------------------------------------------------------


def _has_imaginary_axis_zero(a_hat: np.ndarray, c_perp: np.ndarray) -> bool:
    """Whether the pencil [[a_hat - sI], [c_perp]] loses column rank on the axis.

    After eliminating the (full-column-rank) feedthrough, the rank condition
    on the original tall pencil reduces to: no eigenvalue s of ``a_hat`` near
    the imaginary axis may be unobservable through ``c_perp``.  This is an
    exact finite test; no frequency grid is involved.
    """
    n = a_hat.shape[0]
    eigs = np.linalg.eigvals(a_hat)
    stack_scale = 1.0 + np.linalg.norm(np.vstack([a_hat, c_perp]))
    for lam in eigs:
        if abs(lam.real) >= AXIS_MARGIN * (1.0 + abs(lam)):
            continue
        pencil = np.vstack([a_hat - lam * np.eye(n), c_perp])
        smin = np.linalg.svd(pencil, compute_uv=False)[-1]
        if smin < AXIS_MARGIN * stack_scale:
            return True
    return False


def _rank_condition_x(plant: OpenPlant, eps: float, E1_inv: np.ndarray) -> bool:
    # Column-rank condition on [[A - iwI, B2], [E/sqrt(eps), 0], [C1, D12]].
    E = plant.uncertainty.E
    a_hat = plant.A - plant.B2 @ E1_inv @ plant.D12.T @ plant.C1
    projector = plant.D12 @ E1_inv @ plant.D12.T
    c_perp = np.vstack(
        [E / np.sqrt(eps), plant.C1 - projector @ plant.C1]
    )
    return not _has_imaginary_axis_zero(a_hat, c_perp)


def _rank_condition_y(plant: OpenPlant, g: float, eps: float, E2_inv: np.ndarray) -> bool:
    # Row-rank condition on [[A - iwI, 2 sqrt(eps) theta E', B1/g], [C2, 0, D21/g]],
    # tested on the transposed (dual) pencil.
    E = plant.uncertainty.E
    th = plant.theta.theta
    a_hat = (plant.A - (plant.B1 @ plant.D21.T @ E2_inv @ plant.C2) / g**2).T
    b_row = np.vstack([2.0 * np.sqrt(eps) * E @ th.T, plant.B1.T / g])
    d_row = np.vstack([np.zeros((plant.m, plant.n_y)), plant.D21.T / g])
    c_perp = b_row - d_row @ E2_inv @ d_row.T @ b_row
    return not _has_imaginary_axis_zero(a_hat, c_perp)


@dataclass(frozen=True)
class AssumptionReport:
    """Diagnostics for the feasibility assumptions at one (g, eps) point."""

    E1: np.ndarray
    E2: np.ndarray
    E1_min_eig: float
    E2_min_eig: float
    rank_cond_3_ok: bool
    rank_cond_4_ok: bool
    stab_1_ok: bool
    stab_2_ok: bool
    rho_XY: float

    def __post_init__(self):
        if self.rho_XY < 0:
            raise ValueError("spectral radius cannot be negative")

    @property
    def e1_ok(self) -> bool:
        return self.E1_min_eig > 1e-10

    @property
    def e2_ok(self) -> bool:
        return self.E2_min_eig > 1e-10

    @property
    def rho_ok(self) -> bool:
        return self.rho_XY < 1.0 - SPECTRAL_RADIUS_MARGIN

    @property
    def all_ok(self) -> bool:
        return (
            self.e1_ok
            and self.e2_ok
            and self.rank_cond_3_ok
            and self.rank_cond_4_ok
            and self.stab_1_ok
            and self.stab_2_ok
            and self.rho_ok
        )

    def to_dict(self) -> dict:
        return {
            "E1_min_eig": self.E1_min_eig,
            "E2_min_eig": self.E2_min_eig,
            "rank_cond_3_ok": self.rank_cond_3_ok,
            "rank_cond_4_ok": self.rank_cond_4_ok,
            "stab_1_ok": self.stab_1_ok,
            "stab_2_ok": self.stab_2_ok,
            "rho_XY": self.rho_XY,
            "all_ok": self.all_ok,
        }


def check_assumptions(
    plant: OpenPlant, g: float, eps: float, X: CareSolution, Y: CareSolution
) -> AssumptionReport:
    """Evaluate every feasibility assumption; verdicts live in the report.

    The report never raises: singular weighting matrices and unstable
    closed-loop matrices show up as failed flags so that an epsilon search
    can record them.
    """
    E1, E2 = _weighting_matrices(plant, g)
    e1_min = float(np.linalg.eigvalsh(E1).min())
    e2_min = float(np.linalg.eigvalsh(E2).min())

    rank3 = rank4 = False
    stab1 = stab2 = False
    if e1_min > 1e-10:
        E1_inv = np.linalg.inv(E1)
        rank3 = _rank_condition_x(plant, eps, E1_inv)
        prob_x = assemble_riccati_X(plant, g, eps)
        stab1 = bool(
            np.linalg.eigvals(prob_x.closed_loop_matrix(X.X)).real.max()
            < -STABILITY_MARGIN
        )
    if e2_min > 1e-10:
        E2_inv = np.linalg.inv(E2)
        rank4 = _rank_condition_y(plant, g, eps, E2_inv)
        prob_y = assemble_riccati_Y(plant, g, eps)
        stab2 = bool(
            np.linalg.eigvals(prob_y.closed_loop_matrix(Y.X)).real.max()
            < -STABILITY_MARGIN
        )

    rho = float(np.abs(np.linalg.eigvals(X.X @ Y.X)).max()) if X.X.size else 0.0
    return AssumptionReport(
        E1=E1,
        E2=E2,
        E1_min_eig=e1_min,
        E2_min_eig=e2_min,
        rank_cond_3_ok=rank3,
        rank_cond_4_ok=rank4,
        stab_1_ok=stab1,
        stab_2_ok=stab2,
        rho_XY=rho,
    )
