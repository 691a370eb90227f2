"""Completion of controller matrices to a physically realizable quantum system.

A dynamic output-feedback controller computed from Riccati solutions is just
an (A_K, B_K, C_K) triple; to exist as a quantum device it must satisfy the
same commutation-preservation conditions as any open quantum system.  The
completion adds quantum noise channels v_K with matrices B_K0 and B_K1: the
output-noise block is pinned by the second realizability condition, and the
remaining channels absorb the commutation defect through a factorization of
an antisymmetric matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import qmodel
from .qmodel import (
    CommutationStructure,
    DimensionError,
    ModelFormatError,
    OpenPlant,
    StateSpace,
    canonical_noise,
    canonical_theta,
    dump_json,
    matrix_from_json,
    matrix_to_json,
)

__all__ = [
    "CoherentController",
    "complete_realization",
    "controller_from_dict",
    "controller_to_dict",
    "is_canonical_ito",
    "load_controller",
    "measurement_ito_matrix",
    "realization_defect",
    "save_controller",
    "skew_factor",
]


@dataclass(frozen=True)
class CoherentController:
    """Quantum controller with inputs [v_K; y] and output u.

        d xi = A_K xi dt + B_K1 dv_K + B_K dy
        d u  = C_K xi dt + B_K0 dv_K

    Constructing one asserts the realizability residuals, so an instance is a
    certificate that the controller is a genuine quantum system.
    """

    A_K: np.ndarray
    B_K1: np.ndarray
    B_K: np.ndarray
    C_K: np.ndarray
    B_K0: np.ndarray
    theta_K: CommutationStructure

    def __post_init__(self):
        for name in ("A_K", "B_K1", "B_K", "C_K", "B_K0"):
            object.__setattr__(
                self, name, np.asarray(getattr(self, name), dtype=float)
            )
        n_k = self.A_K.shape[0]
        if self.A_K.shape != (n_k, n_k):
            raise DimensionError(f"A_K must be square, got {self.A_K.shape}")
        if self.theta_K.n != n_k:
            raise DimensionError("theta_K dimension must equal the controller order")
        if self.B_K1.shape[0] != n_k or self.B_K.shape[0] != n_k:
            raise DimensionError("B_K1 and B_K must have one row per controller state")
        if self.C_K.shape[1] != n_k:
            raise DimensionError("C_K must have one column per controller state")
        if self.B_K0.shape != (self.n_u, self.n_vK):
            raise DimensionError(
                f"B_K0 has shape {self.B_K0.shape}, expected {(self.n_u, self.n_vK)}"
            )
        for value, name in (
            (n_k, "n_K"),
            (self.n_vK, "n_vK"),
            (self.n_u, "n_u"),
            (self.n_y, "n_y"),
        ):
            if value <= 0 or value % 2 != 0:
                raise DimensionError(f"{name} must be a positive even integer, got {value}")
        result = qmodel.is_physically_realizable(self.as_state_space(), self.theta_K)
        if not result.verdict:
            raise DimensionError(
                "controller is not physically realizable: residuals "
                f"({result.residual_commutation:.3e}, {result.residual_output:.3e})"
            )

    @property
    def n_K(self) -> int:
        return self.A_K.shape[0]

    @property
    def n_vK(self) -> int:
        return self.B_K1.shape[1]

    @property
    def n_u(self) -> int:
        return self.C_K.shape[0]

    @property
    def n_y(self) -> int:
        return self.B_K.shape[1]

    def as_state_space(self) -> StateSpace:
        """The controller as one system driven by the stacked input [v_K; y]."""
        return StateSpace(
            self.A_K,
            np.hstack([self.B_K1, self.B_K]),
            self.C_K,
            np.hstack([self.B_K0, np.zeros((self.n_u, self.n_y))]),
        )


def skew_factor(Xi: np.ndarray) -> np.ndarray:
    """Factor an antisymmetric matrix as R diag(J, ..., J) R'.

    The real Schur form of an antisymmetric matrix is block diagonal with
    2x2 blocks c*J; each block with c != 0 contributes two columns, scaled so
    the 2x2 factor has determinant c.  Zero blocks contribute nothing, so R
    has exactly 2*rank(Xi)/2 columns.
    """
    Xi = np.asarray(Xi, dtype=float)
    if Xi.ndim != 2 or Xi.shape[0] != Xi.shape[1]:
        raise DimensionError(f"Xi must be square, got {Xi.shape}")
    scale = 1.0 + np.linalg.norm(Xi)
    if np.linalg.norm(Xi + Xi.T) > 1e-10 * scale:
        raise DimensionError("Xi must be antisymmetric")
    n = Xi.shape[0]
    if n == 0 or not Xi.any():
        return np.zeros((n, 0))
    T, Q = sla.schur(0.5 * (Xi - Xi.T), output="real")
    tol = 1e-10 * scale
    blocks = []
    i = 0
    while i < n - 1:
        c = 0.5 * (T[i, i + 1] - T[i + 1, i])
        if abs(c) > tol:
            root = np.sqrt(abs(c))
            blocks.append(Q[:, i : i + 2] @ np.diag([root, np.sign(c) * root]))
            i += 2
        else:
            i += 1
    if not blocks:
        return np.zeros((n, 0))
    return np.hstack(blocks)


def realization_defect(
    A_K: np.ndarray,
    B_K: np.ndarray,
    C_K: np.ndarray,
    theta_K: CommutationStructure | None = None,
    theta_y: CommutationStructure | None = None,
    theta_u: CommutationStructure | None = None,
) -> np.ndarray:
    """Antisymmetric commutation defect the extra noise channels must absorb.

    With the output-noise block pinned to theta_K C_K' theta_u, this is the
    negated left-hand side of the commutation-preservation condition.
    """
    A_K = np.asarray(A_K, dtype=float)
    B_K = np.asarray(B_K, dtype=float)
    C_K = np.asarray(C_K, dtype=float)
    n_k, n_u, n_y = A_K.shape[0], C_K.shape[0], B_K.shape[1]
    th_k = (theta_K or canonical_theta(n_k)).theta
    th_u = (theta_u or canonical_theta(n_u)).theta
    th_y = (theta_y or canonical_theta(n_y)).theta
    forced = th_k @ C_K.T @ th_u
    return -(
        A_K @ th_k + th_k @ A_K.T + B_K @ th_y @ B_K.T + forced @ th_u @ forced.T
    )


def complete_realization(
    A_K: np.ndarray,
    B_K: np.ndarray,
    C_K: np.ndarray,
    theta_K: CommutationStructure | None = None,
    theta_y: CommutationStructure | None = None,
    theta_u: CommutationStructure | None = None,
) -> CoherentController:
    """Extend (A_K, B_K, C_K) with noise channels into a realizable controller.

    The first n_u quadratures of v_K feed the controller output through
    B_K0 = [I 0]; that pins the matching block of B_K1 exactly, and the
    remaining columns come from factoring the commutation defect.  Only the
    realizability equations are contractual; the factorization itself is one
    of many valid completions.

    Raises
    ------
    DimensionError
        If theta_K is not canonical (the completion construction assumes a
        canonical controller commutation matrix), or dimensions are odd.
    """
    A_K = np.asarray(A_K, dtype=float)
    B_K = np.asarray(B_K, dtype=float)
    C_K = np.asarray(C_K, dtype=float)
    n_k, n_u, n_y = A_K.shape[0], C_K.shape[0], B_K.shape[1]
    theta_K = theta_K or canonical_theta(n_k)
    theta_u = theta_u or canonical_theta(n_u)
    theta_y = theta_y or canonical_theta(n_y)
    for name, th in (("theta_K", theta_K), ("theta_y", theta_y), ("theta_u", theta_u)):
        if not th.canonical:
            raise DimensionError(f"{name} must be canonical for the completion")
    if theta_K.n != n_k or theta_u.n != n_u or theta_y.n != n_y:
        raise DimensionError("commutation matrices do not match the triple's dimensions")

    forced = theta_K.theta @ C_K.T @ theta_u.theta
    defect = realization_defect(A_K, B_K, C_K, theta_K, theta_y, theta_u)
    extra = skew_factor(defect)
    B_K1 = np.hstack([forced, extra])
    if B_K1.shape[1] % 2 != 0:
        B_K1 = np.hstack([B_K1, np.zeros((n_k, 1))])
    B_K0 = np.hstack([np.eye(n_u), np.zeros((n_u, B_K1.shape[1] - n_u))])
    return CoherentController(
        A_K=A_K, B_K1=B_K1, B_K=B_K, C_K=C_K, B_K0=B_K0, theta_K=theta_K
    )


def is_canonical_ito(F: np.ndarray) -> bool:
    """Whether F equals diag(I + iJ, ..., I + iJ) to within 1e-10."""
    F = np.asarray(F, dtype=complex)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise DimensionError(f"F must be square, got {F.shape}")
    scale = 1.0 + np.abs(F).max()
    if np.abs(F - F.conj().T).max() > 1e-9 * scale:
        raise DimensionError("F must be Hermitian")
    n = F.shape[0]
    if n % 2 != 0:
        return False
    template = canonical_noise(n).F
    return bool(np.abs(F - template).max() <= 1e-10)


def measurement_ito_matrix(
    plant: OpenPlant,
    F_v: np.ndarray | None = None,
    F_w: np.ndarray | None = None,
) -> np.ndarray:
    """Ito matrix D20 F_v D20' + D21 F_w D21' of the measurement output.

    Vacuum (canonical) noise statistics are assumed for channels without an
    explicit Ito matrix; feed the result to ``is_canonical_ito`` to verify
    the hypothesis under which the completion is available.
    """
    F_v = canonical_noise(plant.n_v).F if F_v is None else np.asarray(F_v, dtype=complex)
    F_w = canonical_noise(plant.n_w).F if F_w is None else np.asarray(F_w, dtype=complex)
    return plant.D20 @ F_v @ plant.D20.T + plant.D21 @ F_w @ plant.D21.T


# ---------------------------------------------------------------------------
# Controller JSON schema
# ---------------------------------------------------------------------------

_CTRL_KEYS = ("A_K", "B_K1", "B_K", "C_K", "B_K0")


def controller_to_dict(ctrl: CoherentController) -> dict:
    out = {key: matrix_to_json(getattr(ctrl, key)) for key in _CTRL_KEYS}
    out["theta_K"] = (
        "canonical" if ctrl.theta_K.canonical else matrix_to_json(ctrl.theta_K.theta)
    )
    out["dims"] = {
        "n_K": ctrl.n_K,
        "n_vK": ctrl.n_vK,
        "n_u": ctrl.n_u,
        "n_y": ctrl.n_y,
    }
    return out


def controller_from_dict(doc: dict) -> CoherentController:
    if not isinstance(doc, dict):
        raise ModelFormatError("controller: expected a JSON object")
    mats = {}
    for key in _CTRL_KEYS:
        if key not in doc:
            raise ModelFormatError(f"controller.{key}: missing")
        mats[key] = matrix_from_json(doc[key], f"controller.{key}")
        if np.iscomplexobj(mats[key]):
            raise ModelFormatError(f"controller.{key}: must be real")
    theta_raw = doc.get("theta_K", "canonical")
    if theta_raw == "canonical":
        theta = canonical_theta(mats["A_K"].shape[0])
    else:
        theta = qmodel.commutation_from_matrix(
            matrix_from_json(theta_raw, "controller.theta_K")
        )
    try:
        return CoherentController(theta_K=theta, **mats)
    except DimensionError as exc:
        raise ModelFormatError(f"controller: {exc}") from exc


def load_controller(path) -> CoherentController:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(
                f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}"
            ) from exc
    return controller_from_dict(raw)


def save_controller(ctrl: CoherentController, path, manifest: dict | None = None) -> None:
    doc = controller_to_dict(ctrl)
    if manifest is not None:
        doc["manifest"] = manifest
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_json(doc))
