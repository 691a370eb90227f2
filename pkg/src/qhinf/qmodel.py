"""Quadrature-form models of linear quantum stochastic systems.

State-space data lives in real quadrature coordinates: states, noises and
outputs come in (position, momentum)-like pairs, so every channel count is
even.  The commutation structure of a system is encoded by a real
antisymmetric matrix ``theta`` with canonical form ``diag(J, ..., J)``,
``J = [[0, 1], [-1, 0]]``.

The module provides the structural constant builders (``canonical_theta``,
``structure_matrices``), construction of a state-space model from a
coupling/Hamiltonian description (``slh_to_state_space``), the physical
realizability test, the Hamiltonian-perturbation map ``apply_uncertainty``,
and the JSON model-file schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

__all__ = [
    "J2",
    "CommutationStructure",
    "ConsistencyError",
    "DimensionError",
    "ModelDocument",
    "ModelFormatError",
    "NoiseModel",
    "OpenPlant",
    "RealizabilityResult",
    "SLHModel",
    "StateSpace",
    "UncertaintyModel",
    "UncertaintySample",
    "apply_uncertainty",
    "canonical_noise",
    "canonical_theta",
    "commutation_from_matrix",
    "dump_json",
    "is_physically_realizable",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "save_model",
    "scalar_uncertainty",
    "slh_to_state_space",
    "structure_matrices",
]

#: The 2x2 skew-symmetric generator of a single quadrature pair.
J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


class DimensionError(ValueError):
    """A matrix has a shape incompatible with its role."""


class ModelFormatError(ValueError):
    """A model/controller JSON document violates the file schema."""


class ConsistencyError(ArithmeticError):
    """An internally computed quantity violates an exact structural identity."""


def _as_matrix(value, name: str, *, allow_complex: bool = False) -> np.ndarray:
    arr = np.asarray(value)
    if allow_complex and np.iscomplexobj(arr):
        arr = arr.astype(complex)
    elif np.iscomplexobj(arr):
        raise DimensionError(f"{name} must be real, got complex entries")
    else:
        arr = arr.astype(float)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    return arr


def _require_even(value: int, name: str) -> int:
    if value <= 0 or value % 2 != 0:
        raise DimensionError(f"{name} must be a positive even integer, got {value}")
    return value


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CommutationStructure:
    """Antisymmetric matrix encoding [x_j, x_k] = 2i * theta_jk.

    ``canonical`` is set when ``theta`` is exactly block-diagonal in ``J2``,
    in which case ``theta @ theta = -I``.
    """

    theta: np.ndarray
    canonical: bool

    def __post_init__(self):
        theta = _as_matrix(self.theta, "theta")
        if theta.shape[0] != theta.shape[1]:
            raise DimensionError(f"theta must be square, got {theta.shape}")
        if not np.array_equal(theta, -theta.T):
            raise DimensionError("theta must be exactly antisymmetric")
        if self.canonical:
            n = _require_even(theta.shape[0], "canonical theta dimension")
            template = sla.block_diag(*([J2] * (n // 2)))
            if not np.array_equal(theta, template):
                raise DimensionError("canonical flag set but theta is not diag(J, ..., J)")
        object.__setattr__(self, "theta", theta)

    @property
    def n(self) -> int:
        return self.theta.shape[0]


def canonical_theta(n: int) -> CommutationStructure:
    """Canonical commutation matrix diag(J, ..., J) with n/2 blocks.

    Raises
    ------
    DimensionError
        If ``n`` is odd or not positive.
    """
    n = _require_even(int(n), "n")
    return CommutationStructure(sla.block_diag(*([J2] * (n // 2))), canonical=True)


def commutation_from_matrix(theta) -> CommutationStructure:
    """Wrap an explicit antisymmetric matrix, detecting the canonical case."""
    theta = _as_matrix(theta, "theta")
    n = theta.shape[0]
    canonical = (
        n > 0
        and n % 2 == 0
        and np.array_equal(theta, sla.block_diag(*([J2] * (n // 2))))
    )
    return CommutationStructure(theta, canonical=canonical)


@dataclass(frozen=True)
class StateSpace:
    """Real quadrature state-space model dx = A x dt + B dw, dy = C x dt + D dw."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        D = _as_matrix(self.D, "D")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionError(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise DimensionError(f"C has {C.shape[1]} columns, expected {n}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionError(
                f"D has shape {D.shape}, expected {(C.shape[0], B.shape[1])}"
            )
        _require_even(n, "state dimension n")
        _require_even(B.shape[1], "noise dimension n_w")
        _require_even(C.shape[0], "output dimension n_y")
        for name, arr in (("A", A), ("B", B), ("C", C), ("D", D)):
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_w(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class NoiseModel:
    """Hermitian Ito matrix F of a vector of quantum Wiener processes.

    ``S`` and ``T`` are the symmetric and antisymmetric (commutation) parts
    of the plain-transpose splitting F = S + T.
    """

    F: np.ndarray

    def __post_init__(self):
        F = _as_matrix(self.F, "F", allow_complex=True).astype(complex)
        if F.shape[0] != F.shape[1]:
            raise DimensionError(f"F must be square, got {F.shape}")
        scale = 1.0 + np.linalg.norm(F)
        if np.linalg.norm(F - F.conj().T) > 1e-12 * scale:
            raise DimensionError("F must be Hermitian")
        if np.linalg.eigvalsh(0.5 * (F + F.conj().T)).min() < -1e-10 * scale:
            raise DimensionError("F must be non-negative definite")
        object.__setattr__(self, "F", F)

    @property
    def S(self) -> np.ndarray:
        return 0.5 * (self.F + self.F.T)

    @property
    def T(self) -> np.ndarray:
        return 0.5 * (self.F - self.F.T)


def canonical_noise(n_w: int) -> NoiseModel:
    """Canonical vacuum Ito matrix diag(I + iJ, ..., I + iJ)."""
    n_w = _require_even(int(n_w), "n_w")
    block = np.eye(2) + 1j * J2
    return NoiseModel(sla.block_diag(*([block] * (n_w // 2))))


@dataclass(frozen=True)
class SLHModel:
    """Coupling/Hamiltonian description: H = x'Rx / 2 and L = Lambda x."""

    R: np.ndarray
    Lambda: np.ndarray
    n_y: int

    def __post_init__(self):
        R = _as_matrix(self.R, "R")
        Lambda = _as_matrix(self.Lambda, "Lambda", allow_complex=True).astype(complex)
        n = R.shape[0]
        if R.shape != (n, n):
            raise DimensionError(f"R must be square, got {R.shape}")
        if np.linalg.norm(R - R.T) > 1e-12 * (1.0 + np.linalg.norm(R)):
            raise DimensionError("R must be symmetric")
        _require_even(n, "state dimension n")
        if Lambda.shape[1] != n:
            raise DimensionError(f"Lambda has {Lambda.shape[1]} columns, expected {n}")
        n_y = _require_even(int(self.n_y), "n_y")
        if n_y > 2 * Lambda.shape[0]:
            raise DimensionError(f"n_y={n_y} exceeds n_w={2 * Lambda.shape[0]}")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "Lambda", Lambda)
        object.__setattr__(self, "n_y", n_y)

    @property
    def n(self) -> int:
        return self.R.shape[0]

    @property
    def N_w(self) -> int:
        return self.Lambda.shape[0]

    @property
    def n_w(self) -> int:
        return 2 * self.Lambda.shape[0]


@dataclass(frozen=True)
class UncertaintyModel:
    """Shape matrix E of the quadratic Hamiltonian perturbation x'E'(Delta)Ex / 2."""

    E: np.ndarray

    def __post_init__(self):
        E = _as_matrix(self.E, "E")
        if E.shape[0] < 1:
            raise DimensionError("uncertainty dimension m must be at least 1")
        object.__setattr__(self, "E", E)

    @property
    def m(self) -> int:
        return self.E.shape[0]

    @property
    def n(self) -> int:
        return self.E.shape[1]


@dataclass(frozen=True)
class UncertaintySample:
    """One admissible perturbation: Delta symmetric with Delta^2 <= I."""

    Delta: np.ndarray

    def __post_init__(self):
        Delta = _as_matrix(self.Delta, "Delta")
        if Delta.shape[0] != Delta.shape[1]:
            raise DimensionError(f"Delta must be square, got {Delta.shape}")
        if np.linalg.norm(Delta - Delta.T) > 1e-12 * np.linalg.norm(Delta):
            raise DimensionError("Delta must be symmetric")
        Delta = 0.5 * (Delta + Delta.T)
        contraction = np.linalg.eigvalsh(Delta @ Delta - np.eye(Delta.shape[0])).max()
        if contraction > 1e-9:
            raise DimensionError(
                f"Delta^2 <= I violated: max eig(Delta^2 - I) = {contraction:.3e}"
            )
        object.__setattr__(self, "Delta", Delta)

    @property
    def m(self) -> int:
        return self.Delta.shape[0]


def scalar_uncertainty(delta: float, m: int) -> UncertaintySample:
    """Scalar-family sample Delta = delta * I_m."""
    return UncertaintySample(float(delta) * np.eye(int(m)))


@dataclass(frozen=True)
class OpenPlant:
    """Nine-matrix uncertain plant with three input channels and two outputs.

    Inputs are split into extra quantum noise v, disturbance w and control u;
    outputs into performance z and measurement y:

        dx = (A + 2 theta E' Delta E) x dt + B0 dv + B1 dw + B2 du
        dz = C1 x dt + D12 du
        dy = C2 x dt + D20 dv + D21 dw
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
    uncertainty: UncertaintyModel

    def __post_init__(self):
        mats = {}
        for name in ("A", "B0", "B1", "B2", "C1", "D12", "C2", "D20", "D21"):
            mats[name] = _as_matrix(getattr(self, name), name)
            object.__setattr__(self, name, mats[name])
        n = mats["A"].shape[0]
        if mats["A"].shape != (n, n):
            raise DimensionError(f"A must be square, got {mats['A'].shape}")
        for name in ("B0", "B1", "B2"):
            if mats[name].shape[0] != n:
                raise DimensionError(f"{name} has {mats[name].shape[0]} rows, expected {n}")
        for name in ("C1", "C2"):
            if mats[name].shape[1] != n:
                raise DimensionError(
                    f"{name} has {mats[name].shape[1]} columns, expected {n}"
                )
        if mats["D12"].shape != (mats["C1"].shape[0], mats["B2"].shape[1]):
            raise DimensionError(
                f"D12 has shape {mats['D12'].shape}, expected "
                f"{(mats['C1'].shape[0], mats['B2'].shape[1])}"
            )
        if mats["D20"].shape != (mats["C2"].shape[0], mats["B0"].shape[1]):
            raise DimensionError(
                f"D20 has shape {mats['D20'].shape}, expected "
                f"{(mats['C2'].shape[0], mats['B0'].shape[1])}"
            )
        if mats["D21"].shape != (mats["C2"].shape[0], mats["B1"].shape[1]):
            raise DimensionError(
                f"D21 has shape {mats['D21'].shape}, expected "
                f"{(mats['C2'].shape[0], mats['B1'].shape[1])}"
            )
        if self.theta.n != n:
            raise DimensionError(f"theta dimension {self.theta.n} != state dimension {n}")
        if self.uncertainty.n != n:
            raise DimensionError(
                f"E has {self.uncertainty.n} columns, expected state dimension {n}"
            )

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_v(self) -> int:
        return self.B0.shape[1]

    @property
    def n_w(self) -> int:
        return self.B1.shape[1]

    @property
    def n_u(self) -> int:
        return self.B2.shape[1]

    @property
    def n_z(self) -> int:
        return self.C1.shape[0]

    @property
    def n_y(self) -> int:
        return self.C2.shape[0]

    @property
    def m(self) -> int:
        return self.uncertainty.m

    def measured_system(self) -> StateSpace:
        """The (A, [B0 B1 B2], C2, [D20 D21 0]) system seen by the y output."""
        B = np.hstack([self.B0, self.B1, self.B2])
        D = np.hstack([self.D20, self.D21, np.zeros((self.n_y, self.n_u))])
        return StateSpace(self.A, B, self.C2, D)


# ---------------------------------------------------------------------------
# Structural constants and model construction
# ---------------------------------------------------------------------------

#: Quadrature-to-ladder conversion block, M = [[1, i], [1, -i]] / 2.
M_BLOCK = 0.5 * np.array([[1.0, 1j], [1.0, -1j]])


def structure_matrices(N_w: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Interleaving permutation P, conversion block M and Gamma = P diag(M).

    ``P.T`` maps the channel-major ordering (a_1..a_m, a_{m+1}..a_{2m}) to the
    pairwise-interleaved ordering (a_1, a_{m+1}, a_2, a_{m+2}, ...).
    """
    N_w = int(N_w)
    if N_w < 1:
        raise DimensionError(f"N_w must be at least 1, got {N_w}")
    PT = np.zeros((2 * N_w, 2 * N_w))
    for j in range(N_w):
        PT[2 * j, j] = 1.0
        PT[2 * j + 1, N_w + j] = 1.0
    P = PT.T
    Gamma = P @ sla.block_diag(*([M_BLOCK] * N_w))
    return P, M_BLOCK.copy(), Gamma


def slh_to_state_space(model: SLHModel, theta: CommutationStructure) -> StateSpace:
    """Build the quadrature state-space model of a coupling/Hamiltonian pair.

    The B and C matrices mix the imaginary unit with the commutation matrix,
    so they are assembled in complex arithmetic and must come out real; an
    imaginary residue above 1e-10 (relative) aborts instead of being silently
    truncated.
    """
    if theta.n != model.n:
        raise DimensionError(f"theta dimension {theta.n} != model dimension {model.n}")
    R, Lam = model.R, model.Lambda
    N_w, N_y = model.N_w, model.n_y // 2
    th = theta.theta

    A = 2.0 * th @ (R + np.imag(Lam.conj().T @ Lam))

    _, _, Gamma = structure_matrices(N_w)
    B = 2j * th @ np.hstack([-Lam.conj().T, Lam.T]) @ Gamma

    P_y, _, _ = structure_matrices(N_y)
    Sigma = np.hstack([np.eye(N_y), np.zeros((N_y, N_w - N_y))])
    selector = sla.block_diag(Sigma, Sigma)
    C = P_y.T @ selector @ np.vstack([Lam + Lam.conj(), -1j * (Lam - Lam.conj())])

    P_w, _, _ = structure_matrices(N_w)
    D = P_y.T @ selector @ P_w

    for name, mat in (("B", B), ("C", C)):
        residue = np.abs(mat.imag).max() if np.iscomplexobj(mat) else 0.0
        if residue > 1e-10 * (1.0 + np.abs(mat.real).max()):
            raise ConsistencyError(
                f"{name} has imaginary residue {residue:.3e}; "
                "coupling and commutation data are inconsistent"
            )
    return StateSpace(A, B.real, C.real, D)


class RealizabilityResult(NamedTuple):
    verdict: bool
    residual_commutation: float
    residual_output: float


def is_physically_realizable(
    ss: StateSpace, theta: CommutationStructure, tol: float | None = None
) -> RealizabilityResult:
    """Test the two algebraic conditions for a genuine open quantum system.

    residual_commutation = ||A theta + theta A' + B theta_w B'||_F and
    residual_output = ||B D' - theta C' theta_y||_F must both vanish; the
    verdict uses the scale-aware gate ``tol = 1e-8 * (1 + ||A||_F)``.
    """
    if theta.n != ss.n:
        raise DimensionError(f"theta dimension {theta.n} != state dimension {ss.n}")
    th = theta.theta
    th_w = canonical_theta(ss.n_w).theta
    th_y = canonical_theta(ss.n_y).theta
    r1 = np.linalg.norm(ss.A @ th + th @ ss.A.T + ss.B @ th_w @ ss.B.T)
    r2 = np.linalg.norm(ss.B @ ss.D.T - th @ ss.C.T @ th_y)
    if tol is None:
        tol = 1e-8 * (1.0 + np.linalg.norm(ss.A))
    return RealizabilityResult(bool(r1 < tol and r2 < tol), float(r1), float(r2))


def apply_uncertainty(plant: OpenPlant, sample: UncertaintySample) -> np.ndarray:
    """Perturbed state matrix A + 2 theta E' Delta E."""
    if sample.m != plant.m:
        raise DimensionError(
            f"Delta dimension {sample.m} != uncertainty dimension {plant.m}"
        )
    E = plant.uncertainty.E
    return plant.A + 2.0 * plant.theta.theta @ E.T @ sample.Delta @ E


# ---------------------------------------------------------------------------
# JSON model-file schema
# ---------------------------------------------------------------------------

_PLANT_KEYS = ("A", "B0", "B1", "B2", "C1", "D12", "C2", "D20", "D21")


@dataclass(frozen=True)
class ModelDocument:
    """Parsed model file: a nine-matrix plant and/or a coupling description."""

    plant: OpenPlant | None = None
    slh: SLHModel | None = None
    theta: CommutationStructure | None = None
    extra: dict = field(default_factory=dict)

    def realizable_system(self) -> tuple[StateSpace, CommutationStructure]:
        """The system whose physical realizability the document claims."""
        if self.plant is not None:
            return self.plant.measured_system(), self.plant.theta
        if self.slh is not None:
            theta = self.theta or canonical_theta(self.slh.n)
            return slh_to_state_space(self.slh, theta), theta
        raise ModelFormatError("model defines neither 'plant' nor 'slh'")


def _format_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    value = float(x)
    if value != value or value in (float("inf"), float("-inf")):
        # JSON has no literal for these; keep them readable and re-parseable.
        return f'"{value}"'
    text = format(value, ".17g")
    if not any(c in text for c in ".eE"):
        # Keep the token a float so parsing preserves it (notably -0.0).
        text += ".0"
    return text


def _dump_value(obj, indent: int, out: list) -> None:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (key, value) in enumerate(obj.items()):
            out.append(f'{pad}  {json.dumps(str(key))}: ')
            _dump_value(value, indent + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        items = list(obj)
        if not items:
            out.append("[]")
            return
        # Numeric rows stay on one line; nested structures get one line each.
        flat = all(isinstance(v, (bool, int, float, np.integer, np.floating)) for v in items)
        if flat:
            out.append("[" + ", ".join(_format_number(v) for v in items) + "]")
            return
        out.append("[\n")
        for i, value in enumerate(items):
            out.append(pad + "  ")
            _dump_value(value, indent + 1, out)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(pad + "]")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif obj is None:
        out.append("null")
    else:
        out.append(_format_number(obj))


def dump_json(obj, compact: bool = False) -> str:
    """Deterministic JSON text with numbers at 17 significant digits."""
    if compact:
        return _dump_compact(obj)
    out: list = []
    _dump_value(obj, 0, out)
    out.append("\n")
    return "".join(out)


def _dump_compact(obj) -> str:
    if isinstance(obj, dict):
        body = ", ".join(
            f"{json.dumps(str(k))}: {_dump_compact(v)}" for k, v in obj.items()
        )
        return "{" + body + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_dump_compact(v) for v in obj) + "]"
    if isinstance(obj, str):
        return json.dumps(obj)
    if obj is None:
        return "null"
    return _format_number(obj)


def matrix_to_json(mat: np.ndarray) -> list:
    """Matrix as a list of rows; complex entries become [re, im] pairs."""
    mat = np.asarray(mat)
    if np.iscomplexobj(mat):
        return [[[float(v.real), float(v.imag)] for v in row] for row in mat]
    return [[float(v) for v in row] for row in mat]


def matrix_from_json(rows, where: str) -> np.ndarray:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ModelFormatError(f"{where}: expected a non-empty list of rows")
    width = len(rows[0])
    entries = []
    is_complex = False
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ModelFormatError(
                f"{where}: row {i} has {len(row)} entries, expected {width}"
            )
        parsed = []
        for j, cell in enumerate(row):
            if isinstance(cell, (int, float)) and not isinstance(cell, bool):
                parsed.append(complex(cell))
            elif (
                isinstance(cell, list)
                and len(cell) == 2
                and all(isinstance(p, (int, float)) and not isinstance(p, bool) for p in cell)
            ):
                parsed.append(complex(cell[0], cell[1]))
                is_complex = True
            else:
                raise ModelFormatError(
                    f"{where}: entry ({i},{j}) must be a number or [re, im] pair"
                )
        entries.append(parsed)
    arr = np.array(entries, dtype=complex)
    return arr if is_complex else arr.real


def _theta_from_json(value, n_hint: int | None) -> CommutationStructure:
    if value == "canonical":
        if n_hint is None:
            raise ModelFormatError("theta: 'canonical' requires a plant or slh block")
        return canonical_theta(n_hint)
    mat = matrix_from_json(value, "theta")
    if np.iscomplexobj(mat):
        raise ModelFormatError("theta: must be a real matrix")
    return commutation_from_matrix(mat)


def model_from_dict(doc: dict) -> ModelDocument:
    """Parse the model-file schema into domain objects.

    Raises ModelFormatError with the offending key path on any violation.
    """
    if not isinstance(doc, dict):
        raise ModelFormatError("top level: expected a JSON object")
    plant_raw = doc.get("plant")
    slh_raw = doc.get("slh")
    if plant_raw is None and slh_raw is None:
        raise ModelFormatError("top level: one of 'plant' or 'slh' is required")

    slh = None
    if slh_raw is not None:
        if not isinstance(slh_raw, dict):
            raise ModelFormatError("slh: expected an object")
        for key in ("R", "Lambda", "n_y"):
            if key not in slh_raw:
                raise ModelFormatError(f"slh.{key}: missing")
        R = matrix_from_json(slh_raw["R"], "slh.R")
        Lam = matrix_from_json(slh_raw["Lambda"], "slh.Lambda")
        try:
            slh = SLHModel(R.real if not np.iscomplexobj(R) else R, Lam, int(slh_raw["n_y"]))
        except DimensionError as exc:
            raise ModelFormatError(f"slh: {exc}") from exc

    n_hint = None
    mats = {}
    if plant_raw is not None:
        if not isinstance(plant_raw, dict):
            raise ModelFormatError("plant: expected an object")
        for key in _PLANT_KEYS:
            if key not in plant_raw:
                raise ModelFormatError(f"plant.{key}: missing")
            mats[key] = matrix_from_json(plant_raw[key], f"plant.{key}")
            if np.iscomplexobj(mats[key]):
                raise ModelFormatError(f"plant.{key}: must be real")
        n_hint = mats["A"].shape[0]
    elif slh is not None:
        n_hint = slh.n

    theta = _theta_from_json(doc.get("theta", "canonical"), n_hint)

    plant = None
    if plant_raw is not None:
        unc_raw = doc.get("uncertainty")
        if not isinstance(unc_raw, dict) or "E" not in unc_raw:
            raise ModelFormatError("uncertainty.E: missing (required with a plant block)")
        E = matrix_from_json(unc_raw["E"], "uncertainty.E")
        if np.iscomplexobj(E):
            raise ModelFormatError("uncertainty.E: must be real")
        try:
            plant = OpenPlant(
                theta=theta,
                uncertainty=UncertaintyModel(E),
                **mats,
            )
        except DimensionError as exc:
            raise ModelFormatError(f"plant: {exc}") from exc

    extra = {k: v for k, v in doc.items() if k not in ("plant", "slh", "theta", "uncertainty")}
    return ModelDocument(plant=plant, slh=slh, theta=theta, extra=extra)


def model_to_dict(doc: ModelDocument) -> dict:
    """Serialize a ModelDocument back into the schema dictionary."""
    out: dict = {}
    if doc.plant is not None:
        out["plant"] = {key: matrix_to_json(getattr(doc.plant, key)) for key in _PLANT_KEYS}
        theta = doc.plant.theta
    elif doc.theta is not None:
        theta = doc.theta
    else:
        raise ModelFormatError("document has no theta")
    out["theta"] = "canonical" if theta.canonical else matrix_to_json(theta.theta)
    if doc.plant is not None:
        out["uncertainty"] = {"E": matrix_to_json(doc.plant.uncertainty.E)}
    if doc.slh is not None:
        out["slh"] = {
            "R": matrix_to_json(doc.slh.R),
            "Lambda": matrix_to_json(doc.slh.Lambda),
            "n_y": doc.slh.n_y,
        }
    out.update(doc.extra)
    return out


def load_model(path) -> ModelDocument:
    """Read and validate a model JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return model_from_dict(raw)


def save_model(doc: ModelDocument, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_json(model_to_dict(doc)))
