"""Independent oracles the library is checked against.

Everything here recomputes expected values by a different route than the
implementation under test: quadratic formulas for scalar-reducible Riccati
equations, dense frequency grids for peak gains, and transfer-matrix
elimination for interconnections.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

# Cavity parameters shared by many tests.
GAMMA = 12.0
KAPPA = (6.5, 5.0, 0.5)
G_REF = 0.35


def scalar_care_roots(a: float, q: float, k: float) -> tuple[float, ...]:
    """Real roots of q x^2 + 2 a x + k = 0, ascending."""
    if abs(q) < 1e-300:
        return (-k / (2.0 * a),) if a != 0 else ()
    disc = 4.0 * a * a - 4.0 * q * k
    if disc < 0:
        return ()
    root = np.sqrt(disc)
    pair = ((-2.0 * a - root) / (2.0 * q), (-2.0 * a + root) / (2.0 * q))
    return tuple(sorted(pair))


def scalar_stabilizing_root(a: float, q: float, k: float) -> float | None:
    """The admissible root: closed loop a + q x stable and x >= 0."""
    roots = [
        x for x in scalar_care_roots(a, q, k) if a + q * x < 0 and x >= -1e-12
    ]
    return roots[0] if roots else None


def cavity_x_coefficients(eps: float, g: float = G_REF) -> tuple[float, float, float]:
    """(a, q, k) of the scalar reduction of the first synthesis equation."""
    k1, k2, k3 = KAPPA
    return (-GAMMA / 2 + k3, 4.0 * eps + k2 / g**2 - k3, 1.0 / eps)


def cavity_y_coefficients(eps: float, g: float = G_REF) -> tuple[float, float, float]:
    """(a, q, k) of the scalar reduction of the second synthesis equation."""
    k1, k2, k3 = KAPPA
    return (-GAMMA / 2 + k2, 1.0 / eps + k3 - k2 * g**2, 4.0 * eps)


def grid_norm(
    A: np.ndarray,
    B: np.ndarray,
    C: np.ndarray,
    D: np.ndarray | None = None,
    num: int = 2000,
    w_lo: float = 1e-2,
    w_hi: float = 1e2,
) -> float:
    """Dense-grid estimate of the peak gain (a lower bound on the true norm)."""
    n = A.shape[0]
    if D is None:
        D = np.zeros((C.shape[0], B.shape[1]))
    best = float(np.linalg.svd(D, compute_uv=False)[0]) if D.size else 0.0
    for w in np.concatenate([[0.0], np.geomspace(w_lo, w_hi, num)]):
        G = C @ np.linalg.solve(1j * w * np.eye(n) - A, B) + D
        best = max(best, float(np.linalg.svd(G, compute_uv=False)[0]))
    return best


def lft_transfer(plant, controller, s: complex) -> np.ndarray:
    """Disturbance-to-performance transfer by transfer-matrix elimination.

    Works channel by channel (z = G_zw w + G_zu u, y = G_yw w + G_yu u,
    u = K y) instead of assembling the joint state matrix, so it is an
    independent check on the interconnection.
    """
    n = plant.n
    res = np.linalg.inv(s * np.eye(n) - plant.A)
    G_zw = plant.C1 @ res @ plant.B1
    G_zu = plant.C1 @ res @ plant.B2 + plant.D12
    G_yw = plant.C2 @ res @ plant.B1 + plant.D21
    G_yu = plant.C2 @ res @ plant.B2
    res_k = np.linalg.inv(s * np.eye(controller.n_K) - controller.A_K)
    K = controller.C_K @ res_k @ controller.B_K
    closure = np.linalg.inv(np.eye(plant.n_y) - G_yu @ K)
    return G_zw + G_zu @ K @ closure @ G_yw


def random_stable_system(
    rng: np.random.Generator, n: int, n_in: int, n_out: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stable system with well-damped poles, so grid oracles resolve the peak.

    Eigenvalues are placed as -a +/- ib with a in [0.8, 2] and b in [0, 2],
    giving damping ratios above 0.37, then hidden by a random orthogonal
    similarity.
    """
    blocks = []
    k = n
    while k > 0:
        if k >= 2 and rng.random() < 0.7:
            a = rng.uniform(0.8, 2.0)
            b = rng.uniform(0.0, 2.0)
            blocks.append(np.array([[-a, b], [-b, -a]]))
            k -= 2
        else:
            blocks.append(np.array([[-rng.uniform(0.8, 2.0)]]))
            k -= 1
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    A = Q @ sla.block_diag(*blocks) @ Q.T
    B = rng.standard_normal((n, n_in))
    C = rng.standard_normal((n_out, n))
    return A, B, C
