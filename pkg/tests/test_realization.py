import numpy as np
import pytest
import scipy.linalg as sla

from qhinf.qmodel import (
    DimensionError,
    J2,
    ModelFormatError,
    canonical_noise,
    canonical_theta,
    commutation_from_matrix,
    is_physically_realizable,
)
from qhinf.realization import (
    complete_realization,
    controller_from_dict,
    controller_to_dict,
    is_canonical_ito,
    load_controller,
    measurement_ito_matrix,
    realization_defect,
    save_controller,
    skew_factor,
)

I2 = np.eye(2)

# Controller triples of the two cavity designs.
NOMINAL_TRIPLE = (-0.5 * I2, -np.sqrt(5.0) * I2, -np.sqrt(0.5) * I2)
ROBUST_TRIPLE = (-34.9604 * I2, 13.5894 * I2, -0.7058 * I2)


def reconstruct(R: np.ndarray) -> np.ndarray:
    r = R.shape[1] // 2
    if r == 0:
        return np.zeros((R.shape[0], R.shape[0]))
    return R @ sla.block_diag(*([J2] * r)) @ R.T


class TestSkewFactor:
    def test_single_block(self):
        R = skew_factor(-4.5 * J2)
        assert R.shape == (2, 2)
        assert np.linalg.det(R) == pytest.approx(-4.5, abs=1e-10)
        assert np.allclose(reconstruct(R), -4.5 * J2, atol=1e-10)

    def test_zero_matrix(self):
        R = skew_factor(np.zeros((4, 4)))
        assert R.shape == (4, 0)

    def test_two_blocks(self):
        Xi = sla.block_diag(2.0 * J2, -3.0 * J2)
        R = skew_factor(Xi)
        assert R.shape == (4, 4)
        assert np.allclose(reconstruct(R), Xi, atol=1e-10)

    def test_round_trip_random(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 9))
            raw = rng.standard_normal((n, n))
            Xi = raw - raw.T
            R = skew_factor(Xi)
            assert R.shape[1] % 2 == 0
            assert np.linalg.norm(reconstruct(R) - Xi) < 1e-10 * (
                1.0 + np.linalg.norm(Xi)
            )

    def test_rank_deficient_skips_channels(self, rng):
        v = rng.standard_normal((6, 2))
        Xi = v @ J2 @ v.T  # rank 2 antisymmetric
        R = skew_factor(Xi)
        assert R.shape == (6, 2)
        assert np.allclose(reconstruct(R), Xi, atol=1e-9)

    def test_rejects_non_antisymmetric(self):
        with pytest.raises(DimensionError):
            skew_factor(np.eye(2))


class TestCompletion:
    def test_reference_design_fixture(self):
        controller = complete_realization(*NOMINAL_TRIPLE)
        forced = controller.B_K1[:, :2]
        assert np.allclose(forced, np.sqrt(0.5) * I2, atol=1e-12)
        assert np.allclose(forced, 0.7071 * I2, atol=1e-3)
        defect = realization_defect(*NOMINAL_TRIPLE)
        assert np.allclose(defect, -4.5 * J2, atol=1e-12)
        assert np.array_equal(controller.B_K0, np.hstack([I2, np.zeros((2, 2))]))
        result = is_physically_realizable(controller.as_state_space(), controller.theta_K)
        assert result.verdict
        assert max(result.residual_commutation, result.residual_output) < 1e-8

    def test_robust_design_fixture(self):
        controller = complete_realization(*ROBUST_TRIPLE)
        forced = controller.B_K1[:, :2]
        assert np.allclose(forced, 0.7058 * I2, atol=1e-6)
        defect = realization_defect(*ROBUST_TRIPLE)
        assert np.allclose(defect, -115.2494 * J2, atol=0.01)
        # The published second-block determinant solves the same equation.
        published_block = np.array([[8.0, -8.0], [-8.0, -6.4062]])
        assert np.linalg.det(published_block) == pytest.approx(defect[0, 1], abs=0.01)
        extra = controller.B_K1[:, 2:]
        assert np.linalg.det(extra) == pytest.approx(defect[0, 1], abs=1e-9)
        result = is_physically_realizable(controller.as_state_space(), controller.theta_K)
        assert result.verdict

    def test_zero_triple(self):
        controller = complete_realization(
            np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2))
        )
        assert controller.n_vK == 2  # forced block only, no extra channels
        assert np.array_equal(controller.B_K1, np.zeros((2, 2)))
        assert is_physically_realizable(
            controller.as_state_space(), controller.theta_K
        ).verdict

    def test_forced_block_is_exact(self, rng):
        A_K = rng.standard_normal((4, 4))
        B_K = rng.standard_normal((4, 2))
        C_K = rng.standard_normal((2, 4))
        controller = complete_realization(A_K, B_K, C_K)
        expected = canonical_theta(4).theta @ C_K.T @ canonical_theta(2).theta
        assert np.array_equal(controller.B_K1[:, :2], expected)

    def test_random_triples_realizable(self, rng):
        for _ in range(50):
            n_k = 2 * int(rng.integers(1, 4))
            n_u = 2 * int(rng.integers(1, 3))
            n_y = 2 * int(rng.integers(1, 3))
            controller = complete_realization(
                rng.standard_normal((n_k, n_k)),
                rng.standard_normal((n_k, n_y)),
                rng.standard_normal((n_u, n_k)),
            )
            result = is_physically_realizable(
                controller.as_state_space(), controller.theta_K
            )
            scale = 1.0 + np.linalg.norm(controller.A_K)
            assert result.residual_commutation < 1e-8 * scale
            assert result.residual_output < 1e-8 * scale

    def test_non_canonical_theta_rejected(self):
        theta = commutation_from_matrix(2.0 * J2)
        with pytest.raises(DimensionError):
            complete_realization(*NOMINAL_TRIPLE, theta_K=theta)

    def test_odd_dimensions_rejected(self):
        with pytest.raises(DimensionError):
            complete_realization(
                np.zeros((3, 3)), np.zeros((3, 2)), np.zeros((2, 3))
            )


class TestCanonicalIto:
    def test_vacuum_block(self):
        assert is_canonical_ito(np.eye(2) + 1j * J2)
        assert is_canonical_ito(canonical_noise(6).F)

    def test_missing_commutation_part(self):
        assert not is_canonical_ito(np.eye(2) + 0j)

    def test_wrong_scale(self):
        assert not is_canonical_ito(2.0 * (np.eye(2) + 1j * J2))

    def test_cavity_measurement_hypothesis(self, cavity):
        F_y = measurement_ito_matrix(cavity)
        assert is_canonical_ito(F_y)


class TestControllerSchema:
    def test_round_trip(self, tmp_path):
        controller = complete_realization(*NOMINAL_TRIPLE)
        path = tmp_path / "k.json"
        save_controller(controller, path)
        loaded = load_controller(path)
        for key in ("A_K", "B_K1", "B_K", "C_K", "B_K0"):
            assert np.array_equal(getattr(loaded, key), getattr(controller, key))
        doc = controller_to_dict(controller)
        assert doc["dims"] == {"n_K": 2, "n_vK": 4, "n_u": 2, "n_y": 2}
        assert doc["theta_K"] == "canonical"

    def test_tampered_matrices_rejected(self):
        controller = complete_realization(*NOMINAL_TRIPLE)
        doc = controller_to_dict(controller)
        doc["B_K1"][0][2] += 0.5  # break the commutation balance
        with pytest.raises(ModelFormatError):
            controller_from_dict(doc)

    def test_missing_key_rejected(self):
        controller = complete_realization(*NOMINAL_TRIPLE)
        doc = controller_to_dict(controller)
        del doc["C_K"]
        with pytest.raises(ModelFormatError, match="C_K"):
            controller_from_dict(doc)
