import numpy as np
import pytest
import scipy.linalg as sla

from qhinf.analysis import (
    ClosedLoopSystem,
    InvalidConfig,
    UnstableSystem,
    close_loop,
    hinf_norm,
    robust_sbr_check,
    sbr_check,
    scaled_equivalence_check,
    sweep,
)
from qhinf.qmodel import J2, UncertaintySample, scalar_uncertainty
from qhinf.realization import complete_realization
from qhinf.riccati import riccati_X, riccati_Y
from qhinf.synthesis import controller_matrices, sampled_delta_grid

from conftest import random_plant
from oracles import G_REF, grid_norm, lft_transfer, random_stable_system

I2 = np.eye(2)


def nominal_controller(cavity_nominal):
    X = riccati_X(cavity_nominal, G_REF, 1.0)
    Y = riccati_Y(cavity_nominal, G_REF, 1.0)
    return complete_realization(*controller_matrices(cavity_nominal, G_REF, 1.0, X, Y))


def synthetic_closed_loop(rng, n_plant=2, n_ctrl=2, m=2, scale_E=1.0):
    """Directly assembled closed-loop data with a stable state matrix."""
    n = n_plant + n_ctrl
    A, B, C = random_stable_system(rng, n, 2, 2)
    E = scale_E * rng.standard_normal((m, n_plant))
    return ClosedLoopSystem(
        A_tilde=A,
        B_tilde=B,
        G_tilde=np.zeros((n, 2)),
        C_tilde=C,
        H_tilde=np.zeros((2, 2)),
        Theta_tilde=sla.block_diag(canonical := J2, np.zeros((n_ctrl, n_ctrl))),
        E_tilde=np.hstack([E, np.zeros((m, n_ctrl))]),
        n_plant=n_plant,
        n_ctrl=n_ctrl,
    )


class TestCloseLoop:
    def test_cavity_nominal_block_values(self, cavity, cavity_nominal):
        controller = nominal_controller(cavity_nominal)
        closed = close_loop(cavity, controller)
        # B2 C_K = (-sqrt(0.5)) * (-sqrt(0.5) I) = 0.5 I.
        assert np.allclose(closed.A_tilde[:2, 2:], 0.5 * I2, atol=1e-12)
        assert np.allclose(closed.A_tilde[:2, :2], -6.0 * I2, atol=1e-12)
        assert np.allclose(closed.B_tilde, np.vstack([-np.sqrt(5) * I2, -np.sqrt(5) * I2]))
        assert np.allclose(
            closed.C_tilde, np.hstack([np.sqrt(0.5) * I2, -np.sqrt(0.5) * I2])
        )
        assert np.array_equal(
            closed.Theta_tilde, sla.block_diag(J2, np.zeros((2, 2)))
        )
        assert np.array_equal(closed.E_tilde, np.hstack([I2, np.zeros((2, 2))]))

    def test_zero_gain_controller_decouples(self, cavity):
        controller = complete_realization(-I2, np.zeros((2, 2)), np.zeros((2, 2)))
        closed = close_loop(cavity, controller)
        assert np.array_equal(closed.A_tilde[:2, 2:], np.zeros((2, 2)))
        assert np.array_equal(closed.A_tilde[2:, :2], np.zeros((2, 2)))

    def test_block_reextraction_random(self, rng):
        plant = random_plant(rng, n=4, n_v=4, n_w=2, n_u=2, n_z=4, n_y=2, m=3)
        controller = complete_realization(
            rng.standard_normal((4, 4)),
            rng.standard_normal((4, 2)),
            rng.standard_normal((2, 4)),
        )
        closed = close_loop(plant, controller)
        n = plant.n
        assert np.array_equal(closed.A_tilde[:n, :n], plant.A)
        assert np.array_equal(closed.A_tilde[:n, n:], plant.B2 @ controller.C_K)
        assert np.array_equal(closed.A_tilde[n:, :n], controller.B_K @ plant.C2)
        assert np.array_equal(closed.A_tilde[n:, n:], controller.A_K)
        assert np.array_equal(closed.B_tilde[n:], controller.B_K @ plant.D21)
        assert np.array_equal(closed.G_tilde[:n, : plant.n_v], plant.B0)
        assert np.array_equal(closed.G_tilde[:n, plant.n_v :], plant.B2 @ controller.B_K0)
        assert np.array_equal(closed.G_tilde[n:, : plant.n_v], controller.B_K @ plant.D20)
        assert np.array_equal(closed.G_tilde[n:, plant.n_v :], controller.B_K1)
        assert np.array_equal(closed.H_tilde[:, plant.n_v :], plant.D12 @ controller.B_K0)
        assert np.array_equal(closed.C_tilde[:, n:], plant.D12 @ controller.C_K)

    def test_dimension_mismatch_rejected(self, rng, cavity):
        controller = complete_realization(
            rng.standard_normal((2, 2)),
            rng.standard_normal((2, 4)),  # n_y = 4 != plant's 2
            rng.standard_normal((2, 2)),
        )
        with pytest.raises(Exception):
            close_loop(cavity, controller)

    def test_transfer_matches_elimination_oracle(self, rng):
        for _ in range(20):
            plant = random_plant(rng)
            controller = complete_realization(
                rng.standard_normal((4, 4)),
                rng.standard_normal((4, 2)),
                rng.standard_normal((2, 4)),
            )
            closed = close_loop(plant, controller)
            for _ in range(10):
                s = 1j * rng.uniform(0.1, 10.0)
                direct = closed.C_tilde @ np.linalg.solve(
                    s * np.eye(closed.n_total) - closed.A_tilde, closed.B_tilde
                )
                oracle = lft_transfer(plant, controller, s)
                denom = max(np.linalg.norm(oracle), 1e-12)
                assert np.linalg.norm(direct - oracle) / denom < 1e-9


class TestHinfNorm:
    def test_first_order_lag(self):
        assert hinf_norm(-np.eye(1), np.eye(1), np.eye(1)) == pytest.approx(1.0, rel=1e-6)

    def test_first_order_static_gain(self):
        value = hinf_norm(np.array([[-2.0]]), np.array([[3.0]]), np.array([[4.0]]))
        assert value == pytest.approx(6.0, rel=1e-6)

    def test_unstable_raises(self):
        with pytest.raises(UnstableSystem):
            hinf_norm(np.eye(2), np.eye(2), np.eye(2))

    def test_matches_grid_oracle(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 9))
            A, B, C = random_stable_system(rng, n, int(rng.integers(1, 3)), int(rng.integers(1, 3)))
            bisected = hinf_norm(A, B, C)
            gridded = grid_norm(A, B, C)
            assert abs(bisected - gridded) / gridded < 1e-4

    def test_output_scaling(self, rng):
        A, B, C = random_stable_system(rng, 4, 2, 2)
        D = 0.3 * rng.standard_normal((2, 2))
        base = hinf_norm(A, B, C, D)
        for alpha in (0.5, 2.0, -3.0):
            scaled = hinf_norm(A, B, alpha * C, alpha * D)
            assert abs(scaled - abs(alpha) * base) <= 1e-8 * abs(alpha) * base + 1e-12

    def test_feedthrough_only(self):
        D = np.diag([0.7, 0.2])
        value = hinf_norm(-np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)), D)
        assert value == pytest.approx(0.7, rel=1e-9)


class TestSbr:
    def test_simple_verdicts(self):
        A = -np.eye(1)
        B = C = np.eye(1)
        assert sbr_check(A, B, C, 2.0).verdict
        assert not sbr_check(A, B, C, 0.5).verdict

    def test_unstable_is_false_not_error(self):
        result = sbr_check(np.eye(2), np.eye(2), np.eye(2), 10.0)
        assert not result.verdict and result.witness is None

    def test_witness_validity_random(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 6))
            A, B, C = random_stable_system(rng, n, 2, 2)
            norm = hinf_norm(A, B, C)
            result = sbr_check(A, B, C, 1.5 * norm)
            assert result.verdict
            X = result.witness
            assert X is not None
            assert np.linalg.eigvalsh(X).min() > 0
            lhs = A.T @ X + X @ A + C.T @ C + X @ B @ B.T @ X / (1.5 * norm) ** 2
            assert np.linalg.eigvalsh(lhs).max() < 0


class TestRobustSbr:
    def test_single_zero_sample_reduces_to_sbr(self, rng):
        closed = synthetic_closed_loop(rng, scale_E=0.1)
        plain = sbr_check(closed.A_tilde, closed.B_tilde, closed.C_tilde, 5.0)
        robust = robust_sbr_check(closed, 5.0, [scalar_uncertainty(0.0, 2)])
        assert robust.verdict == plain.verdict
        assert robust.per_sample_norms[0] == pytest.approx(plain.norm, rel=1e-9)

    def test_empty_samples_rejected(self, rng):
        closed = synthetic_closed_loop(rng)
        with pytest.raises(InvalidConfig):
            robust_sbr_check(closed, 1.0, [])

    def test_nominal_cavity_controller_fails_at_edges(self, cavity, cavity_nominal):
        closed = close_loop(cavity, nominal_controller(cavity_nominal))
        samples = [scalar_uncertainty(d, 2) for d in (-1.0, 0.0, 1.0)]
        result = robust_sbr_check(closed, G_REF, samples)
        assert not result.verdict
        # Perfect rejection at the centre, degradation at the edges.
        assert result.per_sample_norms[1] < 1e-6
        assert result.per_sample_norms[0] > G_REF
        assert result.per_sample_norms[2] > G_REF


class TestScaledEquivalence:
    def test_zero_uncertainty_scaling_identity(self, cavity_nominal):
        controller = nominal_controller(cavity_nominal)
        closed = close_loop(cavity_nominal, controller)
        report = scaled_equivalence_check(
            closed, G_REF, 1.0, [scalar_uncertainty(0.0, 2)]
        )
        plain = sbr_check(closed.A_tilde, closed.B_tilde, closed.C_tilde, G_REF)
        assert report.verdict == plain.verdict
        # With E = 0 the scaled gain is exactly the plain gain divided by g.
        assert report.scaled.norm == pytest.approx(plain.norm / G_REF, abs=1e-6)

    def test_witness_propagates_to_samples(self, rng):
        checked = 0
        while checked < 10:
            closed = synthetic_closed_loop(rng, scale_E=1.0)
            g = 1.25 * hinf_norm(closed.A_tilde, closed.B_tilde, closed.C_tilde)
            samples = sampled_delta_grid(2, num=9, seed=checked)
            for shrink in range(12):
                scaled = scaled_equivalence_check(closed, g, 1.0, samples)
                if scaled.verdict:
                    break
                closed = ClosedLoopSystem(
                    A_tilde=closed.A_tilde,
                    B_tilde=closed.B_tilde,
                    G_tilde=closed.G_tilde,
                    C_tilde=closed.C_tilde,
                    H_tilde=closed.H_tilde,
                    Theta_tilde=closed.Theta_tilde,
                    E_tilde=0.5 * closed.E_tilde,
                    n_plant=closed.n_plant,
                    n_ctrl=closed.n_ctrl,
                )
            assert scaled.verdict, "shrinking E must eventually make the scaled loop SBR"
            assert scaled.witness_certifies
            assert scaled.lemma_max_eig < 0
            assert all(e < 0 for e in scaled.sample_max_eigs)
            checked += 1


class TestSweep:
    def test_single_point_matches_norm(self, cavity, cavity_nominal):
        controller = nominal_controller(cavity_nominal)
        closed = close_loop(cavity, controller)
        result = sweep(cavity, [controller], [0.0], g=G_REF)
        direct = hinf_norm(closed.A_tilde, closed.B_tilde, closed.C_tilde)
        assert abs(result.rows[0].norm_robust - direct) <= 1e-12

    def test_rows_sorted_and_flagged(self, cavity, cavity_nominal):
        controller = nominal_controller(cavity_nominal)
        result = sweep(cavity, [controller], [0.5, -0.5, 0.0], g=G_REF)
        assert [r.delta for r in result.rows] == [-0.5, 0.0, 0.5]
        for row in result.rows:
            assert row.attenuation_met == (row.norm_robust <= G_REF)

    def test_unstable_point_becomes_inf(self, rng, cavity):
        # An unstable plant with a decoupled controller cannot be stabilized.
        unstable = random_plant(rng)
        unstable = type(unstable)(
            A=0.2 * np.eye(4), B0=unstable.B0, B1=unstable.B1, B2=unstable.B2,
            C1=unstable.C1, D12=unstable.D12, C2=unstable.C2, D20=unstable.D20,
            D21=unstable.D21, theta=unstable.theta, uncertainty=unstable.uncertainty,
        )
        controller = complete_realization(-I2, np.zeros((2, 2)), np.zeros((2, 2)))
        result = sweep(unstable, [controller], [0.0], g=1.0)
        assert result.rows[0].norm_robust == np.inf
        assert not result.rows[0].attenuation_met

    def test_csv_contract(self, cavity, cavity_nominal):
        controller = nominal_controller(cavity_nominal)
        result = sweep(cavity, [controller, controller], [-1.0, 0.0, 1.0], g=G_REF)
        lines = result.to_csv().strip().split("\n")
        assert lines[0] == "delta,norm_robust,norm_reference,meets_g"
        assert len(lines) == 4
        cells = lines[1].split(",")
        assert float(cells[0]) == -1.0
        assert cells[3] in ("true", "false")
        # nine significant digits
        assert len(cells[1].replace("-", "").replace(".", "").lstrip("0")) <= 9

    def test_reference_column_empty_for_single_controller(self, cavity, cavity_nominal):
        controller = nominal_controller(cavity_nominal)
        result = sweep(cavity, [controller], [0.0], g=G_REF)
        line = result.to_csv().strip().split("\n")[1]
        assert line.split(",")[2] == ""
