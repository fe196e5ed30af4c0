import math

import numpy as np
import pytest

from bsdegame import girsanov, stochastic
from bsdegame.errors import SingularMatrix
from bsdegame.girsanov import (GirsanovScenario, cbar, density_rho1, density_rho2,
                               transform_observation)
from bsdegame.model import TimeGrid

GRID = TimeGrid(1.0, 400)
ZERO_X = np.zeros(GRID.steps + 1)


def rotation(theta):
    return np.array([[math.cos(theta), -math.sin(theta)],
                     [math.sin(theta), math.cos(theta)]])


@pytest.fixture(scope="module")
def batch():
    return stochastic.sample_brownian(GRID, 77, 50_000)


class TestRho1:
    def test_no_observation_bias_means_unit_density(self, batch):
        scenario = GirsanovScenario(h=0.0)
        rho, rho_inv = density_rho1(scenario, GRID, batch.dw2[:100], ZERO_X)
        assert np.all(rho == 1.0) and np.all(rho_inv == 1.0)

    def test_martingale_mean(self, batch):
        scenario = GirsanovScenario(h=0.4)
        rho, _ = density_rho1(scenario, GRID, batch.dw2, ZERO_X)
        terminal = rho[:, -1]
        se = terminal.std(ddof=1) / math.sqrt(len(terminal))
        assert abs(terminal.mean() - 1.0) <= 3.0 * se

    def test_reciprocal_identity_pointwise(self, batch):
        scenario = GirsanovScenario(h=lambda t, x: 0.3 + 0.2 * np.sin(x))
        x_path = np.sin(np.linspace(0.0, 3.0, GRID.steps + 1))
        rho, rho_inv = density_rho1(scenario, GRID, batch.dw2[:200], x_path)
        assert np.max(np.abs(rho * rho_inv - 1.0)) <= 1e-12

    def test_state_dependent_bias_broadcasts_per_path(self, batch):
        scenario = GirsanovScenario(h=lambda t, x: np.tanh(x))
        x_paths = np.cumsum(batch.dw1[:50], axis=1)
        x_paths = np.concatenate([np.zeros((50, 1)), x_paths], axis=1)
        rho, rho_inv = density_rho1(scenario, GRID, batch.dw2[:50], x_paths)
        assert rho.shape == (50, GRID.steps + 1)
        assert np.max(np.abs(rho * rho_inv - 1.0)) <= 1e-12


class TestRho2:
    def test_no_bias_means_unit_density(self, batch):
        scenario = GirsanovScenario(hbar1=0.0, hbar2=0.0, sigma=rotation(0.7),
                                    orthogonal=True)
        rho, rho_inv = density_rho2(scenario, GRID, batch.dw1[:100],
                                    batch.dw2[:100], ZERO_X)
        assert np.all(rho == 1.0) and np.all(rho_inv == 1.0)

    def test_identity_rotation_reduces_to_two_channels(self, batch):
        scenario = GirsanovScenario(hbar1=0.3, hbar2=-0.2, sigma=np.eye(2),
                                    orthogonal=True)
        dw1, dw2 = batch.dw1[:500], batch.dw2[:500]
        rho, _ = density_rho2(scenario, GRID, dw1, dw2, ZERO_X)
        manual = np.exp(-0.3 * dw1.sum(axis=1) + 0.2 * dw2.sum(axis=1)
                        - 0.5 * (0.09 + 0.04))
        assert np.allclose(rho[:, -1], manual, rtol=1e-12)

    def test_martingale_mean(self, batch):
        scenario = GirsanovScenario(hbar1=0.25, hbar2=-0.4,
                                    sigma=rotation(math.pi / 6), orthogonal=True)
        rho, _ = density_rho2(scenario, GRID, batch.dw1, batch.dw2, ZERO_X)
        terminal = rho[:, -1]
        se = terminal.std(ddof=1) / math.sqrt(len(terminal))
        assert abs(terminal.mean() - 1.0) <= 3.0 * se

    def test_reciprocal_identity_pointwise(self, batch):
        scenario = GirsanovScenario(hbar1=0.25, hbar2=-0.4,
                                    sigma=rotation(math.pi / 6), orthogonal=True)
        rho, rho_inv = density_rho2(scenario, GRID, batch.dw1[:200],
                                    batch.dw2[:200], ZERO_X)
        assert np.max(np.abs(rho * rho_inv - 1.0)) <= 1e-12


class TestTransform:
    def test_identity(self):
        transform = transform_observation(GirsanovScenario(sigma=np.eye(2)))
        z1, z2 = transform.rotate(1.5, -0.5)
        assert (z1, z2) == (1.5, -0.5)

    def test_quarter_turn(self):
        transform = transform_observation(GirsanovScenario(sigma=rotation(math.pi / 2),
                                                           orthogonal=True))
        big1, big2 = transform.rotate(np.array([1.0]), np.array([2.0]))
        assert big1[0] == pytest.approx(-2.0)
        assert big2[0] == pytest.approx(1.0)

    def test_round_trip_for_random_invertible_matrices(self):
        rng = np.random.default_rng(12)
        z1, z2 = rng.standard_normal(64), rng.standard_normal(64)
        for _ in range(50):
            sigma = rng.standard_normal((2, 2))
            if abs(np.linalg.det(sigma)) < 0.05:
                continue
            transform = transform_observation(GirsanovScenario(sigma=sigma))
            back1, back2 = transform.unrotate(*transform.rotate(z1, z2))
            assert np.max(np.abs(back1 - z1)) <= 1e-12
            assert np.max(np.abs(back2 - z2)) <= 1e-12

    def test_cbar_is_the_rotated_bias(self):
        scenario = GirsanovScenario(hbar1=0.3, hbar2=-0.1, sigma=rotation(0.4),
                                    orthogonal=True)
        c1, c2 = cbar(scenario, 0.0, 0.0)
        expect = rotation(0.4).T @ np.array([0.3, -0.1])   # inverse of a rotation
        assert c1 == pytest.approx(expect[0])
        assert c2 == pytest.approx(expect[1])

    def test_drift_shifts(self):
        scenario = GirsanovScenario(h=0.5, hbar1=0.3, hbar2=-0.1, sigma=np.eye(2))
        transform = transform_observation(scenario)
        assert transform.drift_shift_same_observation(scenario, 0.0, 0.0, 2.0) == 1.0
        # identity rotation: the shift is cbar . z = hbar . z
        shift = transform.drift_shift_independent(scenario, 0.0, 0.0, 1.0, 2.0)
        assert shift == pytest.approx(0.3 * 1.0 - 0.1 * 2.0)

    def test_singular_sigma_rejected(self):
        with pytest.raises(SingularMatrix):
            GirsanovScenario(sigma=np.array([[1.0, 2.0], [2.0, 4.0]]))

    def test_orthogonality_flag_checked(self):
        with pytest.raises(ValueError, match="orthogonality"):
            GirsanovScenario(sigma=np.array([[2.0, 0.0], [0.0, 0.5]]), orthogonal=True)
