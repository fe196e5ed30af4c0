"""Measure-change machinery: exponential densities and observation transforms.

Two settings are covered.  In the single-channel setting one player observes
dW2 = h(t, x) dt + dw2; the density pair

    rho1    = exp(-int h dw2 - 1/2 int h^2 ds)
    rho1^-1 = exp(+int h dW2 - 1/2 int h^2 ds)

turns (w1, W2) into a standard Brownian pair under the new measure and the
drift of the backward state picks up the extra term h z2.  In the
two-channel setting each player observes dW_i = hbar_i(t, x) dt +
sum_j sigma_ij dw_j with an invertible constant matrix sigma; with
sigmabar = sigma^-1 and cbar = sigmabar hbar,

    rho2    = exp(-int cbar* dw - 1/2 int |cbar|^2 ds)
    rho2^-1 = exp(+int cbar* sigmabar dW - 1/2 int |cbar|^2 ds),

and the martingale integrands rotate as Z = sigmabar* z.  For the rotated
pair W to stay a standard Brownian motion under the new measure, sigma must
be orthogonal; the transform itself only needs invertibility, so the
orthogonality claim is gated behind a flag.

The state path x is supplied by the caller (any array, including a constant
path); this module does not simulate it.  All stochastic integrals use
left-endpoint sums, matching their Ito definition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import SingularMatrix
from .model import TimeGrid

ORTHOGONALITY_TOL = 1e-12


def _as_time_state_fn(h) -> Callable:
    if callable(h):
        return h
    value = float(h)
    return lambda t, x: value + 0.0 * np.asarray(x)


@dataclass(frozen=True)
class GirsanovScenario:
    """Observation data: h for the single-channel case, (hbar1, hbar2, sigma)
    for the two-channel case.  Functions take (t, x) and broadcast over x."""

    h: object = 0.0
    hbar1: object = 0.0
    hbar2: object = 0.0
    sigma: np.ndarray = field(default_factory=lambda: np.eye(2))
    orthogonal: bool = False

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.shape != (2, 2):
            raise ValueError("sigma must be a 2x2 matrix")
        object.__setattr__(self, "sigma", sigma)
        if abs(float(np.linalg.det(sigma))) < 1e-14:
            raise SingularMatrix("sigma is not invertible")
        if self.orthogonal:
            gap = float(np.max(np.abs(sigma @ sigma.T - np.eye(2))))
            if gap > ORTHOGONALITY_TOL:
                raise ValueError(f"orthogonality flag set but |sigma sigma^T - I| = {gap:.3g}")

    def h_fn(self) -> Callable:
        return _as_time_state_fn(self.h)

    def hbar_fn(self):
        return _as_time_state_fn(self.hbar1), _as_time_state_fn(self.hbar2)


@dataclass(frozen=True)
class ObservationTransform:
    """The inverse matrix, the rotated integrand maps, and the drift shifts."""

    sigma: np.ndarray
    sigmabar: np.ndarray

    def rotate(self, z1, z2):
        """(z1, z2) -> (Z1, Z2) = sigmabar* z."""
        sb = self.sigmabar
        return sb[0, 0] * z1 + sb[1, 0] * z2, sb[0, 1] * z1 + sb[1, 1] * z2

    def unrotate(self, big_z1, big_z2):
        """(Z1, Z2) -> (z1, z2), the explicit two-by-two inversion."""
        sb = self.sigmabar
        det = sb[0, 0] * sb[1, 1] - sb[0, 1] * sb[1, 0]
        z1 = (sb[1, 1] * big_z1 - sb[1, 0] * big_z2) / det
        z2 = (sb[0, 0] * big_z2 - sb[0, 1] * big_z1) / det
        return z1, z2

    def drift_shift_same_observation(self, scenario: GirsanovScenario, t, x, z2):
        """Extra drift h(t, x) z2 created by absorbing the observation bias."""
        return scenario.h_fn()(t, x) * z2

    def drift_shift_independent(self, scenario: GirsanovScenario, t, x, big_z1, big_z2):
        """Extra drift cbar1 z1 + cbar2 z2 with z recovered from (Z1, Z2)."""
        z1, z2 = self.unrotate(big_z1, big_z2)
        c1, c2 = cbar(scenario, t, x)
        return c1 * z1 + c2 * z2


def transform_observation(scenario: GirsanovScenario) -> ObservationTransform:
    """Invert sigma and package the integrand rotation and drift shifts."""
    sigma = scenario.sigma
    det = float(sigma[0, 0] * sigma[1, 1] - sigma[0, 1] * sigma[1, 0])
    if abs(det) < 1e-14:
        raise SingularMatrix("sigma is not invertible")
    sigmabar = np.array([[sigma[1, 1], -sigma[0, 1]],
                         [-sigma[1, 0], sigma[0, 0]]]) / det
    return ObservationTransform(sigma=sigma, sigmabar=sigmabar)


def cbar(scenario: GirsanovScenario, t, x):
    """Transformed drift pair cbar = sigmabar hbar(t, x), elementwise over x."""
    f1, f2 = scenario.hbar_fn()
    h1, h2 = f1(t, x), f2(t, x)
    sb = transform_observation(scenario).sigmabar
    return sb[0, 0] * h1 + sb[0, 1] * h2, sb[1, 0] * h1 + sb[1, 1] * h2


def _left_nodes(grid: TimeGrid, x_path: np.ndarray, paths: int):
    """Times and state values at the left endpoint of every step."""
    ts = grid.nodes()[:-1]
    x = np.asarray(x_path, dtype=float)
    if x.ndim == 1:
        x = np.broadcast_to(x, (paths, grid.steps + 1))
    return ts[None, :], x[:, :-1]


def density_rho1(scenario: GirsanovScenario, grid: TimeGrid,
                 dw2: np.ndarray, x_path: np.ndarray):
    """Single-channel density path and its reciprocal, shape (paths, N+1).

    rho1 discretises exp(-int h dw2 - 1/2 int h^2 ds) with left-endpoint
    sums; the reciprocal uses the observation increments dW2 = h dt + dw2,
    so rho1 * rho1^-1 == 1 holds to rounding at every node.
    """
    paths, n = dw2.shape
    ts, x = _left_nodes(grid, x_path, paths)
    h = np.broadcast_to(np.asarray(scenario.h_fn()(ts, x), dtype=float), (paths, n))
    dt = grid.dt

    half_quad = 0.5 * np.cumsum(h ** 2 * dt, axis=1)
    ito = np.cumsum(h * dw2, axis=1)
    dw2_obs = h * dt + dw2
    ito_obs = np.cumsum(h * dw2_obs, axis=1)

    rho = np.ones((paths, n + 1))
    rho[:, 1:] = np.exp(-ito - half_quad)
    rho_inv = np.ones((paths, n + 1))
    rho_inv[:, 1:] = np.exp(ito_obs - half_quad)
    return rho, rho_inv


def density_rho2(scenario: GirsanovScenario, grid: TimeGrid,
                 dw1: np.ndarray, dw2: np.ndarray, x_path: np.ndarray):
    """Two-channel density path and its reciprocal, shape (paths, N+1)."""
    paths, n = dw1.shape
    ts, x = _left_nodes(grid, x_path, paths)
    f1, f2 = scenario.hbar_fn()
    h1 = np.broadcast_to(np.asarray(f1(ts, x), dtype=float), (paths, n))
    h2 = np.broadcast_to(np.asarray(f2(ts, x), dtype=float), (paths, n))
    transform = transform_observation(scenario)
    sb = transform.sigmabar
    c1 = sb[0, 0] * h1 + sb[0, 1] * h2
    c2 = sb[1, 0] * h1 + sb[1, 1] * h2
    dt = grid.dt

    half_quad = 0.5 * np.cumsum((c1 ** 2 + c2 ** 2) * dt, axis=1)
    ito = np.cumsum(c1 * dw1 + c2 * dw2, axis=1)

    sigma = scenario.sigma
    dw1_obs = h1 * dt + sigma[0, 0] * dw1 + sigma[0, 1] * dw2
    dw2_obs = h2 * dt + sigma[1, 0] * dw1 + sigma[1, 1] * dw2
    # integrand of the reciprocal: cbar* sigmabar dW
    r1 = c1 * sb[0, 0] + c2 * sb[1, 0]
    r2 = c1 * sb[0, 1] + c2 * sb[1, 1]
    ito_obs = np.cumsum(r1 * dw1_obs + r2 * dw2_obs, axis=1)

    rho = np.ones((paths, n + 1))
    rho[:, 1:] = np.exp(-ito - half_quad)
    rho_inv = np.ones((paths, n + 1))
    rho_inv[:, 1:] = np.exp(ito_obs - half_quad)
    return rho, rho_inv
