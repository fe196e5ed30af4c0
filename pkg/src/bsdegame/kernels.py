"""Integrating-factor kernels K(t, s) = exp(integral_t^s rate(r) dr).

Five kinds arise in the closed-form state representations, differing only in
the decay rate and in whether a Brownian exponent rides on top:

    ============  =======================  ==================
    kind          rate                     stochastic part
    ============  =======================  ==================
    gamma         a + rho1 alpha           exp(int f2 dw2 - 1/2 int f2^2)
    gamma_bar     a + rho1 alpha           --
    xi            a + rho1 gamma1          --
    psi           a + rho2 tau1            --
    upsilon       a + rho1 gamma1          exp(int f2 dw2 - 1/2 int f2^2)
    ============  =======================  ==================

The deterministic part is stored as the cumulative log-factor L with
K(t_i, t_j) = exp(L_j - L_i); K(t, t) = 1 and K > 0 by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PatternMismatch
from .model import TimeGrid, ValidatedModel
from .riccati import RiccatiSolution

KINDS = ("gamma", "gamma_bar", "xi", "psi", "upsilon")


def cumtrapz(values: np.ndarray, dt: float) -> np.ndarray:
    """Cumulative trapezoid integral from the left; out[0] = 0."""
    out = np.empty(values.shape[0])
    out[0] = 0.0
    np.cumsum(0.5 * dt * (values[1:] + values[:-1]), out=out[1:])
    return out


def reverse_cumtrapz(values: np.ndarray, dt: float) -> np.ndarray:
    """out[i] = trapezoid integral of values over [t_i, T]; out[-1] = 0."""
    left = cumtrapz(values, dt)
    return left[-1] - left


@dataclass(frozen=True)
class IntegratingFactorKernel:
    kind: str
    grid: TimeGrid
    log_factor: np.ndarray          # L on the nodes, L[0] = 0
    f2: np.ndarray | None = None    # stochastic-exponent samples (gamma/upsilon)

    def value(self, i: int, j: int) -> float:
        """Deterministic factor K(t_i, t_j), j >= i."""
        return float(np.exp(self.log_factor[j] - self.log_factor[i]))

    def terminal_factors(self) -> np.ndarray:
        """K(t_i, T) for every node i."""
        return np.exp(self.log_factor[-1] - self.log_factor)

    def integrate_forcing(self, forcing: np.ndarray) -> np.ndarray:
        """I_i = integral_{t_i}^T K(t_i, s) forcing(s) ds, trapezoid rule."""
        shift = float(np.max(self.log_factor))
        weighted = np.exp(self.log_factor - shift) * forcing
        return np.exp(shift - self.log_factor) * reverse_cumtrapz(weighted, self.grid.dt)

    def table(self) -> np.ndarray:
        """Dense K(t_i, t_j) for j >= i (zeros below the diagonal).

        Intended for inspection and small grids; the solvers use the
        cumulative representation.
        """
        diff = self.log_factor[None, :] - self.log_factor[:, None]
        return np.triu(np.exp(diff))

    def path_terminal_factor(self, dw2: np.ndarray) -> np.ndarray:
        """Pathwise K(0, T) including the Brownian exponent, one per path.

        Only the stochastic kinds carry the exponent; ``dw2`` has one row of
        increments per path.
        """
        if self.f2 is None:
            raise PatternMismatch(f"kernel kind {self.kind!r} has no stochastic part")
        dt = self.grid.dt
        ito = 0.5 * float(cumtrapz(self.f2 ** 2, dt)[-1])
        noise = dw2 @ self.f2[:-1]          # left-endpoint stochastic sum
        return np.exp(self.log_factor[-1] - self.log_factor[0] - ito + noise)


def build(kind: str, model: ValidatedModel, solution: RiccatiSolution) -> IntegratingFactorKernel:
    """Assemble a kernel of the given kind from solved gains."""
    if kind not in KINDS:
        raise ValueError(f"unknown kernel kind {kind!r}")
    tab = model.tab.node
    if kind in ("gamma", "gamma_bar"):
        rate = tab["a"] + tab["rho1"] * solution.alpha
    elif kind == "xi":
        if solution.gamma1 is None:
            raise PatternMismatch("xi kernel needs the gamma gains")
        rate = tab["a"] + tab["rho1"] * solution.gamma1
    elif kind == "psi":
        if solution.tau1 is None:
            raise PatternMismatch("psi kernel needs the tau gains")
        rate = tab["a"] + tab["rho2"] * solution.tau1
    else:  # upsilon
        if solution.gamma1 is None:
            raise PatternMismatch("upsilon kernel needs the gamma gains")
        rate = tab["a"] + tab["rho1"] * solution.gamma1

    log_factor = cumtrapz(rate, model.grid.dt)
    log_factor.setflags(write=False)
    f2 = tab["f2"] if kind in ("gamma", "upsilon") else None
    return IntegratingFactorKernel(kind=kind, grid=model.grid,
                                   log_factor=log_factor, f2=f2)
