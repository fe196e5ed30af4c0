"""Reproducible Brownian batches and the pathwise integrators.

Randomness contract: path p of a batch is a pure function of (master seed, p).
Each path owns a Philox counter-based stream keyed by (seed, p); uniforms are
drawn as (k + 1/2) / 2^53 from 53-bit integers (never exactly 0 or 1) and
mapped through the inverse normal CDF, so every batch is bit-stable across
runs, platforms and path counts.

Integrators:

* :func:`forward_sde` -- Euler-Maruyama for the adjoint states
  dx_i = [a x_i - l_i (y - k_i)] dt + f1 x_i dw1 + f2 x_i dw2 with the
  initial value x_i(0) = -r_i (y(0) - h_i) read off the supplied y path.
* :func:`backward_bsde_affine` -- pathwise backward recursion for backward
  equations whose drift is affine in the value and whose second martingale
  integrand is pinned to z2(t, v) = s(t) v + o(t):

      v_k = v_{k+1} + drift(t_{k+1}, v_{k+1}) dt - z2(t_{k+1}, v_{k+1}) dW2_k.

  Coefficients sit at the right endpoint of each step, anchoring the
  terminal value exactly; the first martingale integrand is zero in the
  patterns that use this routine.
* :func:`propagate_affine` -- exact affine-in-(w1, w2) representations for
  the diffusion-free independent-observation pattern.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import kernels, ode
from .errors import GridMismatch, PatternMismatch
from .model import InformationPattern, TimeGrid, ValidatedModel
from .riccati import RiccatiSolution

_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


@dataclass(frozen=True)
class BrownianPathBatch:
    """Increments of a two-dimensional Brownian motion on a uniform grid.

    ``dw1`` and ``dw2`` have shape (paths, steps) and units sqrt(time).
    """

    grid: TimeGrid
    seed: int
    dw1: np.ndarray
    dw2: np.ndarray

    @property
    def paths(self) -> int:
        return self.dw1.shape[0]

    def w1(self) -> np.ndarray:
        """Cumulative w1 values on the nodes, shape (paths, steps + 1)."""
        return _cumulate(self.dw1)

    def w2(self) -> np.ndarray:
        return _cumulate(self.dw2)

    def coarsened(self, factor: int) -> "BrownianPathBatch":
        """Aggregate increments onto a grid ``factor`` times coarser.

        The coarse batch drives the same Brownian paths at lower resolution,
        which is what strong-refinement studies compare against.
        """
        if self.grid.steps % factor:
            raise GridMismatch(f"steps {self.grid.steps} not divisible by {factor}")
        coarse = TimeGrid(self.grid.horizon, self.grid.steps // factor)
        shape = (self.paths, coarse.steps, factor)
        return BrownianPathBatch(grid=coarse, seed=self.seed,
                                 dw1=self.dw1.reshape(shape).sum(axis=2),
                                 dw2=self.dw2.reshape(shape).sum(axis=2))


def _cumulate(dw: np.ndarray) -> np.ndarray:
    paths, steps = dw.shape
    out = np.empty((paths, steps + 1))
    out[:, 0] = 0.0
    np.cumsum(dw, axis=1, out=out[:, 1:])
    return out


def _gaussian_increments(seed: int, path_index: int, n: int, dt: float) -> np.ndarray:
    key = np.array([seed, path_index], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    u = (gen.integers(0, 1 << 53, size=n).astype(np.float64) + 0.5) * _INV_2_53
    return ndtri(u) * np.sqrt(dt)


def sample_brownian(grid: TimeGrid, seed: int, count: int,
                    start: int = 0) -> BrownianPathBatch:
    """Draw ``count`` independent two-dimensional Brownian paths.

    Row j holds path number ``start + j``; because every path is keyed by its
    own number, chunked generation (several calls with increasing ``start``)
    reproduces a single large batch exactly.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    n = grid.steps
    dw1 = np.empty((count, n))
    dw2 = np.empty((count, n))
    for j in range(count):
        z = _gaussian_increments(seed, start + j, 2 * n, grid.dt)
        dw1[j] = z[:n]
        dw2[j] = z[n:]
    dw1.setflags(write=False)
    dw2.setflags(write=False)
    return BrownianPathBatch(grid=grid, seed=seed, dw1=dw1, dw2=dw2)


def forward_sde(model: ValidatedModel, batch: BrownianPathBatch,
                y: np.ndarray, which: str) -> np.ndarray:
    """Euler-Maruyama for one adjoint state along given y paths.

    ``which`` is "x1" or "x2"; y has shape (paths, steps + 1) and shares the
    batch grid.  Returns the state on the same shape.
    """
    if which not in ("x1", "x2"):
        raise ValueError(f"which must be 'x1' or 'x2', got {which!r}")
    n = model.grid.steps
    if y.shape != (batch.paths, n + 1) or batch.grid != model.grid:
        raise GridMismatch("y array and batch must live on the model grid")
    tab = model.tab.node
    a, f1, f2 = tab["a"], tab["f1"], tab["f2"]
    if which == "x1":
        l, target, r, h = tab["l1"], tab["k1"], model.coefficients.r1, model.coefficients.h1
    else:
        l, target, r, h = tab["l2"], tab["k2"], model.coefficients.r2, model.coefficients.h2

    dt = model.grid.dt
    x = np.empty_like(y)
    x[:, 0] = -r * (y[:, 0] - h)
    for k in range(n):
        xk = x[:, k]
        drift = a[k] * xk - l[k] * (y[:, k] - target[k])
        x[:, k + 1] = xk + drift * dt + f1[k] * xk * batch.dw1[:, k] + f2[k] * xk * batch.dw2[:, k]
    return x


def backward_bsde_affine(grid: TimeGrid, dw2: np.ndarray, terminal: np.ndarray,
                         drift_slope: np.ndarray, drift_offset: np.ndarray,
                         z_slope: np.ndarray, z_offset: np.ndarray):
    """Backward pathwise recursion with affine drift and pinned z2.

    Parameters
    ----------
    dw2 : (paths, steps) increments of the driving coordinate.
    terminal : scalar or (paths,) terminal values; reproduced exactly.
    drift_slope : (steps+1,) coefficient of the value in the drift.
    drift_offset : (steps+1,) or (paths, steps+1) drift forcing.
    z_slope, z_offset : (steps+1,) so that z2(t, v) = z_slope v + z_offset.

    Returns
    -------
    (values, z2) both of shape (paths, steps + 1); values[:, -1] is the
    supplied terminal bit-exactly.
    """
    paths, n = dw2.shape
    if n != grid.steps:
        raise GridMismatch(f"dw2 has {n} steps, grid has {grid.steps}")
    for arr, wants in ((drift_slope, (n + 1,)), (z_slope, (n + 1,)), (z_offset, (n + 1,))):
        if np.shape(arr) != wants:
            raise GridMismatch(f"coefficient array has shape {np.shape(arr)}, expected {wants}")
    offset = np.asarray(drift_offset, dtype=float)
    if offset.ndim == 1:
        if offset.shape != (n + 1,):
            raise GridMismatch(f"drift_offset has shape {offset.shape}")
        offset = np.broadcast_to(offset, (paths, n + 1))
    elif offset.shape != (paths, n + 1):
        raise GridMismatch(f"drift_offset has shape {offset.shape}")

    dt = grid.dt
    values = np.empty((paths, n + 1))
    values[:, n] = terminal
    for k in range(n - 1, -1, -1):
        v = values[:, k + 1]
        drift = drift_slope[k + 1] * v + offset[:, k + 1]
        z2 = z_slope[k + 1] * v + z_offset[k + 1]
        values[:, k] = v + drift * dt - z2 * dw2[:, k]
    z2_grid = z_slope[None, :] * values + z_offset[None, :]
    return values, z2_grid


@dataclass(frozen=True)
class AffineState:
    """Process of the form value(t) = p(t) + q1(t) w1(t) + q2(t) w2(t).

    The q coefficients double as the martingale-representation integrands of
    the process.
    """

    p: np.ndarray
    q1: np.ndarray
    q2: np.ndarray

    def evaluate(self, w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
        """Sample the process along cumulated Brownian paths (paths, N+1)."""
        return self.p[None, :] + self.q1[None, :] * w1 + self.q2[None, :] * w2


def propagate_affine(model: ValidatedModel, solution: RiccatiSolution) -> dict[str, AffineState]:
    """Exact affine representations for the independent-observation pattern.

    With both diffusion couplings zero the filtered states are affine in the
    currently observed Brownian coordinate:

    * ``ymean``: E y(t), by quadrature against the aggregate kernel,
    * ``yhat``:  the w1-filter, q1(t) = c1 K_xi(t, T),
    * ``ytilde``: the w2-filter, q2(t) = c2 K_psi(t, T),
    * ``y``: the state itself; its coefficient functions solve the linear
      backward equations -p' = a p + A(t), -q_j' = a q_j + B_j(t) obtained by
      projecting the drift (affine in w1(t), w2(t)) on {1, w1, w2}, advanced
      by the same fourth-order scheme as the gain systems.

    The q arrays of ``y`` are the two martingale integrands of the state.
    """
    if model.pattern is not InformationPattern.W1_VS_W2:
        raise PatternMismatch("affine propagation serves the "
                              "independent-observation pattern only")
    tab = model.tab.node
    term = model.terminal
    rho1, rho2, s_common = tab["rho1"], tab["rho2"], tab["s"]
    zeros = np.zeros(model.grid.steps + 1)

    kern_bar = kernels.build("gamma_bar", model, solution)
    ymean = kern_bar.terminal_factors() * term.c0 \
        + kern_bar.integrate_forcing(rho1 * solution.beta + s_common)

    g3 = (rho2 * solution.alpha2 + rho1 * solution.gamma2) * ymean \
        + rho1 * solution.gamma3 + rho2 * solution.beta2 + s_common
    kern_xi = kernels.build("xi", model, solution)
    yhat = AffineState(p=kern_xi.terminal_factors() * term.c0
                       + kern_xi.integrate_forcing(g3),
                       q1=term.c1 * kern_xi.terminal_factors(),
                       q2=zeros)

    g4 = (rho2 * solution.tau2 + rho1 * solution.alpha1) * ymean \
        + rho1 * solution.beta1 + rho2 * solution.tau3 + s_common
    kern_psi = kernels.build("psi", model, solution)
    ytilde = AffineState(p=kern_psi.terminal_factors() * term.c0
                         + kern_psi.integrate_forcing(g4),
                         q1=zeros,
                         q2=term.c2 * kern_psi.terminal_factors())

    x1hat_mean = solution.gamma1 * yhat.p + solution.gamma2 * ymean + solution.gamma3
    x2tilde_mean = solution.tau1 * ytilde.p + solution.tau2 * ymean + solution.tau3
    drift_const = rho1 * x1hat_mean + rho2 * x2tilde_mean + s_common
    drift_w1 = rho1 * solution.gamma1 * yhat.q1
    drift_w2 = rho2 * solution.tau1 * ytilde.q2

    a = tab["a"]
    dt = model.grid.dt
    y_state = AffineState(
        p=ode.solve_linear_backward(a, drift_const, term.c0, dt, name="y mean part"),
        q1=ode.solve_linear_backward(a, drift_w1, term.c1, dt, name="y w1 part"),
        q2=ode.solve_linear_backward(a, drift_w2, term.c2, dt, name="y w2 part"),
    )

    return {"ymean": AffineState(p=ymean, q1=zeros, q2=zeros),
            "yhat": yhat, "ytilde": ytilde, "y": y_state}
