"""Monte-Carlo and deterministic verification of the reconstructed equilibria.

Contents: cost estimation, the unilateral-deviation (stationarity) test, the
nested-Monte-Carlo filter check, a brute-force discrete Nash oracle for the
noise-free limit, and the information-value comparison between the symmetric
and full-vs-partial patterns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import equilibrium, kernels, riccati as riccati_mod
from .errors import NotAdapted, PatternMismatch, SingularSystem
from .model import InformationPattern, ValidatedModel
from .riccati import RiccatiSolution
from .stochastic import BrownianPathBatch, sample_brownian


def trapezoid_weights(steps: int, dt: float) -> np.ndarray:
    w = np.full(steps + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


# ---------------------------------------------------------------------------
# costs

@dataclass(frozen=True)
class CostReport:
    j1: float
    j2: float
    se1: float
    se2: float
    paths: int

    def lines(self) -> list[str]:
        return [f"J1={self.j1:.17g}", f"J1_SE={self.se1:.17g}",
                f"J2={self.j2:.17g}", f"J2_SE={self.se2:.17g}",
                f"paths={self.paths}"]


def cost_paths(model: ValidatedModel, real: equilibrium.EquilibriumRealization,
               player: int) -> np.ndarray:
    """Per-path cost of one player: trapezoid quadrature of the running
    integrand plus the initial penalty, halved."""
    tab = model.tab.node
    coeffs = model.coefficients
    if player == 1:
        l, target, m, n = tab["l1"], tab["k1"], tab["m1"], tab["n1"]
        r, h, u = coeffs.r1, coeffs.h1, real.u1
    elif player == 2:
        l, target, m, n = tab["l2"], tab["k2"], tab["m2"], tab["n2"]
        r, h, u = coeffs.r2, coeffs.h2, real.u2
    else:
        raise ValueError(f"player must be 1 or 2, got {player}")
    w = trapezoid_weights(model.grid.steps, model.grid.dt)
    integrand = l[None, :] * (real.y - target[None, :]) ** 2 \
        + m[None, :] * (u - n[None, :]) ** 2
    return 0.5 * (integrand @ w + r * (real.y[:, 0] - h) ** 2)


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    if len(values) < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))


def mc_cost(model: ValidatedModel, real: equilibrium.EquilibriumRealization) -> CostReport:
    """Monte-Carlo cost estimates with standard errors for both players."""
    j1, se1 = _mean_se(cost_paths(model, real, 1))
    j2, se2 = _mean_se(cost_paths(model, real, 2))
    return CostReport(j1=j1, se1=se1, j2=j2, se2=se2, paths=real.paths)


# ---------------------------------------------------------------------------
# stationarity (unilateral deviations)

@dataclass(frozen=True)
class StationarityReport:
    """Response of one player's cost to u_i + eps * phi for deterministic phi.

    The cost is exactly quadratic in eps: dJ(eps) = theta eps + kappa eps^2,
    with the curvature kappa deterministic and nonnegative.  ``theta`` is the
    Monte-Carlo estimate of the first-order coefficient, which vanishes at an
    equilibrium.
    """

    player: int
    theta: float
    theta_se: float
    kappa: float
    epsilons: tuple[float, ...]
    delta_j: tuple[float, ...]
    delta_j_se: tuple[float, ...]
    fit_theta: float
    fit_kappa: float
    fit_residual: float

    def stationary_within(self, nsigma: float = 3.0) -> bool:
        return abs(self.theta) <= nsigma * self.theta_se

    def lines(self) -> list[str]:
        out = [f"player={self.player}",
               f"theta={self.theta:.17g}", f"theta_SE={self.theta_se:.17g}",
               f"kappa={self.kappa:.17g}", f"fit_residual={self.fit_residual:.17g}"]
        for eps, dj, se in zip(self.epsilons, self.delta_j, self.delta_j_se):
            out.append(f"dJ({eps:g})={dj:.17g} SE={se:.17g}")
        return out


def response_profile(model: ValidatedModel, player: int, phi: np.ndarray) -> np.ndarray:
    """Deterministic state response D(t) = int_t^T K_a(t,s) b_i(s) phi(s) ds
    to a unit deterministic control deviation, where K_a is the plain drift
    kernel exp(int a)."""
    tab = model.tab.node
    kern = kernels.IntegratingFactorKernel(
        kind="drift", grid=model.grid,
        log_factor=kernels.cumtrapz(tab["a"], model.grid.dt))
    b = tab["b1"] if player == 1 else tab["b2"]
    return kern.integrate_forcing(b * phi)


def perturbation_test(model: ValidatedModel, real: equilibrium.EquilibriumRealization,
                      player: int, direction, epsilons) -> StationarityReport:
    """Exact quadratic cost response to a deterministic control deviation.

    ``direction`` is a callable of t or an array on the grid nodes;
    deterministic directions are admissible for every information pattern.
    The backward-equation shift is then deterministic with no extra
    martingale terms, so per path

        dJ(eps) = eps * lambda_path + eps^2 * kappa

    holds exactly; lambda is averaged over paths, kappa is deterministic.
    """
    ts = model.grid.nodes()
    if callable(direction):
        phi = np.asarray([float(direction(t)) for t in ts])
    else:
        phi = np.asarray(direction, dtype=float)
        if phi.ndim != 1:
            raise NotAdapted("perturbation directions must be deterministic "
                             "functions of time; per-path directions are not supported")
    if phi.shape != ts.shape:
        raise NotAdapted(f"direction has shape {phi.shape}, grid has {ts.shape}")
    epsilons = tuple(float(e) for e in epsilons)
    if not epsilons:
        raise ValueError("need at least one epsilon")

    tab = model.tab.node
    coeffs = model.coefficients
    if player == 1:
        l, target, m, n = tab["l1"], tab["k1"], tab["m1"], tab["n1"]
        r, h, u = coeffs.r1, coeffs.h1, real.u1
    elif player == 2:
        l, target, m, n = tab["l2"], tab["k2"], tab["m2"], tab["n2"]
        r, h, u = coeffs.r2, coeffs.h2, real.u2
    else:
        raise ValueError(f"player must be 1 or 2, got {player}")

    d = response_profile(model, player, phi)
    w = trapezoid_weights(model.grid.steps, model.grid.dt)

    lam_paths = (l[None, :] * (real.y - target[None, :]) * d[None, :]
                 + m[None, :] * (u - n[None, :]) * phi[None, :]) @ w \
        + r * (real.y[:, 0] - h) * d[0]
    kappa = 0.5 * float((l * d ** 2 + m * phi ** 2) @ w) + 0.5 * r * d[0] ** 2

    theta = float(lam_paths.mean())
    theta_se = float(lam_paths.std(ddof=1) / math.sqrt(len(lam_paths)))
    delta_j = tuple(eps * theta + eps ** 2 * kappa for eps in epsilons)
    delta_se = tuple(abs(eps) * theta_se for eps in epsilons)

    # quadratic fit over the table; residual certifies the exact-quadratic shape
    design = np.column_stack([epsilons, np.square(epsilons)])
    fit, *_ = np.linalg.lstsq(design, np.asarray(delta_j), rcond=None)
    predicted = design @ fit
    scale = max(float(np.max(np.abs(delta_j))), 1e-300)
    residual = float(np.max(np.abs(predicted - delta_j))) / scale

    return StationarityReport(player=player, theta=theta, theta_se=theta_se,
                              kappa=kappa, epsilons=epsilons, delta_j=delta_j,
                              delta_j_se=delta_se, fit_theta=float(fit[0]),
                              fit_kappa=float(fit[1]), fit_residual=residual)


def orthogonality_statistic(model: ValidatedModel, ric: RiccatiSolution,
                            real: equilibrium.EquilibriumRealization,
                            player: int, phi) -> tuple[float, float]:
    """Monte-Carlo estimate of the equilibrium orthogonality integral

        E integral (m_i (u_i - n_i) - b_i x_i) phi dt,

    the quantity whose vanishing characterises a best response.  Since the
    reconstructed control satisfies m_i (u_i - n_i) = b_i * (filtered state)
    by construction, the integrand reduces to b_i (filtered - adjoint), which
    is what is evaluated (trapezoid in t, mean and SE over paths).  For the
    full-information player the filtered state IS the adjoint state and the
    statistic vanishes identically.
    """
    ts = model.grid.nodes()
    phi = np.asarray([float(phi(t)) for t in ts]) if callable(phi) \
        else np.asarray(phi, dtype=float)
    tab = model.tab.node
    if player == 1:
        b = tab["b1"]
        filtered = {InformationPattern.SYMMETRIC_W2: real.x1tilde,
                    InformationPattern.FULL_VS_W2: real.x1,
                    InformationPattern.W1_VS_W2: real.x1hat}[real.pattern]
        adjoint = real.x1
    elif player == 2:
        b = tab["b2"]
        filtered, adjoint = real.x2tilde, real.x2
    else:
        raise ValueError(f"player must be 1 or 2, got {player}")
    w = trapezoid_weights(model.grid.steps, model.grid.dt)
    theta_paths = ((b * phi)[None, :] * (filtered - adjoint)) @ w
    return _mean_se(theta_paths)


# ---------------------------------------------------------------------------
# nested Monte-Carlo filter check

@dataclass(frozen=True)
class FilterCheckReport:
    checkpoint_indices: tuple[int, ...]
    times: tuple[float, ...]
    mc_mean: tuple[float, ...]
    predicted: tuple[float, ...]
    se: tuple[float, ...]
    inner_paths: int

    @property
    def deviations_over_se(self) -> tuple[float, ...]:
        return tuple(abs(m - p) / s if s > 0 else math.inf if m != p else 0.0
                     for m, p, s in zip(self.mc_mean, self.predicted, self.se))

    def within(self, nsigma: float = 3.0) -> int:
        """Number of checkpoints whose deviation is inside nsigma."""
        return sum(1 for dev in self.deviations_over_se if dev <= nsigma)

    def lines(self) -> list[str]:
        out = [f"inner_paths={self.inner_paths}",
               f"filter_maxdev_over_SE={max(self.deviations_over_se):.17g}"]
        for i, t, m, p, s in zip(self.checkpoint_indices, self.times,
                                 self.mc_mean, self.predicted, self.se):
            out.append(f"checkpoint[{i}] t={t:.6g} mean={m:.17g} "
                       f"predicted={p:.17g} SE={s:.17g}")
        return out


def filter_check(model: ValidatedModel, ric: RiccatiSolution,
                 w2_increments: np.ndarray, inner_count: int,
                 checkpoint_indices, seed: int, chunk: int = 2000) -> FilterCheckReport:
    """Freeze one w2 path, resample w1, and compare the adjoint-state mean
    against the predicted filter alpha1 ytilde + beta1.

    The inner samples only reach the system through the terminal value, so
    the conditional mean of x1 given the w2 path is exactly the filtered
    state; the Monte-Carlo mean must sit within sampling error of the
    prediction at each checkpoint.  Inner paths are processed in fixed-size
    chunks with a fixed reduction order, so the result is reproducible.
    """
    if model.pattern is not InformationPattern.SYMMETRIC_W2:
        raise PatternMismatch("the nested filter check runs on the symmetric "
                              "observation pattern")
    if inner_count < 1000:
        raise ValueError(f"need at least 1000 inner paths, got {inner_count}")
    n = model.grid.steps
    if w2_increments.shape != (n,):
        raise ValueError(f"w2 path must have {n} increments")
    checkpoint_indices = tuple(int(i) for i in checkpoint_indices)

    sums = np.zeros(len(checkpoint_indices))
    sumsq = np.zeros(len(checkpoint_indices))   # squared deviations from predicted
    predicted = None
    done = 0
    while done < inner_count:
        size = min(chunk, inner_count - done)
        inner = sample_brownian(model.grid, seed, size, start=done)
        batch = BrownianPathBatch(grid=model.grid, seed=inner.seed, dw1=inner.dw1,
                                  dw2=np.broadcast_to(w2_increments, (size, n)))
        real = equilibrium.reconstruct_case_i(model, ric, batch)
        if predicted is None:
            predicted = real.x1tilde[0, list(checkpoint_indices)].copy()
        x1 = real.x1[:, list(checkpoint_indices)]
        sums += (x1 - predicted[None, :]).sum(axis=0)
        sumsq += np.square(x1 - predicted[None, :]).sum(axis=0)
        done += size

    # shifted moments keep the variance exact when the samples coincide
    shifted_mean = sums / inner_count
    mean = predicted + shifted_mean
    var = (sumsq - inner_count * shifted_mean ** 2) / (inner_count - 1)
    se = np.sqrt(np.maximum(var, 0.0) / inner_count)
    ts = model.grid.nodes()
    return FilterCheckReport(
        checkpoint_indices=checkpoint_indices,
        times=tuple(float(ts[i]) for i in checkpoint_indices),
        mc_mean=tuple(float(v) for v in mean),
        predicted=tuple(float(v) for v in predicted),
        se=tuple(float(v) for v in se),
        inner_paths=inner_count)


def batch_mean_check(model: ValidatedModel, ric: RiccatiSolution,
                     real: equilibrium.EquilibriumRealization,
                     checkpoint_indices) -> FilterCheckReport:
    """Mean-level filter identity for the independent-observation pattern:
    the path average of x1 must match alpha1 Ey + beta1 at each checkpoint."""
    if real.pattern is not InformationPattern.W1_VS_W2:
        raise PatternMismatch("the batch-mean check runs on the "
                              "independent-observation pattern")
    idx = [int(i) for i in checkpoint_indices]
    x1 = real.x1[:, idx]
    mean = x1.mean(axis=0)
    se = x1.std(axis=0, ddof=1) / math.sqrt(real.paths)
    predicted = ric.alpha1[idx] * real.ymean[idx] + ric.beta1[idx]
    ts = model.grid.nodes()
    return FilterCheckReport(
        checkpoint_indices=tuple(idx), times=tuple(float(ts[i]) for i in idx),
        mc_mean=tuple(float(v) for v in mean),
        predicted=tuple(float(v) for v in predicted),
        se=tuple(float(v) for v in se), inner_paths=real.paths)


# ---------------------------------------------------------------------------
# deterministic brute-force oracle

@dataclass(frozen=True)
class OracleResult:
    u1: np.ndarray
    u2: np.ndarray
    j1: float
    j2: float
    y: np.ndarray


def deterministic_oracle(model: ValidatedModel) -> OracleResult:
    """Discrete open-loop Nash point of the noise-free game.

    Requires a fully deterministic scenario (affine terminal reduced to its
    constant, both diffusion couplings zero); every information pattern then
    collapses to the same problem.  The state follows the same
    right-endpoint recursion as the simulator,

        y_k = y_{k+1} + [a y + b1 v1 + b2 v2 + c]_{k+1} dt,    y_N = c0,

    so the decision variables are exactly the control samples the recursion
    reads, nodes 1..N; their running cost is the matching right-endpoint sum
    sum_j dt m_j (v_j - n_j)^2 while the state cost keeps the trapezoid
    weights.  The two players' first-order conditions form a coupled linear
    system solved en bloc.  The value at node 0 never enters the dynamics
    and its optimal value is the cost target, so u[0] = n(0) by convention.
    This is an independent check of the gain-based feedback construction.
    """
    term = model.terminal
    if term.c1 != 0.0 or term.c2 != 0.0:
        raise ValueError("oracle needs a deterministic terminal value (c1 = c2 = 0)")
    if model.f2_active or bool(np.any(model.tab.node["f1"] != 0.0)):
        raise ValueError("oracle needs both diffusion couplings to vanish")

    tab = model.tab.node
    coeffs = model.coefficients
    n = model.grid.steps
    dt = model.grid.dt
    a, b1, b2, cdrift = tab["a"], tab["b1"], tab["b2"], tab["c"]

    # prods[j] = prod_{m=1..j} (1 + a_m dt); propagator Q[k, j] carrying a
    # forcing applied in the step ending at node j back to node k < j.
    prods = np.concatenate([[1.0], np.cumprod(1.0 + a[1:] * dt)])
    numer = np.concatenate([[1.0], prods[:-1]])       # prods[j-1], j >= 1
    idx = np.arange(n + 1)
    reaches = idx[None, :] >= idx[:, None] + 1
    q = np.where(reaches, numer[None, :] / prods[:, None], 0.0)

    g1 = (dt * b1[None, :] * q)[:, 1:]      # (n+1) x n, decision nodes 1..N
    g2 = (dt * b2[None, :] * q)[:, 1:]
    ybar = (prods[-1] / prods) * term.c0 + q @ (dt * cdrift)

    w = trapezoid_weights(n, dt)

    def blocks(g_own, g_other, l, m, n_target, k_target, r, h):
        wl = w * l
        a_own = dt * np.diag(m[1:]) + g_own.T @ (wl[:, None] * g_own) \
            + r * np.outer(g_own[0], g_own[0])
        a_other = g_own.T @ (wl[:, None] * g_other) + r * np.outer(g_own[0], g_other[0])
        rhs = dt * m[1:] * n_target[1:] - g_own.T @ (wl * (ybar - k_target)) \
            - r * (ybar[0] - h) * g_own[0]
        return a_own, a_other, rhs

    a11, a12, d1 = blocks(g1, g2, tab["l1"], tab["m1"], tab["n1"], tab["k1"],
                          coeffs.r1, coeffs.h1)
    a22, a21, d2 = blocks(g2, g1, tab["l2"], tab["m2"], tab["n2"], tab["k2"],
                          coeffs.r2, coeffs.h2)

    system = np.block([[a11, a12], [a21, a22]])
    rhs = np.concatenate([d1, d2])
    try:
        sol = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"first-order-condition system is singular: {exc}") from None

    u1 = np.concatenate([[tab["n1"][0]], sol[:n]])
    u2 = np.concatenate([[tab["n2"][0]], sol[n:]])
    y = ybar + g1 @ u1[1:] + g2 @ u2[1:]

    def cost(l, m, n_target, k_target, r, h, u):
        run = float((l * (y - k_target) ** 2 + m * (u - n_target) ** 2) @ w)
        return 0.5 * (run + r * (y[0] - h) ** 2)

    j1 = cost(tab["l1"], tab["m1"], tab["n1"], tab["k1"], coeffs.r1, coeffs.h1, u1)
    j2 = cost(tab["l2"], tab["m2"], tab["n2"], tab["k2"], coeffs.r2, coeffs.h2, u2)
    return OracleResult(u1=u1, u2=u2, j1=j1, j2=j2, y=y)


# ---------------------------------------------------------------------------
# value of information

@dataclass(frozen=True)
class InformationValueReport:
    j1_symmetric: float
    j1_full_info: float
    difference: float       # J1(full info) - J1(symmetric), paired paths
    difference_se: float
    paths: int

    def lines(self) -> list[str]:
        return [f"J1_symmetric={self.j1_symmetric:.17g}",
                f"J1_full_info={self.j1_full_info:.17g}",
                f"info_value_diff={self.difference:.17g}",
                f"info_value_diff_SE={self.difference_se:.17g}",
                f"paths={self.paths}"]


def information_value(model: ValidatedModel, seed: int, paths: int) -> InformationValueReport:
    """Run the symmetric and full-vs-partial reconstructions on identical
    path batches and compare player 1's cost.

    Player 2's control is the same process under both patterns; player 1's
    full-information response cannot do worse, so the paired difference
    should not exceed sampling error above zero.
    """
    model_i = model.with_pattern(InformationPattern.SYMMETRIC_W2)
    model_ii = model.with_pattern(InformationPattern.FULL_VS_W2)
    batch = sample_brownian(model.grid, seed, paths)

    real_i = equilibrium.reconstruct_case_i(model_i, riccati_mod.solve(model_i), batch)
    j1_i = cost_paths(model_i, real_i, 1)
    del real_i
    real_ii = equilibrium.reconstruct_case_ii(model_ii, riccati_mod.solve(model_ii), batch)
    j1_ii = cost_paths(model_ii, real_ii, 1)

    diff = j1_ii - j1_i
    return InformationValueReport(
        j1_symmetric=float(j1_i.mean()), j1_full_info=float(j1_ii.mean()),
        difference=float(diff.mean()),
        difference_se=float(diff.std(ddof=1) / math.sqrt(paths)),
        paths=paths)


# ---------------------------------------------------------------------------
# pathwise diagnostics shared by tests and the CLI suites

def ansatz_sup_gaps(model: ValidatedModel, ric: RiccatiSolution,
                    real: equilibrium.EquilibriumRealization,
                    batch: BrownianPathBatch | None = None) -> dict[str, np.ndarray]:
    """Per-path sup-norm residuals of the affine state representations.

    Symmetric pattern: sup_t |x_i - (alpha_i y + beta_i)| for both adjoints.
    Full-vs-partial: the gamma representation against an independently
    forward-integrated x1 (``batch`` required).
    """
    from .stochastic import forward_sde

    if real.pattern is InformationPattern.SYMMETRIC_W2:
        gap1 = real.x1 - (ric.alpha1[None, :] * real.y + ric.beta1[None, :])
        gap2 = real.x2 - (ric.alpha2[None, :] * real.y + ric.beta2[None, :])
        return {"x1": np.max(np.abs(gap1), axis=1), "x2": np.max(np.abs(gap2), axis=1)}
    if real.pattern is InformationPattern.FULL_VS_W2:
        if batch is None:
            raise ValueError("full-vs-partial residuals need the path batch")
        x1_forward = forward_sde(model, batch, real.y, "x1")
        gap = x1_forward - real.x1
        return {"x1": np.max(np.abs(gap), axis=1)}
    raise PatternMismatch("pathwise residuals are defined for the diffusion-"
                          "coupled patterns")


def aggregate_filter_gap(ric: RiccatiSolution,
                         real: equilibrium.EquilibriumRealization) -> float:
    """max_t |xtilde1 + xtilde2 - (alpha ytilde + beta)|, an algebraic
    identity of the split gains (exact up to rounding)."""
    lhs = real.x1tilde + real.x2tilde
    rhs = ric.alpha[None, :] * real.ytilde + ric.beta[None, :]
    return float(np.max(np.abs(lhs - rhs)))
