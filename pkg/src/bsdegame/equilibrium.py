"""Per-pattern reconstruction of the feedback Nash equilibrium.

Every pattern shares one backbone: the w2-filter pair

    -d ytilde = [(a + rho1 alpha) ytilde + f2 ztilde2 + rho1 beta + s] dt
                - ztilde2 dw2,        ytilde(T) = E(xi | w2-history),

integrated backward pathwise with the pinned integrand
ztilde2 = f2 ytilde + f2 beta1/alpha1, the filtered adjoint states
xtilde_i = alpha_i ytilde + beta_i, and player 2's control
u2 = (b2/m2) xtilde_2 + n2.  The patterns then differ in player 1's
information:

* symmetric (both observe w2): u1 = (b1/m1)(alpha1 ytilde + beta1) + n1 and
  the state y integrates the original backward equation with the filtered
  adjoints substituted and z1 = 0, z2 = f2 y + f2 beta1/alpha1.
* full vs partial: player 1 feeds back on the state itself through
  x1 = gamma1 y + gamma2 ytilde + gamma3, where y integrates backward with
  z2 = f2 y + f2 gamma3/gamma1 - f2 gamma2 beta2 / (gamma1 alpha2).
* independent observations (f2 = 0): everything is affine in (w1, w2) and
  comes from :func:`bsdegame.stochastic.propagate_affine`; the controls feed
  back on x1hat = gamma1 yhat + gamma2 Ey + gamma3 and
  x2tilde = tau1 ytilde + tau2 Ey + tau3.

Reconstruction is path-parallel (vectorised over the batch); gain arrays are
shared read-only.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import stochastic
from .errors import PatternMismatch
from .model import ConditioningMode, InformationPattern, ValidatedModel, conditional_terminal
from .riccati import RiccatiSolution
from .stochastic import BrownianPathBatch, backward_bsde_affine, forward_sde

CSV_COLUMNS = ("y", "ytilde", "yhat", "ymean", "x1", "x2",
               "x1tilde", "x2tilde", "x1hat", "z1", "z2", "u1", "u2")


@dataclass(frozen=True)
class EquilibriumRealization:
    """Simulated equilibrium quantities; fields the pattern does not define
    are None.  Two-dimensional arrays are (paths, steps + 1); deterministic
    quantities (ymean, the affine-case z's) are stored once, shape (steps+1,)."""

    pattern: InformationPattern
    paths: int
    y: np.ndarray
    ytilde: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    yhat: np.ndarray | None = None
    ymean: np.ndarray | None = None
    x1tilde: np.ndarray | None = None
    x2tilde: np.ndarray | None = None
    x1hat: np.ndarray | None = None
    z1: np.ndarray | None = None
    z2: np.ndarray | None = None
    z2tilde: np.ndarray | None = None


def terminal_values(model: ValidatedModel, batch: BrownianPathBatch) -> np.ndarray:
    """xi per path: c0 + c1 w1(T) + c2 w2(T)."""
    term = model.terminal
    return term.c0 + term.c1 * batch.w1()[:, -1] + term.c2 * batch.w2()[:, -1]


def _feedback(b: np.ndarray, m: np.ndarray, n: np.ndarray, state: np.ndarray) -> np.ndarray:
    """Control law u = (b/m) state + n, broadcast over paths."""
    return (b / m)[None, :] * state + n[None, :]


def _z_pair_symmetric(model: ValidatedModel, ric: RiccatiSolution):
    """Slope and offset of z2(t, v) = f2 v + f2 beta1/alpha1; zeros when f2
    vanishes identically (no ratio is formed then)."""
    n1 = model.grid.steps + 1
    if not model.f2_active:
        z = np.zeros(n1)
        return z, z
    f2 = model.tab.node["f2"]
    alpha1 = ric.negative_on_horizon("alpha1")
    return f2.copy(), f2 * ric.beta1 / alpha1


def _z_pair_full_info(model: ValidatedModel, ric: RiccatiSolution):
    """z2(t, v) = f2 v + f2 gamma3/gamma1 - f2 gamma2 beta2/(gamma1 alpha2)."""
    n1 = model.grid.steps + 1
    if not model.f2_active:
        z = np.zeros(n1)
        return z, z
    f2 = model.tab.node["f2"]
    gamma1 = ric.negative_on_horizon("gamma1")
    alpha2 = ric.negative_on_horizon("alpha2")
    offset = f2 * ric.gamma3 / gamma1 - f2 * ric.gamma2 * ric.beta2 / (gamma1 * alpha2)
    return f2.copy(), offset


def _tilde_block(model: ValidatedModel, ric: RiccatiSolution, batch: BrownianPathBatch):
    """The shared w2-filter pipeline: ytilde, filtered adjoints, u2.

    Identical code path for the symmetric and full-vs-partial patterns, so
    the resulting u2 trajectories agree bit for bit across them.
    """
    tab = model.tab.node
    z_slope, z_offset = _z_pair_symmetric(model, ric)
    drift_slope = tab["a"] + tab["rho1"] * ric.alpha + tab["f2"] * z_slope
    drift_offset = tab["rho1"] * ric.beta + tab["s"] + tab["f2"] * z_offset
    term_tilde = conditional_terminal(model.terminal, batch.w2()[:, -1],
                                      ConditioningMode.GIVEN_W2)
    ytilde, z2tilde = backward_bsde_affine(model.grid, batch.dw2, term_tilde,
                                           drift_slope, drift_offset,
                                           z_slope, z_offset)
    x1tilde = ric.alpha1[None, :] * ytilde + ric.beta1[None, :]
    x2tilde = ric.alpha2[None, :] * ytilde + ric.beta2[None, :]
    u2 = _feedback(tab["b2"], tab["m2"], tab["n2"], x2tilde)
    return ytilde, z2tilde, x1tilde, x2tilde, u2, (z_slope, z_offset)


def reconstruct_case_i(model: ValidatedModel, ric: RiccatiSolution,
                       batch: BrownianPathBatch) -> EquilibriumRealization:
    """Symmetric observation: both players feed back on the w2-filter."""
    if model.pattern is not InformationPattern.SYMMETRIC_W2:
        raise PatternMismatch(f"model pattern is {model.pattern.value}")
    tab = model.tab.node
    ytilde, z2tilde, x1tilde, x2tilde, u2, (z_slope, z_offset) = \
        _tilde_block(model, ric, batch)

    drift_slope = tab["a"] + tab["f2"] * z_slope
    drift_offset = tab["rho1"][None, :] * x1tilde + tab["rho2"][None, :] * x2tilde \
        + (tab["s"] + tab["f2"] * z_offset)[None, :]
    y, z2 = backward_bsde_affine(model.grid, batch.dw2, terminal_values(model, batch),
                                 drift_slope, drift_offset, z_slope, z_offset)

    x1 = forward_sde(model, batch, y, "x1")
    x2 = forward_sde(model, batch, y, "x2")
    u1 = _feedback(tab["b1"], tab["m1"], tab["n1"], x1tilde)
    return EquilibriumRealization(
        pattern=model.pattern, paths=batch.paths, y=y, ytilde=ytilde,
        u1=u1, u2=u2, x1=x1, x2=x2, x1tilde=x1tilde, x2tilde=x2tilde,
        z1=np.zeros(model.grid.steps + 1), z2=z2, z2tilde=z2tilde)


def reconstruct_case_ii(model: ValidatedModel, ric: RiccatiSolution,
                        batch: BrownianPathBatch) -> EquilibriumRealization:
    """Full vs partial observation: player 1 feeds back on the state."""
    if model.pattern is not InformationPattern.FULL_VS_W2:
        raise PatternMismatch(f"model pattern is {model.pattern.value}")
    tab = model.tab.node
    ytilde, z2tilde, x1tilde, x2tilde, u2, _ = _tilde_block(model, ric, batch)

    z_slope, z_offset = _z_pair_full_info(model, ric)
    drift_slope = tab["a"] + tab["rho1"] * ric.gamma1 + tab["f2"] * z_slope
    drift_offset = (tab["rho1"] * ric.gamma2 + tab["rho2"] * ric.alpha2)[None, :] * ytilde \
        + (tab["rho1"] * ric.gamma3 + tab["rho2"] * ric.beta2
           + tab["s"] + tab["f2"] * z_offset)[None, :]
    y, z2 = backward_bsde_affine(model.grid, batch.dw2, terminal_values(model, batch),
                                 drift_slope, drift_offset, z_slope, z_offset)

    x1 = ric.gamma1[None, :] * y + ric.gamma2[None, :] * ytilde + ric.gamma3[None, :]
    x2 = forward_sde(model, batch, y, "x2")
    u1 = _feedback(tab["b1"], tab["m1"], tab["n1"], x1)
    return EquilibriumRealization(
        pattern=model.pattern, paths=batch.paths, y=y, ytilde=ytilde,
        u1=u1, u2=u2, x1=x1, x2=x2, x1tilde=x1tilde, x2tilde=x2tilde,
        z1=np.zeros(model.grid.steps + 1), z2=z2, z2tilde=z2tilde)


def reconstruct_case_iii(model: ValidatedModel, ric: RiccatiSolution,
                         batch: BrownianPathBatch) -> EquilibriumRealization:
    """Independent observations: affine states, filters on w1 and w2."""
    if model.pattern is not InformationPattern.W1_VS_W2:
        raise PatternMismatch(f"model pattern is {model.pattern.value}")
    tab = model.tab.node
    states = stochastic.propagate_affine(model, ric)
    w1, w2 = batch.w1(), batch.w2()

    ymean = states["ymean"].p
    yhat = states["yhat"].evaluate(w1, w2)
    ytilde = states["ytilde"].evaluate(w1, w2)
    y = states["y"].evaluate(w1, w2)

    x1hat = ric.gamma1[None, :] * yhat + (ric.gamma2 * ymean + ric.gamma3)[None, :]
    x2tilde = ric.tau1[None, :] * ytilde + (ric.tau2 * ymean + ric.tau3)[None, :]
    x1 = forward_sde(model, batch, y, "x1")
    x2 = forward_sde(model, batch, y, "x2")
    u1 = _feedback(tab["b1"], tab["m1"], tab["n1"], x1hat)
    u2 = _feedback(tab["b2"], tab["m2"], tab["n2"], x2tilde)
    return EquilibriumRealization(
        pattern=model.pattern, paths=batch.paths, y=y, ytilde=ytilde, yhat=yhat,
        ymean=ymean, u1=u1, u2=u2, x1=x1, x2=x2, x2tilde=x2tilde, x1hat=x1hat,
        z1=states["y"].q1, z2=states["y"].q2)


_RECONSTRUCT = {
    InformationPattern.SYMMETRIC_W2: reconstruct_case_i,
    InformationPattern.FULL_VS_W2: reconstruct_case_ii,
    InformationPattern.W1_VS_W2: reconstruct_case_iii,
}


def reconstruct(model: ValidatedModel, ric: RiccatiSolution,
                batch: BrownianPathBatch) -> EquilibriumRealization:
    """Dispatch on the model's information pattern."""
    return _RECONSTRUCT[model.pattern](model, ric, batch)


def open_loop_controls(model: ValidatedModel, real: EquilibriumRealization):
    """Recompute the controls from the filtered adjoint states.

    This is the open-loop characterisation u_i = (b_i/m_i) E(x_i | own
    information) + n_i evaluated on the stored filtered states; it traverses
    the same arithmetic as the feedback assembly, so the caller can assert
    bitwise equality against the stored controls.
    """
    tab = model.tab.node
    if real.pattern is InformationPattern.SYMMETRIC_W2:
        filtered1 = real.x1tilde
    elif real.pattern is InformationPattern.FULL_VS_W2:
        filtered1 = real.x1          # full information: the filter is x1 itself
    else:
        filtered1 = real.x1hat
    u1 = _feedback(tab["b1"], tab["m1"], tab["n1"], filtered1)
    u2 = _feedback(tab["b2"], tab["m2"], tab["n2"], real.x2tilde)
    return u1, u2


def _cell(arr, p: int, k: int) -> str:
    if arr is None:
        return ""
    if arr.ndim == 1:
        return f"{arr[k]:.17g}"
    return f"{arr[p, k]:.17g}"


def write_csv(real: EquilibriumRealization, model: ValidatedModel,
              stream: io.TextIOBase, header_lines: tuple[str, ...] = (),
              max_paths: int | None = None) -> None:
    """Rows path,t,<columns>; fields the pattern does not define are empty."""
    for line in header_lines:
        stream.write(f"# {line}\n")
    stream.write("path,t," + ",".join(CSV_COLUMNS) + "\n")
    ts = model.grid.nodes()
    count = real.paths if max_paths is None else min(max_paths, real.paths)
    for p in range(count):
        for k, t in enumerate(ts):
            cells = [str(p), f"{t:.17g}"]
            cells += [_cell(getattr(real, name), p, k) for name in CSV_COLUMNS]
            stream.write(",".join(cells) + "\n")
