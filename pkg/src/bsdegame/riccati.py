"""Time-dependent feedback gains: the quadratic ODE systems of each pattern.

With rho_i = b_i^2 / m_i and s = b1 n1 + b2 n2 + c, the gains solve, forward
from t = 0 (all initial data live at 0, not T):

aggregate pair (both patterns with shared w2 observation):

    alpha' = rho1 alpha^2 + (2a + f2^2) alpha - (l1 + l2),  alpha(0) = -(r1+r2)
    beta'  = (a + rho1 alpha + f2^2) beta + s alpha + l1 k1 + l2 k2,
                                                beta(0) = r1 h1 + r2 h2

per-player split of the aggregate (alpha = alpha1 + alpha2, beta = beta1 + beta2):

    alpha_i' = (2a + f2^2 + rho_i alpha) alpha_i - l_i,     alpha_i(0) = -r_i
    beta_1'  = (a + f2^2) beta_1 + rho2 alpha1 beta + s alpha1 + l1 k1
    beta_2'  = (a + f2^2) beta_2 + rho1 alpha2 beta + s alpha2 + l2 k2

full-information player 1 (own-state gain and its couplings):

    gamma1' = rho1 gamma1^2 + (2a + f2^2) gamma1 - l1,      gamma1(0) = -r1
    gamma2' = (2a + rho1 alpha + f2^2 + rho1 gamma1) gamma2
              + rho2 alpha2 gamma1,                          gamma2(0) = 0
    gamma3' = (a + f2^2 + rho1 gamma1) gamma3 + (s + rho2 beta2) gamma1
              + (s + rho1 beta) gamma2 + l1 k1,              gamma3(0) = r1 h1

independent observations, player 2 (f2 = 0 in force):

    tau1' = rho2 tau1^2 + 2a tau1 - l2,                      tau1(0) = -r2
    tau2' = (2a + rho1 alpha + rho2 tau1) tau2 + rho1 alpha1 tau1, tau2(0) = 0
    tau3' = (a + rho2 tau1) tau3 + (s + rho1 beta1) tau1
            + (s + rho1 beta) tau2 + l2 k2,                  tau3(0) = r2 h2

The coupled per-player pair system (the form in which the split gains are
usually stated, with the cross products rho2 alpha1 alpha2 etc.) is never
integrated directly; :func:`coupled_residuals` certifies that the split
solutions satisfy it, which is exactly the uniqueness argument that justifies
the decomposition.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import ode
from .errors import GridMismatch, PatternMismatch, SingularRatio
from .model import InformationPattern, TimeGrid, ValidatedModel


class _Row(NamedTuple):
    a: float
    f2sq: float
    rho1: float
    rho2: float
    l1: float
    l2: float
    s: float
    l1k1: float
    l2k2: float


_ROW_FIELDS = _Row._fields


def _rows(model: ValidatedModel):
    node_tab, mid_tab = model.tab.node, model.tab.mid
    rows_node = [_Row(*(float(node_tab[f][k]) for f in _ROW_FIELDS))
                 for k in range(len(node_tab["a"]))]
    rows_mid = [_Row(*(float(mid_tab[f][k]) for f in _ROW_FIELDS))
                for k in range(len(mid_tab["a"]))]
    return rows_node, rows_mid


# Derivative of each gain given the row and the current values of whatever
# other gains ride along in the same integration.
_DERIV = {
    "alpha": lambda r, v: (r.rho1 * v["alpha"] ** 2 + (2.0 * r.a + r.f2sq) * v["alpha"]
                           - (r.l1 + r.l2)),
    "alpha1": lambda r, v: (2.0 * r.a + r.f2sq + r.rho1 * v["alpha"]) * v["alpha1"] - r.l1,
    "alpha2": lambda r, v: (2.0 * r.a + r.f2sq + r.rho2 * v["alpha"]) * v["alpha2"] - r.l2,
    "beta": lambda r, v: ((r.a + r.rho1 * v["alpha"] + r.f2sq) * v["beta"]
                          + r.s * v["alpha"] + r.l1k1 + r.l2k2),
    "beta1": lambda r, v: ((r.a + r.f2sq) * v["beta1"] + r.rho2 * v["alpha1"] * v["beta"]
                           + r.s * v["alpha1"] + r.l1k1),
    "beta2": lambda r, v: ((r.a + r.f2sq) * v["beta2"] + r.rho1 * v["alpha2"] * v["beta"]
                           + r.s * v["alpha2"] + r.l2k2),
    "gamma1": lambda r, v: (r.rho1 * v["gamma1"] ** 2 + (2.0 * r.a + r.f2sq) * v["gamma1"]
                            - r.l1),
    "gamma2": lambda r, v: ((2.0 * r.a + r.rho1 * v["alpha"] + r.f2sq
                             + r.rho1 * v["gamma1"]) * v["gamma2"]
                            + r.rho2 * v["alpha2"] * v["gamma1"]),
    "gamma3": lambda r, v: ((r.a + r.f2sq + r.rho1 * v["gamma1"]) * v["gamma3"]
                            + (r.s + r.rho2 * v["beta2"]) * v["gamma1"]
                            + (r.s + r.rho1 * v["beta"]) * v["gamma2"] + r.l1k1),
    "tau1": lambda r, v: r.rho2 * v["tau1"] ** 2 + 2.0 * r.a * v["tau1"] - r.l2,
    "tau2": lambda r, v: ((2.0 * r.a + r.rho1 * v["alpha"] + r.rho2 * v["tau1"]) * v["tau2"]
                          + r.rho1 * v["alpha1"] * v["tau1"]),
    "tau3": lambda r, v: ((r.a + r.rho2 * v["tau1"]) * v["tau3"]
                          + (r.s + r.rho1 * v["beta1"]) * v["tau1"]
                          + (r.s + r.rho1 * v["beta"]) * v["tau2"] + r.l2k2),
}

_INITIAL = {
    "alpha": lambda c: -(c.r1 + c.r2),
    "alpha1": lambda c: -c.r1,
    "alpha2": lambda c: -c.r2,
    "beta": lambda c: c.r1 * c.h1 + c.r2 * c.h2,
    "beta1": lambda c: c.r1 * c.h1,
    "beta2": lambda c: c.r2 * c.h2,
    "gamma1": lambda c: -c.r1,
    "gamma2": lambda c: 0.0,
    "gamma3": lambda c: c.r1 * c.h1,
    "tau1": lambda c: -c.r2,
    "tau2": lambda c: 0.0,
    "tau3": lambda c: c.r2 * c.h2,
}

GAIN_NAMES = ("alpha1", "beta1", "alpha2", "beta2", "alpha", "beta",
              "gamma1", "gamma2", "gamma3", "tau1", "tau2", "tau3")


def _integrate(model: ValidatedModel, fields: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Jointly integrate the named gains; component arithmetic is elementwise,
    so each gain comes out bit-identical no matter which companions ride
    along."""
    rows_node, rows_mid = _rows(model)
    derivs = [_DERIV[f] for f in fields]

    def rhs(row, y):
        v = dict(zip(fields, y))
        return tuple(d(row, v) for d in derivs)

    y0 = tuple(_INITIAL[f](model.coefficients) for f in fields)
    path = ode.rk4(rhs, y0, rows_node, rows_mid, model.grid.dt,
                   name="gains(" + ",".join(fields) + ")")
    out = {}
    for i, f in enumerate(fields):
        arr = path[:, i].copy()
        arr.setflags(write=False)
        out[f] = arr
    return out


@dataclass(frozen=True)
class RiccatiSolution:
    """Gain trajectories on the grid; absent gains are None.

    alpha = alpha1 + alpha2 and beta = beta1 + beta2 hold to integrator
    accuracy; with r1 > 0 the own-state gains alpha1 and gamma1 stay strictly
    negative, which keeps the feedback ratios beta1/alpha1 etc. finite.
    """

    grid: TimeGrid
    pattern: InformationPattern
    alpha1: np.ndarray
    beta1: np.ndarray
    alpha2: np.ndarray
    beta2: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma1: np.ndarray | None = None
    gamma2: np.ndarray | None = None
    gamma3: np.ndarray | None = None
    tau1: np.ndarray | None = None
    tau2: np.ndarray | None = None
    tau3: np.ndarray | None = None

    def has(self, name: str) -> bool:
        return getattr(self, name) is not None

    def negative_on_horizon(self, name: str) -> np.ndarray:
        """Gain array, verified strictly negative everywhere (guards ratios)."""
        arr = getattr(self, name)
        if arr is None:
            raise PatternMismatch(f"{name} not solved for pattern {self.pattern.value}")
        if np.any(arr >= 0.0):
            k = int(np.argmax(arr >= 0.0))
            raise SingularRatio(f"{name} is not strictly negative at node {k}; "
                                "feedback ratio undefined (is r > 0?)")
        return arr

    def corrupted(self, **arrays) -> "RiccatiSolution":
        """Copy with some gain arrays replaced (residual-detection tests)."""
        return replace(self, **arrays)


def solve_standard_alpha(model: ValidatedModel) -> np.ndarray:
    """Aggregate quadratic gain alpha; unique and finite under A1."""
    return _integrate(model, ("alpha",))["alpha"]


def solve_alpha_components(model: ValidatedModel, alpha: np.ndarray):
    """Split alpha into the per-player gains (alpha1, alpha2).

    ``alpha`` is accepted for interface symmetry and cross-checked; the split
    gains are advanced jointly with the aggregate so every stage sees
    stage-consistent alpha values.
    """
    _check_alpha(model, alpha)
    sol = _integrate(model, ("alpha", "alpha1", "alpha2"))
    return sol["alpha1"], sol["alpha2"]


def solve_beta_aggregate(model: ValidatedModel, alpha: np.ndarray) -> np.ndarray:
    """Aggregate affine gain beta driven by alpha."""
    _check_alpha(model, alpha)
    return _integrate(model, ("alpha", "beta"))["beta"]


def solve_beta_components(model: ValidatedModel, alpha1: np.ndarray,
                          alpha2: np.ndarray, beta: np.ndarray):
    """Split beta into (beta1, beta2); beta1 + beta2 reproduces beta."""
    for arr in (alpha1, alpha2, beta):
        _check_length(model, arr)
    sol = _integrate(model, ("alpha", "alpha1", "alpha2", "beta", "beta1", "beta2"))
    return sol["beta1"], sol["beta2"]


def solve_gamma(model: ValidatedModel):
    """Full-information gains (gamma1, gamma2, gamma3) for player 1."""
    if model.pattern is InformationPattern.SYMMETRIC_W2:
        raise PatternMismatch("gamma gains serve the full-vs-partial and "
                              "independent-observation patterns only")
    sol = _integrate(model, ("alpha", "alpha2", "beta", "beta2",
                             "gamma1", "gamma2", "gamma3"))
    return sol["gamma1"], sol["gamma2"], sol["gamma3"]


def solve_tau(model: ValidatedModel):
    """Independent-observation gains (tau1, tau2, tau3) for player 2."""
    if model.pattern is not InformationPattern.W1_VS_W2:
        raise PatternMismatch("tau gains serve the independent-observation "
                              "pattern only")
    sol = _integrate(model, ("alpha", "alpha1", "beta", "beta1",
                             "tau1", "tau2", "tau3"))
    return sol["tau1"], sol["tau2"], sol["tau3"]


def solve(model: ValidatedModel) -> RiccatiSolution:
    """Solve every gain system the model's pattern needs, in one joint pass."""
    fields = ["alpha", "alpha1", "alpha2", "beta", "beta1", "beta2"]
    if model.pattern in (InformationPattern.FULL_VS_W2, InformationPattern.W1_VS_W2):
        fields += ["gamma1", "gamma2", "gamma3"]
    if model.pattern is InformationPattern.W1_VS_W2:
        fields += ["tau1", "tau2", "tau3"]
    sol = _integrate(model, tuple(fields))
    return RiccatiSolution(grid=model.grid, pattern=model.pattern,
                           **{f: sol.get(f) for f in GAIN_NAMES})


def decomposition_gaps(solution: RiccatiSolution) -> dict[str, float]:
    """Max |alpha1 + alpha2 - alpha| and |beta1 + beta2 - beta| on the grid."""
    return {
        "alpha": float(np.max(np.abs(solution.alpha1 + solution.alpha2 - solution.alpha))),
        "beta": float(np.max(np.abs(solution.beta1 + solution.beta2 - solution.beta))),
    }


def coupled_residuals(model: ValidatedModel, solution: RiccatiSolution) -> dict[str, float]:
    """Residuals of the coupled per-player pair system.

    The split-gain derivatives (known analytically from their own ODEs, no
    finite differences) are substituted into the coupled equations

        alpha1' = rho1 alpha1^2 + (2a + f2^2) alpha1 + rho2 alpha1 alpha2 - l1
        beta1'  = (a + rho1 alpha1 + f2^2) beta1 + rho2 alpha1 beta2
                  + s alpha1 + l1 k1

    (and the mirrored player-2 pair); the maxima of the absolute residuals
    over the grid are returned per equation.
    """
    tab = model.tab.node
    a, f2sq = tab["a"], tab["f2sq"]
    rho1, rho2 = tab["rho1"], tab["rho2"]
    l1, l2, s = tab["l1"], tab["l2"], tab["s"]
    l1k1, l2k2 = tab["l1k1"], tab["l2k2"]
    a1, a2 = solution.alpha1, solution.alpha2
    b1, b2 = solution.beta1, solution.beta2
    al, be = solution.alpha, solution.beta
    _check_length(model, a1)

    d_a1 = (2.0 * a + f2sq + rho1 * al) * a1 - l1
    d_a2 = (2.0 * a + f2sq + rho2 * al) * a2 - l2
    d_b1 = (a + f2sq) * b1 + rho2 * a1 * be + s * a1 + l1k1
    d_b2 = (a + f2sq) * b2 + rho1 * a2 * be + s * a2 + l2k2

    res = {
        "alpha1": d_a1 - rho1 * a1 ** 2 - (2.0 * a + f2sq) * a1 - rho2 * a1 * a2 + l1,
        "beta1": d_b1 - (a + rho1 * a1 + f2sq) * b1 - rho2 * a1 * b2 - s * a1 - l1k1,
        "alpha2": d_a2 - rho2 * a2 ** 2 - (2.0 * a + f2sq) * a2 - rho1 * a1 * a2 + l2,
        "beta2": d_b2 - (a + rho2 * a2 + f2sq) * b2 - rho1 * a2 * b1 - s * a2 - l2k2,
    }
    return {name: float(np.max(np.abs(r))) for name, r in res.items()}


def write_csv(solution: RiccatiSolution, stream: io.TextIOBase,
              header_lines: tuple[str, ...] = ()) -> None:
    """Write ``t`` and every gain column; absent gains become empty fields.

    Values carry 17 significant digits so a re-read reproduces the doubles.
    """
    for line in header_lines:
        stream.write(f"# {line}\n")
    stream.write("t," + ",".join(GAIN_NAMES) + "\n")
    ts = solution.grid.nodes()
    cols = [getattr(solution, name) for name in GAIN_NAMES]
    for k, t in enumerate(ts):
        cells = [f"{t:.17g}"]
        cells += ["" if col is None else f"{col[k]:.17g}" for col in cols]
        stream.write(",".join(cells) + "\n")


def _check_length(model: ValidatedModel, arr: np.ndarray) -> None:
    if arr.shape != (model.grid.steps + 1,):
        raise GridMismatch(f"expected array of length {model.grid.steps + 1}, "
                           f"got shape {arr.shape}")


def _check_alpha(model: ValidatedModel, alpha: np.ndarray) -> None:
    _check_length(model, alpha)
    fresh = _integrate(model, ("alpha",))["alpha"]
    scale = max(float(np.max(np.abs(fresh))), 1.0)
    if float(np.max(np.abs(fresh - alpha))) > 1e-9 * scale:
        raise GridMismatch("supplied alpha does not solve this model's "
                           "aggregate gain equation")
