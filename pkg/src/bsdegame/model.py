"""Game data: coefficients, standing assumptions, and the terminal condition.

The controlled state is the scalar backward SDE

    -dy = [a(t) y + b1(t) v1 + b2(t) v2 + f1(t) z1 + f2(t) z2 + c(t)] dt
          - z1 dw1 - z2 dw2,          y(T) = xi,

and player i (i = 1, 2) pays

    J_i = 1/2 E{ integral_0^T [l_i (y - k_i)^2 + m_i (v_i - n_i)^2] dt
                 + r_i (y(0) - h_i)^2 }.

All coefficients are deterministic functions of time, each given either as a
constant or as a sampled table with linear interpolation.  The terminal value
is restricted to the affine family xi = c0 + c1 w1(T) + c2 w2(T), which keeps
every conditional expectation needed by the filters exactly computable.

Standing assumptions, checked by :func:`validate`:

    A1:  b1(t)^2 / m1(t) = b2(t)^2 / m2(t)  and  f1(t) = 0   on the grid,
    A2:  f2(t) = 0  (required only by the independent-observation pattern).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionViolation, NonpositiveWeight, OutOfRange, SingularRatio

#: relative tolerance for the A1 ratio equality and the f1 = 0 / f2 = 0 checks
ASSUMPTION_RTOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid with ``steps`` intervals on the horizon [0, T]."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if self.steps < 2:
            raise ValueError(f"need at least 2 steps, got {self.steps}")
        # dt * steps must reproduce T up to one rounding unit
        if abs(self.dt * self.steps - self.horizon) > 4 * np.finfo(float).eps * self.horizon:
            raise ValueError("dt * steps does not reproduce the horizon")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def nodes(self) -> np.ndarray:
        """Grid nodes t_0 = 0, ..., t_N = T."""
        return np.linspace(0.0, self.horizon, self.steps + 1)

    def midpoints(self) -> np.ndarray:
        """Interval midpoints t_k + dt/2, length ``steps``."""
        return self.nodes()[:-1] + 0.5 * self.dt


class Coefficient:
    """A deterministic function of time on [0, T]: a constant or a linear-
    interpolation table.  Tables are exact at their knots."""

    __slots__ = ("_value", "_ts", "_vs")

    def __init__(self, value=0.0, *, table=None):
        if table is not None:
            ts, vs = zip(*sorted(table))
            if len(ts) != len(set(ts)):
                raise ValueError("table times must be distinct")
            self._ts = tuple(float(t) for t in ts)
            self._vs = tuple(float(v) for v in vs)
            self._value = None
            if not all(math.isfinite(v) for v in self._vs):
                raise ValueError("table values must be finite")
        else:
            v = float(value)
            if not math.isfinite(v):
                raise ValueError("constant coefficient must be finite")
            self._value = v
            self._ts = self._vs = None

    @property
    def is_constant(self) -> bool:
        return self._value is not None

    @property
    def constant_value(self):
        return self._value

    def __call__(self, t):
        if self._value is not None:
            return self._value if np.isscalar(t) else np.full(np.shape(t), self._value)
        return np.interp(t, self._ts, self._vs)

    def max_abs(self) -> float:
        if self._value is not None:
            return abs(self._value)
        return max(abs(v) for v in self._vs)

    def is_zero(self) -> bool:
        return self.max_abs() == 0.0

    def __eq__(self, other):
        if not isinstance(other, Coefficient):
            return NotImplemented
        return (self._value, self._ts, self._vs) == (other._value, other._ts, other._vs)

    def __hash__(self):
        return hash((self._value, self._ts, self._vs))

    def __repr__(self):
        if self._value is not None:
            return f"Coefficient({self._value!r})"
        return f"Coefficient(table={list(zip(self._ts, self._vs))!r})"


def as_coefficient(x) -> Coefficient:
    """Coerce a number, (t, v) pair list, or Coefficient into a Coefficient."""
    if isinstance(x, Coefficient):
        return x
    if isinstance(x, (list, tuple)):
        return Coefficient(table=x)
    return Coefficient(x)


#: names of the time-indexed coefficients, in canonical order
TIME_COEFFICIENTS = ("a", "b1", "b2", "f1", "f2", "c",
                     "k1", "k2", "n1", "n2", "l1", "l2", "m1", "m2")


@dataclass(frozen=True)
class CoefficientSet:
    """All model data: 14 time-indexed functions plus the scalar constants
    r1, r2 >= 0 (initial-cost weights) and h1, h2 (initial targets)."""

    a: Coefficient = field(default_factory=Coefficient)
    b1: Coefficient = field(default_factory=Coefficient)
    b2: Coefficient = field(default_factory=Coefficient)
    f1: Coefficient = field(default_factory=Coefficient)
    f2: Coefficient = field(default_factory=Coefficient)
    c: Coefficient = field(default_factory=Coefficient)
    k1: Coefficient = field(default_factory=Coefficient)
    k2: Coefficient = field(default_factory=Coefficient)
    n1: Coefficient = field(default_factory=Coefficient)
    n2: Coefficient = field(default_factory=Coefficient)
    l1: Coefficient = field(default_factory=lambda: Coefficient(1.0))
    l2: Coefficient = field(default_factory=lambda: Coefficient(1.0))
    m1: Coefficient = field(default_factory=lambda: Coefficient(1.0))
    m2: Coefficient = field(default_factory=lambda: Coefficient(1.0))
    r1: float = 0.0
    r2: float = 0.0
    h1: float = 0.0
    h2: float = 0.0

    @staticmethod
    def from_values(**kwargs) -> "CoefficientSet":
        """Build a set from plain numbers / table lists (see as_coefficient)."""
        out = {}
        for name, val in kwargs.items():
            if name in TIME_COEFFICIENTS:
                out[name] = as_coefficient(val)
            elif name in ("r1", "r2", "h1", "h2"):
                out[name] = float(val)
            else:
                raise ValueError(f"unknown coefficient {name!r}")
        return CoefficientSet(**out)


@dataclass(frozen=True)
class TerminalCondition:
    """Affine terminal value xi = c0 + c1 w1(T) + c2 w2(T)."""

    c0: float = 0.0
    c1: float = 0.0
    c2: float = 0.0

    def __post_init__(self):
        for v in (self.c0, self.c1, self.c2):
            if not math.isfinite(v):
                raise ValueError("terminal coefficients must be finite")


class ConditioningMode(enum.Enum):
    """Which sigma-field the terminal value is projected on."""

    GIVEN_W1 = "GivenW1"
    GIVEN_W2 = "GivenW2"
    MEAN = "Mean"


def conditional_terminal(terminal: TerminalCondition, observed=None,
                         mode: ConditioningMode = ConditioningMode.MEAN):
    """Conditional expectation of xi given one observed Brownian coordinate.

    ``GivenW2`` with w2(t) = w returns c0 + c2 w (the w1 part averages out by
    independence), ``GivenW1`` returns c0 + c1 w, and ``Mean`` returns c0.
    All three are exact consequences of independence and the martingale
    property of Brownian motion; ``observed`` may be a scalar or an array.
    """
    mode = ConditioningMode(mode)
    if mode is ConditioningMode.MEAN:
        return terminal.c0
    if observed is None:
        raise ValueError(f"mode {mode.value} requires an observed value")
    if mode is ConditioningMode.GIVEN_W1:
        return terminal.c0 + terminal.c1 * np.asarray(observed)
    return terminal.c0 + terminal.c2 * np.asarray(observed)


class InformationPattern(enum.Enum):
    """Observation filtrations handed to the two players.

    * ``SYMMETRIC_W2`` -- both players observe w2 only.
    * ``FULL_VS_W2``   -- player 1 sees everything, player 2 observes w2.
    * ``W1_VS_W2``     -- player 1 observes w1, player 2 observes w2.
    """

    SYMMETRIC_W2 = "SymmetricW2"
    FULL_VS_W2 = "FullVsW2"
    W1_VS_W2 = "W1VsW2"

    @property
    def requires_a2(self) -> bool:
        return self is InformationPattern.W1_VS_W2


class TabulatedCoefficients:
    """Read-only samples of every coefficient-derived quantity on a grid.

    Arrays are provided on the nodes (length N+1) and on the interval
    midpoints (length N); the fourth-order ODE stepper needs both.
    Derived quantities:

        rho1 = b1^2 / m1,   rho2 = b2^2 / m2,
        s    = b1 n1 + b2 n2 + c         (common drift forcing),
        f2sq = f2^2.
    """

    _DERIVED = ("rho1", "rho2", "s", "f2sq", "l1k1", "l2k2")

    def __init__(self, coeffs: CoefficientSet, grid: TimeGrid):
        self.grid = grid
        self.node = self._sample(coeffs, grid.nodes())
        self.mid = self._sample(coeffs, grid.midpoints())
        for table in (self.node, self.mid):
            for arr in table.values():
                arr.setflags(write=False)

    @staticmethod
    def _sample(coeffs: CoefficientSet, ts: np.ndarray) -> dict:
        out = {name: getattr(coeffs, name)(ts) for name in TIME_COEFFICIENTS}
        out["rho1"] = out["b1"] ** 2 / out["m1"]
        out["rho2"] = out["b2"] ** 2 / out["m2"]
        out["s"] = out["b1"] * out["n1"] + out["b2"] * out["n2"] + out["c"]
        out["f2sq"] = out["f2"] ** 2
        out["l1k1"] = out["l1"] * out["k1"]
        out["l2k2"] = out["l2"] * out["k2"]
        return out


@dataclass(frozen=True, eq=False)
class ValidatedModel:
    """An immutable, assumption-checked model.

    Construction goes through :func:`validate`; the object is safe to share
    across concurrent readers.  ``tab`` caches coefficient samples on the
    grid (excluded from equality, which compares the defining data only).
    """

    coefficients: CoefficientSet
    terminal: TerminalCondition
    pattern: InformationPattern
    grid: TimeGrid
    tab: TabulatedCoefficients = field(repr=False)

    def __eq__(self, other):
        if not isinstance(other, ValidatedModel):
            return NotImplemented
        return (self.coefficients, self.terminal, self.pattern, self.grid) == \
               (other.coefficients, other.terminal, other.pattern, other.grid)

    def __hash__(self):
        return hash((self.coefficients, self.terminal, self.pattern, self.grid))

    @property
    def f2_active(self) -> bool:
        """True when f2 is not identically zero on the grid."""
        return bool(np.any(self.tab.node["f2"] != 0.0))

    def with_grid(self, grid: TimeGrid) -> "ValidatedModel":
        """Re-validate the same data on a different grid (refinement studies)."""
        return validate(self.coefficients, self.terminal, self.pattern, grid)

    def with_pattern(self, pattern: InformationPattern) -> "ValidatedModel":
        return validate(self.coefficients, self.terminal, pattern, self.grid)


def _relative_gap(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(x), np.abs(y)), 1e-300)
    return np.abs(x - y) / scale


def validate(coefficients: CoefficientSet, terminal: TerminalCondition,
             pattern: InformationPattern, grid: TimeGrid) -> ValidatedModel:
    """Check every standing assumption on the grid and freeze the model.

    Raises
    ------
    NonpositiveWeight
        if any of l1, l2, m1, m2 is <= 0 at a grid point, or r1, r2 < 0.
    AssumptionViolation
        if A1 (ratio equality and f1 = 0) fails, or A2 (f2 = 0) fails for
        the independent-observation pattern, or a coefficient is non-finite.
    SingularRatio
        if the pattern needs the inverse gain ratios (symmetric or
        full-vs-partial observation with f2 not identically 0) but r1 or r2
        vanishes.
    """
    pattern = InformationPattern(pattern)
    tab = TabulatedCoefficients(coefficients, grid)
    ts = grid.nodes()

    for name in TIME_COEFFICIENTS:
        vals = tab.node[name]
        if not np.all(np.isfinite(vals)):
            k = int(np.argmax(~np.isfinite(vals)))
            raise AssumptionViolation(f"{name} is not finite at t={ts[k]:.6g}")
    for name in ("l1", "l2", "m1", "m2"):
        vals = tab.node[name]
        if np.any(vals <= 0.0):
            k = int(np.argmax(vals <= 0.0))
            raise NonpositiveWeight(f"{name} must be > 0; {name}({ts[k]:.6g}) = {vals[k]:.6g}")
    if coefficients.r1 < 0 or coefficients.r2 < 0:
        raise NonpositiveWeight("r1 and r2 must be nonnegative")

    # A1: b1^2/m1 = b2^2/m2 and f1 = 0, at every grid point.
    gap = _relative_gap(tab.node["rho1"], tab.node["rho2"])
    bad = gap > ASSUMPTION_RTOL
    if np.any(bad):
        k = int(np.argmax(bad))
        raise AssumptionViolation(
            f"A1 fails at t={ts[k]:.6g}: b1^2/m1 = {tab.node['rho1'][k]:.12g} "
            f"but b2^2/m2 = {tab.node['rho2'][k]:.12g}")
    f1_scale = max(tab.node["b1"].max(initial=0.0), 1.0)
    if np.any(np.abs(tab.node["f1"]) > ASSUMPTION_RTOL * f1_scale):
        k = int(np.argmax(np.abs(tab.node["f1"]) > ASSUMPTION_RTOL * f1_scale))
        raise AssumptionViolation(f"A1 fails: f1({ts[k]:.6g}) = {tab.node['f1'][k]:.6g} != 0")

    # A2 (independent observations only): f2 = 0.
    if pattern.requires_a2 and np.any(np.abs(tab.node["f2"]) > ASSUMPTION_RTOL):
        k = int(np.argmax(np.abs(tab.node["f2"]) > ASSUMPTION_RTOL))
        raise AssumptionViolation(f"A2 fails: f2({ts[k]:.6g}) = {tab.node['f2'][k]:.6g} != 0")

    # The diffusion-coupled patterns divide by the gains alpha1 / gamma1 whose
    # initial values are -r1 (and alpha2 with -r2); r = 0 would start the
    # ratio at a pole.
    f2_active = bool(np.any(tab.node["f2"] != 0.0))
    if pattern is not InformationPattern.W1_VS_W2 and f2_active:
        if coefficients.r1 == 0.0 or coefficients.r2 == 0.0:
            raise SingularRatio(
                "patterns with f2 != 0 need r1 > 0 and r2 > 0 so the feedback "
                "gain ratios stay finite")

    return ValidatedModel(coefficients, terminal, pattern, grid, tab)


@dataclass(frozen=True)
class CoefficientSample:
    """All 14 time-indexed coefficient values at one time."""

    a: float
    b1: float
    b2: float
    f1: float
    f2: float
    c: float
    k1: float
    k2: float
    n1: float
    n2: float
    l1: float
    l2: float
    m1: float
    m2: float


def sample_coefficients(model: ValidatedModel, t: float) -> CoefficientSample:
    """Evaluate every coefficient at time t in [0, T].

    Constants return their value, tables interpolate linearly; grid nodes are
    reproduced exactly.
    """
    if not (0.0 <= t <= model.grid.horizon):
        raise OutOfRange(f"t={t:.6g} outside [0, {model.grid.horizon:.6g}]")
    vals = {name: float(getattr(model.coefficients, name)(t)) for name in TIME_COEFFICIENTS}
    return CoefficientSample(**vals)
