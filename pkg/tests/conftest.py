"""Shared scenario builders for the test suite."""

import numpy as np
import pytest

from bsdegame.model import (CoefficientSet, InformationPattern, TerminalCondition,
                            TimeGrid, validate)

# a generic well-conditioned game satisfying A1 with distinct players
GENERIC = dict(a=0.25, b1=1.0, m1=1.0, b2=1.5, m2=2.25, f1=0.0, f2=0.0, c=0.1,
               l1=0.9, l2=1.3, k1=0.2, k2=-0.1, n1=0.15, n2=-0.2,
               r1=0.6, r2=0.9, h1=0.4, h2=-0.3)

# noise-free benchmark used against the discrete Nash oracle
DETERMINISTIC = dict(a=0.4, b1=1.0, m1=1.0, b2=1.5, m2=2.25, f1=0.0, f2=0.0, c=0.2,
                     l1=0.9, l2=1.2, k1=-0.3, k2=-0.2, n1=0.15, n2=-0.1,
                     r1=0.0, r2=0.0, h1=0.0, h2=0.0)

# identical players with an active diffusion coupling (f2 != 0)
SYMMETRIC_F2 = dict(a=0.2, b1=1.0, m1=1.0, b2=1.0, m2=1.0, f1=0.0, f2=0.4, c=0.1,
                    l1=1.1, l2=1.1, k1=0.2, k2=0.2, n1=0.1, n2=0.1,
                    r1=0.8, r2=0.8, h1=0.3, h2=0.3)

# aggregate gain with the hyperbolic-tangent closed form
TANH = dict(a=0.0, b1=1.0, m1=1.0, b2=1.0, m2=1.0, f1=0.0, f2=0.0, c=0.0,
            l1=1.0, l2=1.0, k1=0.0, k2=0.0, n1=0.0, n2=0.0,
            r1=0.0, r2=0.0, h1=0.0, h2=0.0)

COTH = dict(TANH, r1=1.0, r2=1.0)

ZERO = dict(a=0.0, b1=0.0, m1=1.0, b2=0.0, m2=1.0, f1=0.0, f2=0.0, c=0.0,
            l1=1.0, l2=1.0, k1=0.0, k2=0.0, n1=0.0, n2=0.0,
            r1=0.0, r2=0.0, h1=0.0, h2=0.0)


def build_model(values, pattern="SymmetricW2", xi=(0.0, 0.0, 0.0),
                steps=512, horizon=1.0, **overrides):
    data = dict(values)
    data.update(overrides)
    return validate(CoefficientSet.from_values(**data), TerminalCondition(*xi),
                    InformationPattern(pattern), TimeGrid(horizon, steps))


@pytest.fixture(scope="session")
def generic_case_i():
    return build_model(GENERIC, "SymmetricW2", xi=(0.5, 0.6, 0.8))


@pytest.fixture(scope="session")
def generic_case_ii():
    return build_model(GENERIC, "FullVsW2", xi=(0.5, 0.6, 0.8))


@pytest.fixture(scope="session")
def generic_case_iii():
    return build_model(GENERIC, "W1VsW2", xi=(0.5, 0.6, 0.8))


@pytest.fixture(scope="session")
def deterministic_model():
    return build_model(DETERMINISTIC, "SymmetricW2", xi=(0.6, 0.0, 0.0),
                       steps=400, horizon=0.5)


def zero_batch(model, paths=1):
    """A batch whose increments vanish (deterministic runs)."""
    from bsdegame.stochastic import BrownianPathBatch
    z = np.zeros((paths, model.grid.steps))
    return BrownianPathBatch(grid=model.grid, seed=0, dw1=z, dw2=z)
