"""Fixed-step classical fourth-order integration on the model grid.

The stepper works on small tuples of scalars; coefficient data is supplied
as precomputed per-time "rows" on the nodes and on the interval midpoints,
so the four stage evaluations never re-interpolate.
"""

from __future__ import annotations

import numpy as np

from .errors import BlowUp

#: magnitude above which an ODE solution is reported as blown up
GUARD = 1e12


def rk4(rhs, y0, rows_node, rows_mid, dt: float, name: str = "ode") -> np.ndarray:
    """Integrate y' = rhs(row, y) forward with the classical four-stage scheme.

    Parameters
    ----------
    rhs : callable(row, y_tuple) -> tuple
        Derivative; ``row`` carries every time-dependent quantity it needs.
    y0 : tuple of floats
        Initial state at the first node.
    rows_node, rows_mid : sequences
        Rows at the N+1 grid nodes and the N interval midpoints.
    dt : float
        Step, uniform.
    name : str
        Used in the blow-up diagnostic.

    Returns
    -------
    ndarray of shape (N+1, len(y0)).
    """
    nsteps = len(rows_mid)
    dim = len(y0)
    out = np.empty((nsteps + 1, dim))
    y = tuple(float(v) for v in y0)
    out[0] = y
    half = 0.5 * dt
    sixth = dt / 6.0
    for k in range(nsteps):
        rn, rm, rn1 = rows_node[k], rows_mid[k], rows_node[k + 1]
        k1 = rhs(rn, y)
        k2 = rhs(rm, tuple(y[i] + half * k1[i] for i in range(dim)))
        k3 = rhs(rm, tuple(y[i] + half * k2[i] for i in range(dim)))
        k4 = rhs(rn1, tuple(y[i] + dt * k3[i] for i in range(dim)))
        y = tuple(y[i] + sixth * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]) for i in range(dim))
        out[k + 1] = y
        for v in y:
            if not abs(v) <= GUARD:
                raise BlowUp(name, (k + 1) * dt, v)
    return out


def solve_linear_backward(rate_nodes: np.ndarray, forcing_nodes: np.ndarray,
                          terminal: float, dt: float, name: str = "ode") -> np.ndarray:
    """Solve -v'(t) = rate(t) v(t) + forcing(t), v(T) = terminal.

    Runs the four-stage scheme on the time-reversed equation.  Midpoint
    values of the tabulated rate and forcing are taken as adjacent-node
    averages, which matches linear interpolation of sampled coefficients.
    Returns v on the original node order (index 0 is t = 0).
    """
    rate = np.asarray(rate_nodes, dtype=float)
    forcing = np.broadcast_to(np.asarray(forcing_nodes, dtype=float), rate.shape)
    n = rate.shape[0] - 1
    rate_rev = rate[::-1]
    forc_rev = forcing[::-1]
    rows_node = list(zip(rate_rev, forc_rev))
    rows_mid = list(zip(0.5 * (rate_rev[:-1] + rate_rev[1:]),
                        0.5 * (forc_rev[:-1] + forc_rev[1:])))

    def rhs(row, y):
        d1, g = row
        return (d1 * y[0] + g,)

    path = rk4(rhs, (terminal,), rows_node, rows_mid, dt, name=name)
    return path[::-1, 0].copy()
