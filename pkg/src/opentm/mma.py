"""Method of moving asymptotes, sized for desk-scale minimum-volume runs.

One constraint is supported; the convex subproblem separates per variable,
so its dual is one-dimensional and solved by bisection on the constraint
residual.  Asymptotes follow the usual expand-on-monotone /
shrink-on-oscillation update.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

ASYINIT = 0.5
ASYINCR = 1.2
ASYDECR = 0.7
ALBEFA = 0.1
RAA0 = 1e-5


@dataclass
class MMAState:
    """Asymptotes and the two previous iterates."""

    low: Optional[np.ndarray] = None
    upp: Optional[np.ndarray] = None
    xold1: Optional[np.ndarray] = None
    xold2: Optional[np.ndarray] = None
    it: int = 0


def _pq(grad, upp, x, low, xrange):
    gp = np.maximum(grad, 0.0)
    gm = np.maximum(-grad, 0.0)
    p = (upp - x) ** 2 * (1.001 * gp + 0.001 * gm + RAA0 / xrange)
    q = (x - low) ** 2 * (0.001 * gp + 1.001 * gm + RAA0 / xrange)
    return p, q


def mma_update(x: np.ndarray, df0: np.ndarray, fval: float, dfdx: np.ndarray,
               state: MMAState, xmin: float = 0.0, xmax: float = 1.0,
               move: float = 0.2) -> np.ndarray:
    """One MMA iterate for min f0 s.t. f <= 0 over box-bounded variables.

    ``df0`` is the objective gradient, ``fval``/``dfdx`` the constraint value
    and gradient at ``x``.  Updates ``state`` in place and returns the new
    (flattened) iterate.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    df0 = np.asarray(df0, dtype=np.float64).ravel()
    dfdx = np.asarray(dfdx, dtype=np.float64).ravel()
    n = x.size
    xrange = xmax - xmin

    state.it += 1
    if state.it <= 2 or state.xold2 is None:
        low = x - ASYINIT * xrange
        upp = x + ASYINIT * xrange
    else:
        zzz = (x - state.xold1) * (state.xold1 - state.xold2)
        fac = np.ones(n)
        fac[zzz > 0] = ASYINCR
        fac[zzz < 0] = ASYDECR
        low = x - fac * (state.xold1 - state.low)
        upp = x + fac * (state.upp - state.xold1)
        low = np.clip(low, x - 10.0 * xrange, x - 0.01 * xrange)
        upp = np.clip(upp, x + 0.01 * xrange, x + 10.0 * xrange)

    alpha = np.maximum.reduce([np.full(n, xmin), low + ALBEFA * (x - low), x - move * xrange])
    beta = np.minimum.reduce([np.full(n, xmax), upp - ALBEFA * (upp - x), x + move * xrange])

    p0, q0 = _pq(df0, upp, x, low, xrange)
    p1, q1 = _pq(dfdx, upp, x, low, xrange)
    # linearization residual: constraint approximated as sum(p1/(u-y)+q1/(y-l)) + r1
    r1 = fval - float((p1 / (upp - x) + q1 / (x - low)).sum())

    def primal(lam):
        P = p0 + lam * p1
        Q = q0 + lam * q1
        y = (low * np.sqrt(P) + upp * np.sqrt(Q)) / (np.sqrt(P) + np.sqrt(Q))
        return np.clip(y, alpha, beta)

    def constraint(lam):
        y = primal(lam)
        return float((p1 / (upp - y) + q1 / (y - low)).sum()) + r1

    if constraint(0.0) <= 0.0:
        lam = 0.0
    else:
        hi = 1.0
        for _ in range(80):
            if constraint(hi) <= 0.0:
                break
            hi *= 2.0
        lo = 0.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if constraint(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        lam = hi

    xnew = primal(lam)
    state.xold2 = state.xold1
    state.xold1 = x.copy()
    state.low = low
    state.upp = upp
    return xnew
