"""Scalar mismatch objectives between an achieved and a target tensor.

Each objective evaluates to a scalar plus the six packed-component weights
the sensitivity chain needs.  Target components may be NaN to leave them
unconstrained (used for flat nz == 1 designs, where only the in-plane block
is prescribed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .homogenize import ConductivityTensor

OBJECTIVE_KINDS = ("mse", "rel", "l1")

_ALIASES = {
    "mse": "mse",
    "squarederror": "mse",
    "rel": "rel",
    "relativesquarederror": "rel",
    "l1": "l1",
}


@dataclass
class ObjectiveSpec:
    """Objective kind plus the target tensor (NaN components are ignored)."""

    kind: str
    target: ConductivityTensor

    def __post_init__(self):
        key = str(self.kind).lower()
        if key not in _ALIASES:
            raise ValueError(f"unknown objective {self.kind!r}; choose from {OBJECTIVE_KINDS}")
        self.kind = _ALIASES[key]
        t = self.target.vec
        self.mask = ~np.isnan(t)
        if not self.mask.any():
            raise ValueError("target constrains no components")
        if self.kind == "rel" and (t[self.mask] == 0.0).any():
            raise ValueError("relative objective needs nonzero targeted components")


def eval_objective(spec: ObjectiveSpec, kappa_h: ConductivityTensor):
    """Evaluate ``(g, dG)`` for the achieved tensor.

    ``dG`` is the derivative with respect to each packed component; masked
    components contribute zero weight.  The l1 subgradient at a kink is 0.
    """
    k = kappa_h.vec
    if not np.isfinite(k).all():
        raise ValueError("achieved tensor has non-finite components")
    t = spec.target.vec
    m = spec.mask
    dG = np.zeros(6)
    if spec.kind == "mse":
        d = np.where(m, k - t, 0.0)
        g = float((d * d).sum())
        dG = 2.0 * d
    elif spec.kind == "rel":
        d = np.where(m, k / np.where(m, t, 1.0) - 1.0, 0.0)
        g = float((d * d).sum())
        dG = np.where(m, 2.0 * d / np.where(m, t, 1.0), 0.0)
    else:  # l1
        d = np.where(m, k - t, 0.0)
        g = float(np.abs(d).sum())
        dG = np.sign(d)
    return g, dG


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    violated_minor: int | None          # 1-based order of the first bad leading minor
    offdiag_ok: tuple[bool, bool, bool]  # |k12|, |k23|, |k13| against their bounds


def feasibility_check(target: ConductivityTensor) -> FeasibilityReport:
    """Positive-definiteness screen for a target tensor.

    Checks the leading principal minors of the symmetric matrix and, when the
    diagonals are usable, whether each off-diagonal obeys its pairwise bound
    |k_ij| < sqrt(k_ii * k_jj).  Unconstrained (NaN) diagonals are taken as 1
    and unconstrained off-diagonals as 0, i.e. the free entries are assumed
    fillable with feasible values.
    """
    vec = target.vec.copy()
    vec[:3] = np.where(np.isnan(vec[:3]), 1.0, vec[:3])
    vec[3:] = np.where(np.isnan(vec[3:]), 0.0, vec[3:])
    m = ConductivityTensor(vec).as_matrix()
    minors = (m[0, 0], float(np.linalg.det(m[:2, :2])), float(np.linalg.det(m)))
    violated = None
    for order, val in enumerate(minors, start=1):
        if val <= 0:
            violated = order
            break
    diag = np.diag(m)
    offdiag_ok = tuple(
        bool(diag[i] > 0 and diag[j] > 0 and abs(m[i, j]) < np.sqrt(diag[i] * diag[j]))
        for i, j in ((0, 1), (1, 2), (0, 2))
    )
    return FeasibilityReport(feasible=violated is None, violated_minor=violated,
                             offdiag_ok=offdiag_ok)
