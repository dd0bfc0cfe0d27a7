"""Effective conductivity of a periodic voxel cell and its density gradient.

Three corrective temperature fields (one per unit macroscopic gradient) are
solved on the periodic cell; the homogenized tensor is the element-energy
contraction of the corrected gradients.  Because the problem is self-adjoint
the tensor's derivative with respect to each element density needs no extra
solves, only quantities cached during evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .element import CORNERS, MaterialParams, simp_conductivity, simp_derivative
from .solver import GridHierarchy, assemble_macro_load, solve_equation

_AXES = (0, 1, 2)

# Packed component order of the symmetric tensor and its index pairs.
PACKED_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2))
PACKED_NAMES = ("k11", "k22", "k33", "k12", "k23", "k13")


@dataclass(frozen=True)
class ConductivityTensor:
    """Symmetric 3x3 conductivity packed as [k11, k22, k33, k12, k23, k13]."""

    vec: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vec, dtype=np.float64).reshape(-1)
        if v.size != 6:
            raise ValueError(f"expected 6 packed components, got {v.size}")
        object.__setattr__(self, "vec", v)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "ConductivityTensor":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (3, 3) or not np.allclose(m, m.T, atol=1e-12):
            raise ValueError("expected a symmetric 3x3 matrix")
        return cls(np.array([m[0, 0], m[1, 1], m[2, 2], m[0, 1], m[1, 2], m[0, 2]]))

    def as_matrix(self) -> np.ndarray:
        k11, k22, k33, k12, k23, k13 = self.vec
        return np.array([[k11, k12, k13], [k12, k22, k23], [k13, k23, k33]])

    def is_positive_definite(self) -> bool:
        try:
            np.linalg.cholesky(self.as_matrix())
            return True
        except np.linalg.LinAlgError:
            return False


@dataclass
class HomogenizationResult:
    """Tensor, corrective fields, and the per-element caches for sensitivities."""

    tensor: ConductivityTensor
    T_fields: list[np.ndarray]
    elem_diff: list[np.ndarray]            # per case: (nx, ny, nz, 8)
    pair_energy: np.ndarray                # (6, nx, ny, nz): w_i . K0 w_j per element
    rho_filtered: np.ndarray
    params: MaterialParams
    vcycles: int = 0


def solve_cases(hier: GridHierarchy, rho_filtered: np.ndarray,
                params: MaterialParams, tol: float = 1e-6,
                max_vcycles: int = 200,
                warm: Optional[Sequence[np.ndarray]] = None):
    """Solve the three unit-gradient load cases on the current densities.

    Builds the hierarchy for the SIMP conductivities of ``rho_filtered`` and
    returns ``(T_fields, total_vcycles)``.  ``warm`` supplies initial guesses,
    typically the previous optimizer iteration's fields.
    """
    kappa = simp_conductivity(rho_filtered, params)
    hier.build(kappa)
    T_fields = []
    cycles = 0
    for i in range(3):
        f = assemble_macro_load(hier, i)
        x0 = warm[i] if warm is not None else None
        T, c = solve_equation(hier, f, tol=tol, max_vcycles=max_vcycles, x0=x0)
        T_fields.append(T)
        cycles += c
    return T_fields, cycles


def _corner_diffs(T: np.ndarray, case: int) -> np.ndarray:
    """Per-element 8-vector of test-minus-corrective corner temperatures."""
    out = np.empty(T.shape + (8,), dtype=T.dtype)
    for a in range(8):
        sh = tuple(int(s) for s in CORNERS[a])
        out[..., a] = CORNERS[a, case] - np.roll(T, (-sh[0], -sh[1], -sh[2]), axis=_AXES)
    return out


def effective_tensor(hier: GridHierarchy, T_fields: Sequence[np.ndarray],
                     rho_filtered: np.ndarray, params: MaterialParams,
                     vcycles: int = 0) -> HomogenizationResult:
    """Contract the corrected gradients into the homogenized tensor.

    The packed components are volume-averaged element energies; for a uniform
    medium they reduce to the SIMP conductivity times the identity.
    """
    K0 = hier.levels[0].template
    kappa = simp_conductivity(rho_filtered, params)
    M = kappa.size
    w = [_corner_diffs(np.asarray(T, dtype=np.float64), i) for i, T in enumerate(T_fields)]
    y = [wi @ K0 for wi in w]
    vec = np.empty(6)
    pair_energy = np.empty((6,) + kappa.shape)
    for c, (i, j) in enumerate(PACKED_PAIRS):
        e = np.einsum("...a,...a->...", w[i], y[j])
        pair_energy[c] = e
        vec[c] = float((kappa * e).sum(dtype=np.float64)) / M
    return HomogenizationResult(
        tensor=ConductivityTensor(vec),
        T_fields=[np.asarray(T) for T in T_fields],
        elem_diff=[wi.astype(np.float32) for wi in w],
        pair_energy=pair_energy,
        rho_filtered=np.asarray(rho_filtered, dtype=np.float64),
        params=params,
        vcycles=vcycles,
    )


def homogenize(hier: GridHierarchy, rho_filtered: np.ndarray,
               params: MaterialParams, tol: float = 1e-6,
               max_vcycles: int = 200,
               warm: Optional[Sequence[np.ndarray]] = None) -> HomogenizationResult:
    """Convenience wrapper: solve the load cases and evaluate the tensor."""
    T_fields, cycles = solve_cases(hier, rho_filtered, params, tol=tol,
                                   max_vcycles=max_vcycles, warm=warm)
    return effective_tensor(hier, T_fields, rho_filtered, params, vcycles=cycles)


def tensor_sensitivity(result: HomogenizationResult,
                       dG_dkappa: np.ndarray) -> np.ndarray:
    """Gradient of a scalar objective with respect to the filtered densities.

    ``dG_dkappa`` holds the objective's derivative for each packed component;
    off-diagonal weights refer to the single packed entry, so no symmetric
    double counting happens here.  The SIMP derivative uses the full
    solid-void contrast, the exact derivative of the interpolation law.
    """
    dG = np.asarray(dG_dkappa, dtype=np.float64).reshape(-1)
    if dG.size != 6:
        raise ValueError(f"expected 6 objective weights, got {dG.size}")
    if result.pair_energy is None:
        raise RuntimeError("homogenization caches missing; run effective_tensor first")
    M = result.rho_filtered.size
    contraction = np.einsum("c,c...->...", dG, result.pair_energy)
    dkappa = simp_derivative(result.rho_filtered, result.params)
    return dkappa * contraction / M
