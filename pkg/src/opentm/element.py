"""Unit-voxel conduction element: template matrices and SIMP material interpolation.

The voxel grid is built from identical trilinear 8-node brick elements on the
unit cube.  Everything downstream (load assembly, the matrix-free operator,
the homogenized tensor) is expressed through two small templates computed
here once: the 8x8 conduction matrix ``K0`` and the 8x3 load template ``f0``
produced by unit temperature gradients along each axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Corner numbering is lexicographic with x fastest: node n sits at
# (n & 1, (n >> 1) & 1, (n >> 2) & 1).  All stencil code relies on this order.
CORNERS = np.array([[(n >> a) & 1 for a in range(3)] for n in range(8)], dtype=np.int64)


@dataclass(frozen=True)
class ElementTemplates:
    """Conduction matrix and unit-gradient load template of the unit voxel.

    Attributes
    ----------
    K0 : (8, 8) ndarray
        Symmetric conduction matrix for unit conductivity.  Rows sum to zero
        (constant temperature carries no flux).
    T0 : (8, 3) ndarray
        Nodal test temperatures; column i holds each corner's coordinate
        along axis i, i.e. a unit temperature gradient across the voxel.
    f0 : (8, 3) ndarray
        Equivalent nodal loads of the test gradients, ``f0 = K0 @ T0``.
    """

    K0: np.ndarray
    T0: np.ndarray
    f0: np.ndarray


@dataclass(frozen=True)
class MaterialParams:
    """Two-phase SIMP material: solid/void conductivities and penalty exponent."""

    kappa0: float = 1.0
    kappa_min: float = 1e-4
    penalty: float = 3.0

    def __post_init__(self):
        if not (self.kappa0 > self.kappa_min > 0.0):
            raise ValueError(
                f"need kappa0 > kappa_min > 0, got {self.kappa0}, {self.kappa_min}"
            )
        if self.penalty < 1.0:
            raise ValueError(f"penalty must be >= 1, got {self.penalty}")


def _shape_gradients(x: float, y: float, z: float) -> np.ndarray:
    """Gradients of the 8 trilinear shape functions at a point of [0,1]^3."""
    g = np.empty((8, 3))
    coord = (x, y, z)
    for n in range(8):
        bits = CORNERS[n]
        fac = [coord[a] if bits[a] else 1.0 - coord[a] for a in range(3)]
        for a in range(3):
            d = 1.0 if bits[a] else -1.0
            g[n, a] = d * fac[(a + 1) % 3] * fac[(a + 2) % 3]
    return g


def build_templates() -> ElementTemplates:
    """Build the unit-voxel templates by 2x2x2 Gauss quadrature.

    Two Gauss points per axis integrate the trilinear conduction integrand
    exactly, so ``K0`` is exact up to rounding.
    """
    gp = 0.5 + np.array([-1.0, 1.0]) / (2.0 * np.sqrt(3.0))
    K0 = np.zeros((8, 8))
    for x in gp:
        for y in gp:
            for z in gp:
                g = _shape_gradients(x, y, z)
                K0 += 0.125 * (g @ g.T)
    K0 = 0.5 * (K0 + K0.T)  # kill rounding asymmetry
    T0 = CORNERS.astype(np.float64)
    f0 = K0 @ T0
    return ElementTemplates(K0=K0, T0=T0, f0=f0)


def simp_conductivity(rho_filtered: np.ndarray | float, params: MaterialParams):
    """SIMP interpolation: kappa(rho) = kappa_min + rho^p (kappa0 - kappa_min)."""
    r = np.asarray(rho_filtered, dtype=np.float64)
    return params.kappa_min + r**params.penalty * (params.kappa0 - params.kappa_min)


def simp_derivative(rho_filtered: np.ndarray | float, params: MaterialParams):
    """Derivative of :func:`simp_conductivity` with respect to the density."""
    r = np.asarray(rho_filtered, dtype=np.float64)
    return params.penalty * r ** (params.penalty - 1.0) * (params.kappa0 - params.kappa_min)
