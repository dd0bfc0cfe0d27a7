"""Element template and SIMP interpolation tests."""

import numpy as np
import pytest

from opentm.element import (CORNERS, MaterialParams, build_templates,
                            simp_conductivity, simp_derivative)


def oracle_k0():
    """Independent 2x2x2 Gauss quadrature of the trilinear conduction matrix."""
    pts = [0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]
    K = np.zeros((8, 8))
    for gx in pts:
        for gy in pts:
            for gz in pts:
                grads = np.zeros((8, 3))
                for n in range(8):
                    bx, by, bz = (n & 1), (n >> 1) & 1, (n >> 2) & 1
                    fx = gx if bx else 1.0 - gx
                    fy = gy if by else 1.0 - gy
                    fz = gz if bz else 1.0 - gz
                    sx = 1.0 if bx else -1.0
                    sy = 1.0 if by else -1.0
                    sz = 1.0 if bz else -1.0
                    grads[n] = [sx * fy * fz, fx * sy * fz, fx * fy * sz]
                for a in range(8):
                    for b in range(8):
                        K[a, b] += grads[a] @ grads[b] / 8.0
    return K


def test_k0_matches_quadrature_oracle():
    t = build_templates()
    assert np.allclose(t.K0, oracle_k0(), atol=1e-14)


def test_k0_nullspace_and_row_sums():
    t = build_templates()
    const = np.ones(8)
    assert np.abs(t.K0 @ const).max() < 1e-14
    assert np.abs(t.K0.sum(axis=1)).max() < 1e-14


def test_k0_symmetric_and_equal_diagonal():
    t = build_templates()
    assert np.allclose(t.K0, t.K0.T)
    diag = np.diag(t.K0)
    assert np.allclose(diag, diag[0])
    # cube of unit conductivity: each diagonal entry integrates to 1/3
    assert diag[0] == pytest.approx(1.0 / 3.0, abs=1e-14)


def test_k0_positive_semidefinite():
    t = build_templates()
    rng = np.random.default_rng(0)
    for _ in range(1000):
        v = rng.standard_normal(8)
        assert v @ t.K0 @ v >= -1e-12


def test_f0_columns_sum_to_zero():
    t = build_templates()
    assert np.abs(t.f0.sum(axis=0)).max() < 1e-14


def test_f0_face_antisymmetry():
    # x-gradient loads: the x=0 face mirrors the x=1 face with opposite sign
    t = build_templates()
    K = oracle_k0()
    f_oracle = K @ CORNERS.astype(float)
    assert np.allclose(t.f0, f_oracle, atol=1e-14)
    for n in range(8):
        partner = n ^ 1  # flip the x bit
        assert t.f0[n, 0] == pytest.approx(-t.f0[partner, 0], abs=1e-14)


def test_t0_columns_are_corner_coordinates():
    t = build_templates()
    assert np.array_equal(t.T0, CORNERS.astype(float))


def test_simp_endpoints():
    mp = MaterialParams(kappa0=1.0, kappa_min=1e-4, penalty=3.0)
    assert simp_conductivity(0.0, mp) == pytest.approx(1e-4)
    assert simp_conductivity(1.0, mp) == pytest.approx(1.0)


def test_simp_midpoint_value():
    mp = MaterialParams(kappa0=1.0, kappa_min=1e-4, penalty=3.0)
    assert simp_conductivity(0.5, mp) == pytest.approx(1e-4 + 0.125 * (1 - 1e-4), rel=1e-12)


def test_simp_monotone_and_bounded():
    mp = MaterialParams()
    r = np.linspace(0.0, 1.0, 101)
    k = simp_conductivity(r, mp)
    assert (np.diff(k) > 0).all()
    assert k.min() >= mp.kappa_min and k.max() <= mp.kappa0 + 1e-12


def test_simp_derivative_values():
    mp = MaterialParams(kappa0=1.0, kappa_min=1e-12, penalty=3.0)
    assert simp_derivative(1.0, mp) == pytest.approx(3.0)
    lin = MaterialParams(kappa0=1.0, kappa_min=1e-4, penalty=1.0)
    r = np.linspace(0, 1, 7)
    assert np.allclose(simp_derivative(r, lin), 1.0 - 1e-4)


def test_simp_derivative_matches_finite_differences():
    mp = MaterialParams()
    r, h = 0.37, 1e-6
    fd = (simp_conductivity(r + h, mp) - simp_conductivity(r - h, mp)) / (2 * h)
    assert simp_derivative(r, mp) == pytest.approx(fd, rel=1e-6)


def test_material_params_validation():
    with pytest.raises(ValueError):
        MaterialParams(kappa0=1.0, kappa_min=2.0)
    with pytest.raises(ValueError):
        MaterialParams(kappa0=1.0, kappa_min=0.0)
    with pytest.raises(ValueError):
        MaterialParams(penalty=0.5)
