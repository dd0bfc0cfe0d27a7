"""Matrix-free operator and multigrid solver tests against brute-force oracles."""

import itertools

import numpy as np
import pytest

from opentm.element import CORNERS, build_templates
from opentm.solver import (ConvergenceError, GridHierarchy, apply_K,
                           assemble_macro_load, coarse_solve, prolong_correct,
                           relax_gs8, restrict, solve_equation)


def brute_matrix(kappa: np.ndarray) -> np.ndarray:
    """Assemble the periodic stiffness by literal element loops."""
    K0 = build_templates().K0
    nx, ny, nz = kappa.shape
    n = nx * ny * nz

    def vid(i, j, k):
        return ((i % nx) * ny + (j % ny)) * nz + (k % nz)

    A = np.zeros((n, n))
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                ke = kappa[i, j, k]
                vs = [vid(i + c[0], j + c[1], k + c[2]) for c in CORNERS]
                for a in range(8):
                    for b in range(8):
                        A[vs[a], vs[b]] += ke * K0[a, b]
    return A


def brute_load(kappa: np.ndarray, case: int) -> np.ndarray:
    t = build_templates()
    nx, ny, nz = kappa.shape
    f = np.zeros(nx * ny * nz)
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                for a, c in enumerate(CORNERS):
                    vid = (((i + c[0]) % nx) * ny + (j + c[1]) % ny) * nz \
                        + (k + c[2]) % nz
                    f[vid] += kappa[i, j, k] * t.f0[a, case]
    return f


def build(dims, kappa, dtype="float64"):
    h = GridHierarchy(dims, dtype=dtype)
    h.build(np.asarray(kappa))
    return h


class TestApplyK:
    def test_constant_field_in_nullspace(self):
        h = build((4, 4, 4), np.random.default_rng(0).uniform(0.1, 1, (4, 4, 4)))
        out = apply_K(h.levels[0], np.full((4, 4, 4), 3.7))
        assert np.abs(out).max() < 1e-12

    def test_matches_brute_assembly(self):
        rng = np.random.default_rng(1)
        for trial in range(20):
            dims = tuple(rng.choice([4, 5, 6], size=3))
            kappa = rng.uniform(1e-4, 1.0, dims)
            h = build(dims, kappa)
            A = brute_matrix(kappa)
            T = rng.standard_normal(dims)
            got = apply_K(h.levels[0], T).ravel()
            want = A @ T.ravel()
            assert np.abs(got - want).max() <= 1e-5 * np.abs(want).max()

    def test_linearity(self):
        rng = np.random.default_rng(2)
        h = build((4, 4, 4), rng.uniform(0.1, 1, (4, 4, 4)))
        a, b = rng.standard_normal((2, 4, 4, 4))
        combo = apply_K(h.levels[0], 2.0 * a - 0.5 * b)
        parts = 2.0 * apply_K(h.levels[0], a) - 0.5 * apply_K(h.levels[0], b)
        assert np.allclose(combo, parts, atol=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        h = build((4, 6, 4), rng.uniform(0.1, 1, (4, 6, 4)))
        a, b = rng.standard_normal((2, 4, 6, 4))
        lhs = float((apply_K(h.levels[0], a) * b).sum())
        rhs = float((a * apply_K(h.levels[0], b)).sum())
        assert lhs == pytest.approx(rhs, rel=1e-11)


class TestMacroLoad:
    def test_uniform_density_gives_zero_load(self):
        h = build((6, 6, 6), np.full((6, 6, 6), 0.42))
        for case in range(3):
            f = assemble_macro_load(h, case)
            assert np.abs(f).max() < 1e-13

    def test_single_element_matches_template_rows(self):
        # near-void background keeps conductivities positive; its loads cancel
        kappa = np.full((4, 4, 4), 1e-9)
        kappa[1, 2, 3] = 0.8
        h = build((4, 4, 4), kappa)
        t = build_templates()
        for case in range(3):
            f = assemble_macro_load(h, case)
            want = np.zeros((4, 4, 4))
            for a, c in enumerate(CORNERS):
                want[(1 + c[0]) % 4, (2 + c[1]) % 4, (3 + c[2]) % 4] += 0.8 * t.f0[a, case]
            assert np.allclose(f, want, atol=1e-8)
            touched = np.abs(want) > 1e-12
            assert np.abs(f[~touched]).max() < 1e-8

    def test_total_load_is_zero(self):
        rng = np.random.default_rng(4)
        h = build((4, 4, 4), rng.uniform(1e-4, 1, (4, 4, 4)))
        for case in range(3):
            assert abs(assemble_macro_load(h, case).sum()) < 1e-12

    def test_matches_brute_load(self):
        rng = np.random.default_rng(5)
        kappa = rng.uniform(1e-4, 1, (4, 5, 6))
        h = build((4, 5, 6), kappa)
        for case in range(3):
            got = assemble_macro_load(h, case).ravel()
            assert np.allclose(got, brute_load(kappa, case), atol=1e-12)


class TestRelaxation:
    def test_same_color_vertices_never_share_an_element(self):
        dims = (4, 4, 4)
        verts = list(itertools.product(*[range(n) for n in dims]))
        elems = {}
        for e in itertools.product(*[range(n) for n in dims]):
            members = {tuple((e[a] + c[a]) % dims[a] for a in range(3)) for c in CORNERS}
            elems[e] = members
        for members in elems.values():
            colors = {}
            for v in members:
                key = (v[0] % 2, v[1] % 2, v[2] % 2)
                assert key not in colors, "two same-color vertices share an element"
                colors[key] = v
        assert len(verts) == 64

    def test_exact_solution_is_fixed_point(self):
        rng = np.random.default_rng(6)
        kappa = rng.uniform(0.2, 1, (4, 4, 4))
        h = build((4, 4, 4), kappa)
        A = brute_matrix(kappa)
        x = rng.standard_normal(64)
        x -= x.mean()
        f = A @ x
        lev = h.levels[0]
        lev.f[...] = f.reshape((4, 4, 4))
        lev.T[...] = x.reshape((4, 4, 4))
        relax_gs8(lev, sweeps=1)
        assert np.allclose(lev.T.ravel(), x, atol=1e-11)

    def test_residual_decreases(self):
        h = build((8, 8, 8), np.full((8, 8, 8), 1.0))
        lev = h.levels[0]
        rng = np.random.default_rng(7)
        f = rng.standard_normal((8, 8, 8))
        f -= f.mean()
        lev.f[...] = f
        lev.T[...] = 0
        r0 = np.linalg.norm(lev.f - apply_K(lev, lev.T))
        relax_gs8(lev, sweeps=10)
        r1 = np.linalg.norm(lev.f - apply_K(lev, lev.T))
        assert r1 < r0

    def test_odd_axes_rejected(self):
        h = build((5, 4, 4), np.full((5, 4, 4), 0.5))
        with pytest.raises(ValueError):
            relax_gs8(h.levels[0], 1)


class TestTransfer:
    def test_constant_restricts_to_constant(self):
        h = build((8, 8, 8), np.full((8, 8, 8), 1.0))
        h.levels[0].r[...] = 2.5
        restrict(h.levels[0], h.levels[1])
        assert np.allclose(h.levels[1].f, 2.5, atol=1e-12)

    def test_constant_prolongs_to_constant(self):
        h = build((8, 8, 8), np.full((8, 8, 8), 1.0))
        h.levels[1].T[...] = 1.25
        h.levels[0].T[...] = 0
        prolong_correct(h.levels[0], h.levels[1])
        assert np.allclose(h.levels[0].T, 1.25, atol=1e-12)

    def test_restriction_is_scaled_adjoint_of_prolongation(self):
        h = build((8, 8, 8), np.full((8, 8, 8), 1.0))
        rng = np.random.default_rng(8)
        a = rng.standard_normal((8, 8, 8))
        b = rng.standard_normal((4, 4, 4))
        h.levels[0].r[...] = a
        restrict(h.levels[0], h.levels[1])
        Ra = h.levels[1].f.copy()
        h.levels[1].T[...] = b
        h.levels[0].T[...] = 0
        prolong_correct(h.levels[0], h.levels[1])
        Ib = h.levels[0].T.copy()
        lhs = float((Ra * b).sum())
        rhs = float((a * Ib).sum())
        assert lhs == pytest.approx(0.125 * rhs, rel=1e-10)


class TestCoarseSolve:
    def test_zero_load_zero_solution(self):
        h = build((4, 4, 4), np.full((4, 4, 4), 0.7))
        h.levels[-1].f[...] = 0
        coarse_solve(h)
        assert np.abs(h.levels[-1].T).max() == 0

    def test_small_residual_in_pinned_subspace(self):
        rng = np.random.default_rng(9)
        kappa = rng.uniform(0.1, 1, (4, 4, 4))
        h = build((4, 4, 4), kappa)
        A = brute_matrix(kappa)
        f = rng.standard_normal(64)
        f -= f.mean()
        h.levels[-1].f[...] = f.reshape((4, 4, 4))
        coarse_solve(h)
        x = h.levels[-1].T.ravel()
        res = np.linalg.norm(A @ x - f) / np.linalg.norm(f)
        assert res < 1e-10
        assert abs(x.mean()) < 1e-12

    def test_nonzero_mean_load_warns_and_projects(self):
        h = build((4, 4, 4), np.full((4, 4, 4), 0.5))
        h.levels[-1].f[...] = 1.0 + np.random.default_rng(10).standard_normal((4, 4, 4))
        with pytest.warns(RuntimeWarning):
            coarse_solve(h)
        assert abs(h.levels[-1].T.mean()) < 1e-12


class TestSolveEquation:
    def test_uniform_density_unit_gradient_case(self):
        h = build((16, 16, 16), np.full((16, 16, 16), 1.0))
        f = assemble_macro_load(h, 0)
        T, cycles = solve_equation(h, f, tol=1e-6, max_vcycles=25)
        assert cycles <= 25
        assert np.abs(T).max() < 1e-8  # uniform medium needs no correction

    def test_solution_satisfies_equation(self):
        rng = np.random.default_rng(11)
        kappa = rng.uniform(0.05, 1, (8, 8, 8))
        h = build((8, 8, 8), kappa)
        f = rng.standard_normal((8, 8, 8))
        f -= f.mean()
        T, _ = solve_equation(h, f, tol=1e-9)
        r = f - apply_K(h.levels[0], T)
        assert np.linalg.norm(r) <= 1.01e-9 * np.linalg.norm(f)
        assert abs(T.mean()) < 1e-9

    def test_deterministic(self):
        rng = np.random.default_rng(12)
        kappa = rng.uniform(0.05, 1, (8, 8, 8))
        f = rng.standard_normal((8, 8, 8))
        f -= f.mean()
        runs = []
        for _ in range(2):
            h = build((8, 8, 8), kappa)
            T, _ = solve_equation(h, f, tol=1e-8)
            runs.append(T)
        assert np.array_equal(runs[0], runs[1])

    def test_matches_cg_oracle(self):
        from scipy.sparse.linalg import cg, LinearOperator
        rng = np.random.default_rng(13)
        kappa = rng.uniform(0.05, 1, (8, 8, 8))
        h = build((8, 8, 8), kappa)
        A = brute_matrix(kappa)
        f = rng.standard_normal(512)
        f -= f.mean()
        T, _ = solve_equation(h, f.reshape((8, 8, 8)), tol=1e-10)
        op = LinearOperator((512, 512), matvec=lambda x: A @ x)
        x, info = cg(op, f, rtol=1e-12, atol=0, maxiter=5000)
        assert info == 0
        x -= x.mean()
        err = np.linalg.norm(T.ravel() - x) / np.linalg.norm(x)
        assert err < 1e-4

    def test_translation_equivariance(self):
        rng = np.random.default_rng(14)
        kappa = rng.uniform(0.05, 1, (8, 8, 8))
        f = rng.standard_normal((8, 8, 8))
        f -= f.mean()
        h1 = build((8, 8, 8), kappa)
        T1, _ = solve_equation(h1, f, tol=1e-10)
        shift = (3, 1, 2)
        h2 = build((8, 8, 8), np.roll(kappa, shift, (0, 1, 2)))
        T2, _ = solve_equation(h2, np.roll(f, shift, (0, 1, 2)), tol=1e-10)
        assert np.allclose(np.roll(T1, shift, (0, 1, 2)), T2, atol=1e-8)

    def test_initial_guess_constant_invariance(self):
        rng = np.random.default_rng(15)
        kappa = rng.uniform(0.05, 1, (8, 8, 8))
        f = rng.standard_normal((8, 8, 8))
        f -= f.mean()
        h = build((8, 8, 8), kappa)
        x0 = rng.standard_normal((8, 8, 8))
        T1, _ = solve_equation(h, f, tol=1e-10, x0=x0)
        T2, _ = solve_equation(h, f, tol=1e-10, x0=x0 + 5.0)
        assert np.allclose(T1, T2, atol=1e-9)

    def test_zero_load_short_circuits(self):
        h = build((8, 8, 8), np.full((8, 8, 8), 0.3))
        T, cycles = solve_equation(h, np.zeros((8, 8, 8)))
        assert cycles == 0
        assert np.abs(T).max() == 0

    def test_convergence_failure_raises(self):
        rng = np.random.default_rng(16)
        kappa = rng.uniform(0.05, 1, (8, 8, 8))
        h = build((8, 8, 8), kappa)
        f = rng.standard_normal((8, 8, 8))
        f -= f.mean()
        with pytest.raises(ConvergenceError) as err:
            solve_equation(h, f, tol=1e-14, max_vcycles=1)
        assert err.value.residual > 0

    def test_contraction_factor(self):
        rng = np.random.default_rng(17)
        from opentm.element import MaterialParams, simp_conductivity
        mp = MaterialParams()
        worst = 0.0
        for _ in range(3):
            rho = rng.uniform(0.1, 1.0, (16, 16, 16))
            h = build((16, 16, 16), simp_conductivity(rho, mp))
            f = assemble_macro_load(h, 0)
            solve_equation(h, f, tol=1e-9, max_vcycles=100)
            res = np.asarray(h.residual_history)
            ratios = res[1:] / res[:-1]
            worst = max(worst, float(ratios.mean()))
        assert worst <= 0.7


class TestHierarchy:
    def test_level_chain_power_of_two(self):
        h = GridHierarchy((16, 16, 16))
        assert [lev.dims for lev in h.levels] == [(16,) * 3, (8,) * 3, (4,) * 3]

    def test_level_chain_flat_grid(self):
        h = GridHierarchy((100, 100, 1))
        assert [lev.dims for lev in h.levels] == [(100, 100, 1), (50, 50, 1), (25, 25, 1)]

    def test_uncoarsenable_grid_rejected(self):
        with pytest.raises(ValueError):
            GridHierarchy((63, 63, 63))

    def test_bad_dims_rejected(self):
        with pytest.raises(ValueError):
            GridHierarchy((0, 4, 4))

    def test_kappa_coarsening_is_child_mean(self):
        h = GridHierarchy((8, 8, 8))
        kap = np.random.default_rng(18).uniform(0.1, 1, (8, 8, 8))
        h.build(kap)
        lev1 = h.levels[1].kappa
        want = kap.reshape(4, 2, 4, 2, 4, 2).mean(axis=(1, 3, 5))
        assert np.allclose(lev1, want)
