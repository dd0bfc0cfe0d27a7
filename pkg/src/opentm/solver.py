"""Matrix-free periodic conduction operator with geometric multigrid.

The global system is never assembled on the fine grids.  Each level keeps a
per-element conduction factor and a 27-point stencil derived from the element
template; the smoother is an 8-color Gauss-Seidel sweep over the parity
classes, restriction is full weighting, prolongation is trilinear, and the
coarsest level is solved directly through a sparse factorization with the
constant-temperature nullspace pinned.

Level templates carry per-axis scale factors chosen so that, for constant
conductivity, the rediscretized coarse operator equals the Galerkin product
of restriction, fine operator and prolongation (the trilinear spaces nest).
That keeps coarse corrections correctly scaled on both 3-d grids and
flat nz == 1 grids.
"""

from __future__ import annotations

import warnings
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix, csc_matrix
from scipy.sparse.linalg import splu

from .element import CORNERS

_AXES = (0, 1, 2)

# 1-d building blocks of the trilinear element: stiffness and mass factors.
_D1 = np.array([[1.0, -1.0], [-1.0, 1.0]])
_M1 = np.array([[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])


class ConvergenceError(RuntimeError):
    """Solve did not reach the requested residual within the cycle budget."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def _axis_template(axis: int) -> np.ndarray:
    mats = [_M1, _M1, _M1]
    mats[axis] = _D1
    # node index n = ix + 2*iy + 4*iz, so z is the slow kron factor
    return np.kron(np.kron(mats[2], mats[1]), mats[0])


def _level_template(axis_scale) -> np.ndarray:
    K = np.zeros((8, 8))
    for a in range(3):
        K += axis_scale[a] * _axis_template(a)
    return K


def _fold(step: int, n: int) -> int:
    # periodic aliasing for tiny axes: +-1 wrap onto 0 (n=1) or coincide (n=2)
    if n == 1:
        return 0
    if n == 2 and step == -1:
        return 1
    return step


class GridLevel:
    """One multigrid level: arrays, element factors, and the operator stencil."""

    def __init__(self, dims, axis_scale, dtype):
        self.dims = tuple(dims)
        self.axis_scale = tuple(axis_scale)
        self.template = _level_template(axis_scale)
        self.dtype = np.dtype(dtype)
        self.T = np.zeros(self.dims, dtype=self.dtype)
        self.f = np.zeros(self.dims, dtype=self.dtype)
        self.r = np.zeros(self.dims, dtype=self.dtype)
        self.kappa: Optional[np.ndarray] = None
        self.stencil: Optional[dict] = None

    @property
    def num_vertices(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def build_stencil(self, kappa: np.ndarray) -> None:
        """Accumulate the periodic 27-point stencil for the given factors."""
        if kappa.shape != self.dims:
            raise ValueError(f"kappa shape {kappa.shape} != level dims {self.dims}")
        self.kappa = np.ascontiguousarray(kappa, dtype=self.dtype)
        nx, ny, nz = self.dims
        rolled = {}
        for a in range(8):
            sh = tuple(int(s) for s in CORNERS[a])
            rolled[a] = np.roll(self.kappa, sh, axis=_AXES)
        W: dict[tuple, np.ndarray] = {}
        for a in range(8):
            for b in range(8):
                d = CORNERS[b] - CORNERS[a]
                key = (_fold(int(d[0]), nx), _fold(int(d[1]), ny), _fold(int(d[2]), nz))
                coeff = self.dtype.type(self.template[a, b])
                if key in W:
                    W[key] += coeff * rolled[a]
                else:
                    W[key] = coeff * rolled[a]
        self.stencil = dict(sorted(W.items()))
        diag = self.stencil[(0, 0, 0)]
        if not (diag > 0).all():
            raise RuntimeError("non-positive relaxation diagonal; check conductivities")


def apply_K(level: GridLevel, T: np.ndarray) -> np.ndarray:
    """Matrix-free product of the level operator with a vertex field."""
    out = np.zeros(level.dims, dtype=level.dtype)
    for (dx, dy, dz), W in level.stencil.items():
        if dx == 0 and dy == 0 and dz == 0:
            out += W * T
        else:
            out += W * np.roll(T, (-dx, -dy, -dz), axis=_AXES)
    return out


def _colors(dims):
    return [
        (cx, cy, cz)
        for cx in range(min(2, dims[0]))
        for cy in range(min(2, dims[1]))
        for cz in range(min(2, dims[2]))
    ]


def relax_gs8(level: GridLevel, sweeps: int = 1) -> None:
    """Gauss-Seidel relaxation by parity colors, updating ``level.T`` in place.

    Within one color no two vertices share an element, so the whole color
    updates at once from the other colors' current values.
    """
    dims = level.dims
    for n in dims:
        if n > 1 and n % 2:
            raise ValueError(f"relaxation needs even axes, got dims {dims}")
    T, f = level.T, level.f
    W = level.stencil
    diag = W[(0, 0, 0)]
    colors = _colors(dims)
    for _ in range(sweeps):
        for c in colors:
            view = tuple(slice(cc, None, 2) for cc in c)
            acc = f[view].copy()
            for key, Wd in W.items():
                if key == (0, 0, 0):
                    continue
                nview = []
                shift = []
                for ax in range(3):
                    t = c[ax] + key[ax]
                    cp = t % 2 if dims[ax] > 1 else 0
                    q = (t - cp) // 2
                    nview.append(slice(cp, None, 2))
                    shift.append(-q)
                vals = T[tuple(nview)]
                if any(shift):
                    vals = np.roll(vals, tuple(shift), axis=_AXES)
                acc -= Wd[view] * vals
            T[view] = acc / diag[view]


def restrict(level_f: GridLevel, level_c: GridLevel) -> None:
    """Full-weighting restriction of the fine residual into the coarse load."""
    s = level_f.r
    for ax in range(3):
        if level_c.dims[ax] < level_f.dims[ax]:
            s = 0.5 * s + 0.25 * (np.roll(s, 1, axis=ax) + np.roll(s, -1, axis=ax))
    sel = tuple(
        slice(None, None, 2) if level_c.dims[ax] < level_f.dims[ax] else slice(None)
        for ax in range(3)
    )
    level_c.f[...] = s[sel]


def _interp_axis(arr: np.ndarray, ax: int) -> np.ndarray:
    n = arr.shape[ax]
    shape = list(arr.shape)
    shape[ax] = 2 * n
    out = np.empty(shape, dtype=arr.dtype)
    even = [slice(None)] * 3
    odd = [slice(None)] * 3
    even[ax] = slice(0, None, 2)
    odd[ax] = slice(1, None, 2)
    out[tuple(even)] = arr
    out[tuple(odd)] = 0.5 * (arr + np.roll(arr, -1, axis=ax))
    return out


def prolong_correct(level_f: GridLevel, level_c: GridLevel) -> None:
    """Trilinear interpolation of the coarse correction, added to the fine T."""
    t = level_c.T
    for ax in range(3):
        if level_c.dims[ax] < level_f.dims[ax]:
            t = _interp_axis(t, ax)
    level_f.T += t


class GridHierarchy:
    """Stack of grid levels from the design resolution down to a direct solve.

    Dimensions are halved while every axis larger than one stays even; the
    remaining level is factorized sparsely with vertex 0 pinned.  Grids whose
    coarsest level would still be large are rejected up front.
    """

    def __init__(self, dims, dtype=np.float32, smooth_sweeps=(1, 1),
                 coarse_target=64, direct_limit=40000):
        dims = tuple(int(n) for n in dims)
        if len(dims) != 3 or any(n < 1 for n in dims):
            raise ValueError(f"dims must be three positive integers, got {dims}")
        self.dtype = np.dtype(dtype)
        self.pre_sweeps, self.post_sweeps = smooth_sweeps

        chain = [dims]
        while True:
            cur = chain[-1]
            if int(np.prod(cur)) <= coarse_target:
                break
            if any(n % 2 for n in cur if n > 1):
                break
            chain.append(tuple(n // 2 if n > 1 else 1 for n in cur))
        if int(np.prod(chain[-1])) > direct_limit:
            raise ValueError(
                f"dims {dims} cannot be coarsened below {direct_limit} vertices "
                f"(reached {chain[-1]}); use even (ideally power-of-two) sizes"
            )

        self.levels: list[GridLevel] = []
        h = np.ones(3)
        norm = 1.0
        for li, d in enumerate(chain):
            vol = h.prod()
            scale = tuple(norm * vol / h[a] ** 2 for a in range(3))
            self.levels.append(GridLevel(d, scale, self.dtype))
            if li + 1 < len(chain):
                coarsened = [chain[li + 1][a] < d[a] for a in range(3)]
                for a in range(3):
                    if coarsened[a]:
                        h[a] *= 2.0
                norm *= 0.5 ** sum(coarsened)
        self._lu = None
        self.residual_history: list[float] = []

    @property
    def dims(self):
        return self.levels[0].dims

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def _coarsen_kappa(self, kap: np.ndarray, level: int) -> np.ndarray:
        fine = self.levels[level].dims
        coarse = self.levels[level + 1].dims
        out = kap
        for ax in range(3):
            if coarse[ax] < fine[ax]:
                shape = list(out.shape)
                shape[ax] = shape[ax] // 2
                shape.insert(ax + 1, 2)
                out = out.reshape(shape).mean(axis=ax + 1)
        return out

    def build(self, kappa_elems: np.ndarray) -> None:
        """Install per-element factors on all levels and factorize the coarsest."""
        kap = np.asarray(kappa_elems, dtype=self.dtype)
        self.levels[0].build_stencil(kap)
        for li in range(len(self.levels) - 1):
            kap = self._coarsen_kappa(self.levels[li].kappa, li)
            self.levels[li + 1].build_stencil(kap)
        self._factorize_coarse()

    def _assemble_level(self, level: GridLevel):
        nx, ny, nz = level.dims
        n = level.num_vertices
        I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                              indexing="ij")
        rows_base = (I * ny + J) * nz + K
        rows, cols, vals = [], [], []
        for (dx, dy, dz), W in level.stencil.items():
            ci = (I + dx) % nx
            cj = (J + dy) % ny
            ck = (K + dz) % nz
            rows.append(rows_base.ravel())
            cols.append(((ci * ny + cj) * nz + ck).ravel())
            vals.append(W.ravel().astype(np.float64))
        A = coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        )
        return A.tocsr()

    def _factorize_coarse(self) -> None:
        A = self._assemble_level(self.levels[-1])
        n = A.shape[0]
        if n == 1:
            self._lu = None
            return
        reduced = csc_matrix(A[1:, 1:])
        self._lu = splu(reduced)

    def coarse_solve(self) -> None:
        """Direct solve on the coarsest level with the mean pinned to zero."""
        level = self.levels[-1]
        f = level.f.ravel().astype(np.float64)
        total = f.sum()
        scale = np.abs(f).sum()
        # round-off drift from float32 restriction sits orders below this
        if scale > 0 and abs(total) > 1e-4 * scale:
            warnings.warn(
                "coarse load has a nonzero mean component; projecting it out",
                RuntimeWarning,
            )
        f = f - total / f.size
        x = np.zeros(f.size)
        if self._lu is not None:
            x[1:] = self._lu.solve(f[1:])
        x -= x.mean()
        level.T[...] = x.reshape(level.dims).astype(self.dtype)

    def vcycle(self) -> None:
        L = len(self.levels) - 1
        for li in range(L):
            lev = self.levels[li]
            if li > 0:
                lev.T[...] = 0
            relax_gs8(lev, self.pre_sweeps)
            lev.r[...] = lev.f - apply_K(lev, lev.T)
            restrict(lev, self.levels[li + 1])
        self.coarse_solve()
        for li in range(L - 1, -1, -1):
            prolong_correct(self.levels[li], self.levels[li + 1])
            relax_gs8(self.levels[li], self.post_sweeps)


def coarse_solve(hier: GridHierarchy) -> np.ndarray:
    """Direct solve of the coarsest level; returns its zero-mean temperature."""
    hier.coarse_solve()
    return hier.levels[-1].T


def assemble_macro_load(hier: GridHierarchy, case: int) -> np.ndarray:
    """Vertex loads produced by a unit macroscopic gradient along ``case``.

    Each element scatters its factor times the load template onto its eight
    corners with periodic wrap; for a uniform medium everything cancels.
    """
    if case not in (0, 1, 2):
        raise ValueError(f"load case must be 0, 1 or 2, got {case}")
    level = hier.levels[0]
    if level.kappa is None:
        raise RuntimeError("hierarchy not built; call build() first")
    f0 = level.template @ CORNERS.astype(np.float64)
    f = np.zeros(level.dims, dtype=level.dtype)
    for a in range(8):
        sh = tuple(int(s) for s in CORNERS[a])
        f += level.dtype.type(f0[a, case]) * np.roll(level.kappa, sh, axis=_AXES)
    return f


def solve_equation(hier: GridHierarchy, f: np.ndarray, tol: float = 1e-6,
                   max_vcycles: int = 200, x0: Optional[np.ndarray] = None):
    """Drive V-cycles until the relative residual drops below ``tol``.

    Returns ``(T, cycles)`` with ``mean(T) = 0``.  Loads are projected onto
    the compatible zero-mean subspace first; a zero load short-circuits.

    Raises
    ------
    ConvergenceError
        If ``max_vcycles`` cycles do not reach the tolerance.
    """
    level = hier.levels[0]
    if f.shape != level.dims:
        raise ValueError(f"load shape {f.shape} != grid dims {level.dims}")
    fnorm = float(np.linalg.norm(f.astype(np.float64)))
    if fnorm == 0.0:
        level.T[...] = 0
        hier.residual_history = []
        return level.T.copy(), 0
    fwork = f.astype(level.dtype)
    fwork -= level.dtype.type(fwork.mean(dtype=np.float64))
    level.f[...] = fwork
    if x0 is not None:
        level.T[...] = x0.astype(level.dtype)
        level.T -= level.dtype.type(level.T.mean(dtype=np.float64))
    else:
        level.T[...] = 0

    hier.residual_history = []
    for cycle in range(1, max_vcycles + 1):
        hier.vcycle()
        level.T -= level.dtype.type(level.T.mean(dtype=np.float64))
        r = level.f.astype(np.float64) - apply_K(level, level.T).astype(np.float64)
        rel = float(np.linalg.norm(r)) / fnorm
        hier.residual_history.append(rel)
        if rel <= tol:
            return level.T.copy(), cycle
    raise ConvergenceError(
        f"no convergence after {max_vcycles} V-cycles (residual {rel:.3e})", rel
    )
