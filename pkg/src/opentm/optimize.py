"""Design loop: OC density updates under an adaptive volume bound.

The driver chains filter, SIMP, the periodic solves, the tensor objective and
the exact adjoint back through the filter, then lets a governor shrink or
rebound the volume-fraction ceiling before the multiplicative OC step.  A
minimum-volume mode driven by MMA and a fixed-volume OC mode are kept for
comparison studies.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .element import MaterialParams
from .field import (DensityField, FilterSpec, InitPattern, filter_backward,
                    filter_forward, init_density, project_central_symmetry)
from .homogenize import (ConductivityTensor, HomogenizationResult, effective_tensor,
                         solve_cases, tensor_sensitivity)
from .mma import MMAState, mma_update
from .objective import ObjectiveSpec, eval_objective, feasibility_check
from .solver import ConvergenceError, GridHierarchy


class Model(str, Enum):
    """Optimization model: adaptive-bound OC, minimum-volume MMA, fixed-bound OC."""

    ADAPTIVE_OC = "oc"
    MIN_VOLUME_MMA = "mma"
    FIXED_VOLUME_OC = "fixed"


@dataclass
class GovernorState:
    """Adaptive volume ceiling: current bound, decrease factor, stagnation count."""

    vstar: float = 1.0
    df: float = 1.0
    gap: float = 0.0
    count: int = 0
    bound: float = 1e-4
    iter: int = 0
    g_prev: float = 1.0
    reduced: bool = False

    @property
    def current_decrease(self) -> float:
        """Size of the next reduction step; infinite until a reduction happened."""
        return self.gap * self.df if self.reduced else float("inf")


def governor_update(state: GovernorState, g_now: float, rho: np.ndarray,
                    penalty: float) -> float:
    """Advance the volume governor by one iteration and return the new bound.

    When the objective is under the trigger bound the ceiling contracts
    toward the penalized mean density and the decrease factor decays; five
    consecutive stagnant iterations near the ceiling rebound it partially.
    """
    rho = np.asarray(rho, dtype=np.float64)
    if g_now <= state.bound:
        low_bound = float((rho**penalty).mean())
        state.gap = state.vstar - low_bound
        state.vstar = state.vstar - state.gap * state.df
        state.df = 0.8 * state.df
        state.reduced = True
    # the squeezed tail zigzags by several percent of g per iteration; a
    # tighter cutoff never flags stagnation and the rebound never fires
    little_progress = abs(state.g_prev - g_now) < max(0.1 * g_now, 1e-7)
    too_big = g_now > state.bound
    near_ceiling = float(rho.mean()) > state.vstar - 0.01
    if little_progress and too_big and near_ceiling:
        state.count += 1
    else:
        state.count = 0
    if state.count >= 5:
        state.vstar = state.vstar + 0.3 * state.gap * state.df
        state.count = 0
    state.g_prev = g_now
    state.iter += 1
    return state.vstar


@dataclass
class OCParams:
    """Optimality-criteria step: density floor, move limit, damping, bisection.

    The 0.02 move limit keeps the mismatch objective from zigzagging near its
    optimum; 0.05 overshoots measurably on 32^3 runs.
    """

    min_density: float = 0.001
    step_limit: float = 0.02
    damp: float = 0.5
    bisection_tol: float = 1e-5

    def __post_init__(self):
        if not (0.0 <= self.min_density < 1.0):
            raise ValueError(f"min_density must be in [0, 1), got {self.min_density}")
        if not (0.0 < self.step_limit <= 1.0):
            raise ValueError(f"step_limit must be in (0, 1], got {self.step_limit}")
        if not (0.0 < self.damp <= 1.0):
            raise ValueError(f"damp must be in (0, 1], got {self.damp}")


EPS_ASCENT = 1e-10  # floor on the update ratio so ascent elements rank lowest


def oc_update(rho: np.ndarray, sens: np.ndarray, vol_bound: float,
              params: OCParams):
    """Multiplicative OC step bounded by the move limit and the volume ceiling.

    Returns ``(rho_new, info)`` where ``info`` records the multiplier and
    whether the volume constraint was active.  The update ratio is
    ``B_e = max(-sens_e / (lam dV), eps)``: the floor sits outside the
    multiplier division, so a vanishing multiplier (slack bound) leaves
    ascent-direction elements falling instead of sweeping everything up.
    The multiplier is bisected so the mean density meets ``vol_bound``; when
    even the vanishing-multiplier step stays under the bound that step is
    returned and the constraint flagged inactive.
    """
    rho = np.asarray(rho, dtype=np.float64)
    sens = np.asarray(sens, dtype=np.float64)
    if sens.shape != rho.shape:
        raise ValueError(f"sensitivity shape {sens.shape} != density shape {rho.shape}")
    M = rho.size
    lo = np.maximum(rho - params.step_limit, params.min_density)
    hi = np.minimum(rho + params.step_limit, 1.0)
    desc = M * (-sens)  # -sens / (dV/drho), with dV/drho = 1/M uniformly

    def candidate(lam):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            ratio = np.maximum(desc / lam, EPS_ASCENT) ** params.damp
            return np.clip(rho * ratio, lo, hi)

    free = np.where(desc > 0.0, hi, np.where(desc < 0.0, lo, rho))  # lam -> 0 limit
    if float(free.mean(dtype=np.float64)) <= vol_bound:
        return free, {"lam": 0.0, "active": False}

    l1, l2 = 1e-30, 1.0
    for _ in range(200):
        if float(candidate(l2).mean(dtype=np.float64)) <= vol_bound:
            break
        l2 *= 4.0
    while (l2 - l1) / (l1 + l2) > 1e-13:
        mid = 0.5 * (l1 + l2)
        cur = candidate(mid)
        if float(cur.mean(dtype=np.float64)) > vol_bound:
            l1 = mid
        else:
            l2 = mid
        if abs(float(cur.mean(dtype=np.float64)) - vol_bound) <= params.bisection_tol:
            break
    lam = 0.5 * (l1 + l2)
    return candidate(lam), {"lam": lam, "active": True}


def smooth_sensitivity(rho: np.ndarray, sens: np.ndarray, spec: FilterSpec,
                       guard: float = 1e-3) -> np.ndarray:
    """Density-weighted radial smoothing of sensitivities before the OC step."""
    fld = DensityField(tuple(rho.shape), rho, np.zeros(rho.shape))
    num = filter_forward(DensityField(fld.dims, rho * sens, fld.grad), spec)
    return num / np.maximum(rho, guard)


@dataclass
class RunConfig:
    """Everything one optimization run needs; defaults mirror the CLI."""

    dims: tuple[int, int, int]
    target: ObjectiveSpec
    material: MaterialParams = dc_field(default_factory=MaterialParams)
    filter: FilterSpec = dc_field(default_factory=FilterSpec)
    init: InitPattern = dc_field(default_factory=InitPattern)
    init_field: Optional[np.ndarray] = None
    model: Model = Model.ADAPTIVE_OC
    oc: OCParams = dc_field(default_factory=OCParams)
    max_iter: int = 500
    conv_threshold: float = 1e-4
    symmetry: str = "none"              # none | central
    solver_tol: float = 1e-6
    max_vcycles: int = 200
    governor_bound: float = 1e-4
    volume_bound: Optional[float] = None  # required by the fixed-volume model
    epsilon: float = 1e-4                 # mismatch cap of the min-volume model
    mma_move: float = 0.1
    # density-weighted smoothing amplifies near-void noise and lifts the
    # reachable mismatch floor by 3-5x; the density filter alone regularizes
    sens_smoothing: bool = False
    # float32 fields stall near relative residuals of ~2e-6 on hard layouts,
    # above the default tolerance; 64-bit costs nothing on CPU
    dtype: str = "float64"

    def __post_init__(self):
        self.dims = tuple(int(n) for n in self.dims)
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.symmetry not in ("none", "central"):
            raise ValueError(f"symmetry must be 'none' or 'central', got {self.symmetry!r}")
        self.model = Model(self.model)
        if self.model is Model.FIXED_VOLUME_OC and self.volume_bound is None:
            raise ValueError("fixed-volume model needs volume_bound")
        if self.model is Model.MIN_VOLUME_MMA and int(np.prod(self.dims)) > 64**3:
            raise ValueError(
                "the MMA path is capped at 64^3 variables; larger grids lose "
                "volume-gradient precision and exhaust memory, use model 'oc'"
            )
        if self.init_field is not None:
            arr = np.asarray(self.init_field, dtype=np.float64)
            if arr.shape != self.dims:
                raise ValueError(f"init_field shape {arr.shape} != dims {self.dims}")
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ValueError("init_field densities must lie in [0, 1]")
            self.init_field = arr


@dataclass
class IterationRecord:
    iter: int
    g: float
    volfrac: float
    volfrac_filtered: float
    vstar: float
    vcycles: int
    ms: float


@dataclass
class OptimizationResult:
    field: DensityField
    kappa: ConductivityTensor
    log: list[IterationRecord]
    converged: bool
    iterations: int
    config: RunConfig


class OptimizationAborted(RuntimeError):
    """Solver failure mid-run; carries the partial result for persistence."""

    def __init__(self, message: str, partial: OptimizationResult):
        super().__init__(message)
        self.partial = partial


def _initial_field(config: RunConfig) -> DensityField:
    if config.init_field is not None:
        return DensityField.from_array(config.init_field)
    return init_density(config.dims, config.init)


def run_optimization(config: RunConfig,
                     callback: Optional[Callable] = None) -> OptimizationResult:
    """Run the full design loop and return the final field, tensor, and log.

    The loop evaluates the objective, checks convergence (three consecutive
    small objective changes, plus a small pending governor decrease for the
    adaptive model), then updates the densities.  A solver failure raises
    :class:`OptimizationAborted` with the partial log attached.
    """
    report = feasibility_check(config.target.target)
    if not report.feasible:
        warnings.warn(
            f"target tensor is not positive definite (leading minor "
            f"{report.violated_minor} fails); optimization may not reach it",
            RuntimeWarning,
        )

    fld = _initial_field(config)
    if config.symmetry == "central":
        project_central_symmetry(fld)

    hier = GridHierarchy(config.dims, dtype=config.dtype)
    governor = GovernorState(bound=config.governor_bound)
    mma_state = MMAState()
    log: list[IterationRecord] = []
    warm = None
    plateau = 0
    g_last = None
    converged = False
    result_inputs = None

    for it in range(1, config.max_iter + 1):
        t0 = time.perf_counter()
        rho_f = filter_forward(fld, config.filter)
        try:
            T_fields, cycles = solve_cases(hier, rho_f, config.material,
                                           tol=config.solver_tol,
                                           max_vcycles=config.max_vcycles, warm=warm)
        except ConvergenceError as err:
            partial = _make_result(fld, result_inputs, log, False, it - 1, config)
            raise OptimizationAborted(f"solver failed at iteration {it}: {err}",
                                      partial) from err
        warm = T_fields
        result = effective_tensor(hier, T_fields, rho_f, config.material,
                                  vcycles=cycles)
        result_inputs = result
        g, dG = eval_objective(config.target, result.tensor)

        sens_f = tensor_sensitivity(result, dG)
        sens = filter_backward(fld, config.filter, sens_f)
        if config.symmetry == "central":
            fld.grad[...] = sens
            project_central_symmetry(fld, also_grad=True)
            sens = fld.grad.copy()

        ms = (time.perf_counter() - t0) * 1000.0
        if config.model is Model.ADAPTIVE_OC:
            ceiling = governor.vstar
        elif config.model is Model.FIXED_VOLUME_OC:
            ceiling = config.volume_bound
        else:
            ceiling = float("nan")
        log.append(IterationRecord(
            iter=it, g=g, volfrac=fld.mean(),
            volfrac_filtered=float(rho_f.mean(dtype=np.float64)),
            vstar=ceiling, vcycles=cycles, ms=ms,
        ))
        if callback is not None:
            callback(it, fld, result, g)

        if g_last is not None and abs(g - g_last) < config.conv_threshold:
            plateau += 1
        else:
            plateau = 0
        g_last = g
        if g <= 1e-12:
            converged = True  # matched to round-off, nothing left to optimize
        elif plateau >= 3:
            if config.model is Model.ADAPTIVE_OC:
                # stop only in a matched state: the slow post-squeeze descent
                # also plateaus, and stopping there strands g above the bound
                converged = (governor.current_decrease < 1e-4
                             and g <= governor.bound)
            elif config.model is Model.MIN_VOLUME_MMA:
                converged = g <= config.epsilon
            else:
                converged = True
        if converged or it == config.max_iter:
            break

        if config.model is Model.ADAPTIVE_OC:
            vbound = governor_update(governor, g, fld.rho, config.material.penalty)
            # while the ceiling is slack, cap volume growth at half a move per
            # iteration: an unbounded vanishing-multiplier step is pure sign
            # descent and stalls in bang-bang states
            mean_now = fld.mean()
            vbound = min(vbound, mean_now + 0.5 * config.oc.step_limit)
            step_sens = (smooth_sensitivity(fld.rho, sens, config.filter)
                         if config.sens_smoothing else sens)
            new_rho, _ = oc_update(fld.rho, step_sens, vbound, config.oc)
            if np.array_equal(new_rho, fld.rho):
                # frozen sign-descent state: shed a sliver of volume so the
                # multiplier turns finite and magnitudes re-enter the update
                new_rho, _ = oc_update(fld.rho, step_sens,
                                       mean_now - 0.25 * config.oc.step_limit,
                                       config.oc)
            fld.rho[...] = new_rho
        elif config.model is Model.FIXED_VOLUME_OC:
            step_sens = (smooth_sensitivity(fld.rho, sens, config.filter)
                         if config.sens_smoothing else sens)
            new_rho, _ = oc_update(fld.rho, step_sens, config.volume_bound, config.oc)
            fld.rho[...] = new_rho
        else:  # minimum-volume MMA on the mismatch constraint g <= epsilon
            M = fld.num_elements
            dV = filter_backward(fld, config.filter, np.full(fld.dims, 1.0 / M))
            xnew = mma_update(fld.rho.ravel(), dV.ravel(), g - config.epsilon,
                              sens.ravel(), mma_state,
                              xmin=config.oc.min_density, xmax=1.0,
                              move=config.mma_move)
            fld.rho[...] = xnew.reshape(fld.dims)

        if config.symmetry == "central":
            project_central_symmetry(fld)

    return _make_result(fld, result_inputs, log, converged, len(log), config)


def _make_result(fld, result: Optional[HomogenizationResult], log, converged,
                 iterations, config) -> OptimizationResult:
    kappa = result.tensor if result is not None else ConductivityTensor(np.full(6, np.nan))
    return OptimizationResult(field=fld, kappa=kappa, log=log,
                              converged=converged, iterations=iterations,
                              config=config)
