"""Command-line driver: single runs, the anisotropic-target gallery, and
re-homogenization of stored fields.

Exit codes: 0 on success, 2 on usage errors, 3 when the linear solver fails.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import sys
import time
from pathlib import Path

import numpy as np

from .element import MaterialParams
from .field import FilterSpec, InitPattern
from .homogenize import ConductivityTensor, GridHierarchy, homogenize
from .io import format_kappa, read_density, write_outputs
from .objective import ObjectiveSpec, feasibility_check
from .optimize import (Model, OptimizationAborted, RunConfig,
                       run_optimization)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3


def _parse_target(text: str) -> ConductivityTensor:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 6:
        raise argparse.ArgumentTypeError(
            f"target needs 6 comma-separated values, got {len(parts)}"
        )
    vals = []
    for p in parts:
        if p.lower() in ("x", "nan", ""):
            vals.append(np.nan)
        else:
            try:
                vals.append(float(p))
            except ValueError as err:
                raise argparse.ArgumentTypeError(f"bad target component {p!r}") from err
    return ConductivityTensor(np.array(vals))


def _parse_dims(text: str):
    parts = text.lower().replace("x", ",").split(",")
    try:
        vals = [int(p) for p in parts if p != ""]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"bad resolution {text!r}") from err
    if len(vals) == 1:
        return (vals[0],) * 3
    if len(vals) == 3:
        return tuple(vals)
    raise argparse.ArgumentTypeError("resolution must be N or NX,NY,NZ")


def _parse_pair(text: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected two comma-separated values")
    return float(parts[0]), float(parts[1])


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None,
                   help="JSON file with defaults; explicit flags win")
    p.add_argument("--reso", type=_parse_dims, default=None,
                   help="grid size, N or NX,NY,NZ (default 32)")
    p.add_argument("--target", type=_parse_target, default=None,
                   help="six packed tensor components k11,k22,k33,k12,k23,k13 "
                        "('x' leaves one unconstrained)")
    p.add_argument("--kappa", type=_parse_pair, default=None, metavar="K0,KMIN",
                   help="solid and void conductivities (default 1,1e-4)")
    p.add_argument("--init", default=None,
                   choices=["iwp", "p", "d", "g", "ball", "random"])
    p.add_argument("--init-file", type=Path, default=None,
                   help="start from a stored rho.otm instead of a pattern")
    p.add_argument("--model", default=None, choices=[m.value for m in Model])
    p.add_argument("--objective", default=None, choices=["mse", "rel", "l1"])
    p.add_argument("--volfrac", type=float, default=None,
                   help="seed volume fraction; also the bound of model 'fixed'")
    p.add_argument("--filter-radius", type=float, default=None)
    p.add_argument("--penalty", type=float, default=None)
    p.add_argument("--sym", default=None, choices=["none", "central"])
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--tol", type=float, default=None, help="solver residual tolerance")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--vtk", action="store_true", help="also write rho.vti")


_RUN_DEFAULTS = {
    "reso": (32, 32, 32),
    "target": None,
    "kappa": (1.0, 1e-4),
    "init": "iwp",
    "init_file": None,
    "model": "oc",
    "objective": "mse",
    "volfrac": 0.5,
    "filter_radius": 1.5,
    "penalty": 3.0,
    "sym": "none",
    "max_iter": 500,
    "tol": 1e-6,
    "seed": 0,
    "vtk": False,
}


def _merge_config(args: argparse.Namespace):
    """Precedence: built-in defaults < config file < explicit flags."""
    merged = dict(_RUN_DEFAULTS)
    file_keys = set()
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise UsageError(f"cannot read config file {args.config}: {err}") from err
        for key, val in loaded.items():
            k = key.replace("-", "_")
            if k not in merged:
                raise UsageError(f"unknown config key {key!r}")
            if k == "reso":
                val = _parse_dims(str(val)) if not isinstance(val, list) else tuple(val)
            if k == "target":
                val = _parse_target(val) if isinstance(val, str) else \
                    ConductivityTensor(np.array([np.nan if v is None else v for v in val]))
            if k == "kappa" and isinstance(val, list):
                val = tuple(val)
            merged[k] = val
            file_keys.add(k)
    overridden = []
    for k in merged:
        flag_val = getattr(args, k, None)
        explicit = flag_val is True if k == "vtk" else flag_val is not None
        if explicit:
            if k in file_keys:
                overridden.append(k)
            merged[k] = flag_val
    return merged, overridden


class UsageError(Exception):
    pass


def build_run_config(merged: dict) -> RunConfig:
    if merged["target"] is None:
        raise UsageError("a --target tensor is required")
    target = merged["target"]
    if not isinstance(target, ConductivityTensor):
        target = ConductivityTensor(np.asarray(target, dtype=np.float64))
    k0, kmin = merged["kappa"]
    try:
        material = MaterialParams(kappa0=k0, kappa_min=kmin, penalty=merged["penalty"])
        spec = ObjectiveSpec(kind=merged["objective"], target=target)
        init = InitPattern(kind=merged["init"],
                           target_volume_fraction=merged["volfrac"],
                           seed=merged["seed"])
        init_field = None
        if merged["init_file"] is not None:
            init_field = read_density(merged["init_file"]).astype(np.float64)
        config = RunConfig(
            dims=merged["reso"],
            target=spec,
            material=material,
            filter=FilterSpec(radius=merged["filter_radius"]),
            init=init,
            init_field=init_field,
            model=Model(merged["model"]),
            max_iter=merged["max_iter"],
            symmetry=merged["sym"],
            solver_tol=merged["tol"],
            volume_bound=merged["volfrac"] if merged["model"] == "fixed" else None,
        )
    except (ValueError, OSError) as err:
        raise UsageError(str(err)) from err
    return config


def parse_config(argv) -> tuple[str, dict]:
    """Parse the command line into (command, options)."""
    parser = argparse.ArgumentParser(
        prog="opentm",
        description="Design periodic thermal microstructures matching a "
                    "target conductivity tensor.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="optimize one structure")
    _add_run_flags(run_p)

    gal_p = sub.add_parser("gallery", help="sweep feasible off-diagonal targets")
    gal_p.add_argument("--diag", type=str, default="0.3,0.2,0.1",
                       help="fixed diagonal k11,k22,k33")
    gal_p.add_argument("--step", type=float, default=0.05)
    gal_p.add_argument("--out", type=Path, required=True)
    gal_p.add_argument("--reso", type=_parse_dims, default=(32, 32, 32))
    gal_p.add_argument("--jobs", type=int, default=1,
                       help="worker processes for the case sweep")
    gal_p.add_argument("--max-iter", type=int, default=500)
    gal_p.add_argument("--seed", type=int, default=0)
    gal_p.add_argument("--dry-run", action="store_true",
                       help="only enumerate the feasible targets")

    hom_p = sub.add_parser("homogenize", help="evaluate the tensor of a stored field")
    hom_p.add_argument("--in", dest="infile", type=Path, required=True)
    hom_p.add_argument("--kappa", type=_parse_pair, default=(1.0, 1e-4))
    hom_p.add_argument("--penalty", type=float, default=3.0)
    hom_p.add_argument("--tol", type=float, default=1e-8)
    hom_p.add_argument("--out", type=Path, default=None,
                       help="optional file for the 3x3 tensor text")

    args = parser.parse_args(argv)
    return args.command, vars(args) | {"_args": args}


def cmd_run(args: argparse.Namespace) -> int:
    merged, overridden = _merge_config(args)
    config = build_run_config(merged)
    report = feasibility_check(config.target.target)
    if not report.feasible:
        print(f"warning: target is not positive definite "
              f"(leading minor {report.violated_minor} <= 0)", file=sys.stderr)
    out_dir = merged.get("out") or args.out
    if out_dir is None:
        raise UsageError("--out DIR is required")
    extra = {"overridden_flags": overridden,
             "config_file": str(args.config) if args.config else None}
    try:
        result = run_optimization(config)
    except OptimizationAborted as err:
        print(f"error: {err}", file=sys.stderr)
        write_outputs(err.partial, out_dir, vtk=merged["vtk"],
                      manifest_extra=extra | {"aborted": True})
        return EXIT_SOLVER
    write_outputs(result, out_dir, vtk=merged["vtk"], manifest_extra=extra)
    g = result.log[-1].g if result.log else float("nan")
    print(f"done: g={g:.3e} volfrac={result.field.mean():.4f} "
          f"iterations={result.iterations} converged={result.converged}")
    print(format_kappa(result.kappa.as_matrix()), end="")
    return EXIT_OK


def enumerate_gallery_targets(diag, step: float = 0.05):
    """Off-diagonal grid within the pairwise bounds, then the determinant screen.

    Per component the grid holds every multiple of ``step`` strictly below
    sqrt(kii*kjj), plus that bound floored to 0.01 when it clears the last
    multiple by at least half a step.  Returns (raw_targets, feasible_targets);
    a target is feasible when its determinant is strictly positive, with a
    1e-12 margin so analytically singular combinations are excluded
    regardless of rounding.
    """
    d1, d2, d3 = diag
    grids = []
    for a, b in ((d1, d2), (d2, d3), (d1, d3)):
        bound = float(np.sqrt(a * b))
        vals = [round(k * step, 10) for k in range(int(np.ceil(bound / step)))
                if k * step < bound - 1e-12]
        extra = np.floor(bound * 100.0) / 100.0
        if not vals or extra - vals[-1] >= 0.5 * step - 1e-12:
            if extra not in vals:
                vals.append(extra)
        grids.append(vals)
    raw = [
        np.array([d1, d2, d3, k12, k23, k13])
        for k12 in grids[0]
        for k23 in grids[1]
        for k13 in grids[2]
    ]
    feasible = []
    for t in raw:
        m = ConductivityTensor(t).as_matrix()
        if float(np.linalg.det(m)) > 1e-12:
            feasible.append(t)
    return raw, feasible


def _gallery_case(payload):
    idx, target, reso, max_iter, seed, out_dir = payload
    case_dir = Path(out_dir) / f"case_{idx:03d}"
    spec = ObjectiveSpec(kind="mse", target=ConductivityTensor(target))
    config = RunConfig(dims=reso, target=spec, max_iter=max_iter,
                       init=InitPattern(kind="iwp", target_volume_fraction=0.5,
                                        seed=seed))
    t0 = time.perf_counter()
    try:
        result = run_optimization(config)
        write_outputs(result, case_dir)
        g = result.log[-1].g
        vol = result.field.mean()
        status = "ok"
    except OptimizationAborted as err:
        write_outputs(err.partial, case_dir, manifest_extra={"aborted": True})
        g, vol, status = float("nan"), float("nan"), "solver-failure"
    except Exception as err:  # keep the batch going
        g, vol, status = float("nan"), float("nan"), f"error: {err}"
    secs = time.perf_counter() - t0
    return idx, target, g, vol, secs, status


def run_gallery(diag, step, out_dir, reso=(32, 32, 32), jobs=1, max_iter=500,
                seed=0, dry_run=False):
    """Optimize every feasible off-diagonal target and summarize the sweep."""
    raw, feasible = enumerate_gallery_targets(diag, step)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    print(f"{len(raw)} raw combinations, {len(feasible)} feasible "
          f"after the determinant screen")
    if dry_run:
        lines = ["index,k11,k22,k33,k12,k23,k13"]
        for i, t in enumerate(feasible):
            lines.append(f"{i}," + ",".join(f"{v:g}" for v in t))
        (out / "targets.csv").write_text("\n".join(lines) + "\n")
        return []

    payloads = [(i, t, reso, max_iter, seed, out) for i, t in enumerate(feasible)]
    rows = []
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            for res in pool.map(_gallery_case, payloads):
                rows.append(res)
    else:
        for payload in payloads:
            rows.append(_gallery_case(payload))
    rows.sort(key=lambda r: r[0])
    lines = ["index,k11,k22,k33,k12,k23,k13,g,volfrac,seconds,status"]
    for idx, t, g, vol, secs, status in rows:
        lines.append(f"{idx}," + ",".join(f"{v:g}" for v in t)
                     + f",{g:.6e},{vol:.4f},{secs:.1f},{status}")
    (out / "summary.csv").write_text("\n".join(lines) + "\n")
    return rows


def cmd_gallery(args: argparse.Namespace) -> int:
    diag = [float(v) for v in args.diag.split(",")]
    if len(diag) != 3 or any(v <= 0 for v in diag):
        raise UsageError("--diag needs three positive values")
    run_gallery(diag, args.step, args.out, reso=args.reso, jobs=args.jobs,
                max_iter=args.max_iter, seed=args.seed, dry_run=args.dry_run)
    return EXIT_OK


def cmd_homogenize(args: argparse.Namespace) -> int:
    try:
        rho = read_density(args.infile).astype(np.float64)
    except (OSError, ValueError) as err:
        raise UsageError(str(err)) from err
    k0, kmin = args.kappa
    material = MaterialParams(kappa0=k0, kappa_min=kmin, penalty=args.penalty)
    hier = GridHierarchy(rho.shape, dtype="float64")
    result = homogenize(hier, rho, material, tol=args.tol)
    text = format_kappa(result.tensor.as_matrix())
    print(text, end="")
    if args.out is not None:
        Path(args.out).write_text(text)
    return EXIT_OK


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        command, opts = parse_config(argv)
        args = opts["_args"]
        if command == "run":
            return cmd_run(args)
        if command == "gallery":
            return cmd_gallery(args)
        return cmd_homogenize(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as err:
        # argparse exits with its own code; normalize usage failures to 2
        return EXIT_USAGE if err.code not in (0, None) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
