"""One-shot ``run_instance`` and the stateful ``Homo`` optimization handle."""

from __future__ import annotations

import enum
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from .otm import read_voxels, write_voxels


class InitWay(str, enum.Enum):
    """Seed patterns, spelled exactly like the CLI choices."""

    IWP = "iwp"
    P = "p"
    D = "d"
    G = "g"
    BALL = "ball"
    RANDOM = "random"


class Model(str, enum.Enum):
    OC = "oc"
    MMA = "mma"
    FIXED = "fixed"


class Objective(str, enum.Enum):
    MSE = "mse"
    REL = "rel"
    L1 = "l1"


class OpentmError(RuntimeError):
    """The CLI returned a failure exit code."""


def _cli_command():
    exe = shutil.which("opentm")
    if exe is not None:
        return [exe]
    return [sys.executable, "-m", "opentm"]


def _validate_heat_ratio(heat_ratio):
    k0, kmin = (float(v) for v in heat_ratio)
    if not (k0 > kmin > 0.0):
        raise ValueError(f"heat_ratio must satisfy k0 > kmin > 0, got {heat_ratio}")
    return k0, kmin


def _validate_target(target):
    vals = [float(v) for v in target]
    if len(vals) != 6:
        raise ValueError(f"target needs 6 packed components, got {len(vals)}")
    if not all(np.isfinite(vals)):
        raise ValueError("target components must be finite")
    return vals


def _invoke(args, out_dir: Path) -> np.ndarray:
    proc = subprocess.run(_cli_command() + args, capture_output=True, text=True)
    if proc.returncode != 0:
        raise OpentmError(
            f"opentm exited with code {proc.returncode}:\n{proc.stderr.strip()}"
        )
    return read_voxels(out_dir / "rho.otm")


def run_instance(resolution, heat_ratio, target, init=InitWay.IWP,
                 model=Model.OC, objective=Objective.MSE, seed: int = 0,
                 max_iter: int = 500, out_dir=None) -> np.ndarray:
    """Optimize one structure and return its densities as a flat array.

    The sequence has length ``resolution**3`` in x-fastest order, matching
    the payload of the ``rho.otm`` written next to the other run outputs.
    ``out_dir`` defaults to a temporary directory that is kept, so the full
    artifact set stays inspectable.
    """
    resolution = int(resolution)
    if resolution < 2:
        raise ValueError(f"resolution must be at least 2, got {resolution}")
    k0, kmin = _validate_heat_ratio(heat_ratio)
    vals = _validate_target(target)
    init = InitWay(init)
    model = Model(model)
    objective = Objective(objective)

    out = Path(out_dir) if out_dir is not None else \
        Path(tempfile.mkdtemp(prefix="opentm-run-"))
    args = ["run",
            "--reso", str(resolution),
            "--target", ",".join(repr(v) for v in vals),
            "--kappa", f"{k0!r},{kmin!r}",
            "--init", init.value,
            "--model", model.value,
            "--objective", objective.value,
            "--seed", str(int(seed)),
            "--max-iter", str(int(max_iter)),
            "--out", str(out)]
    return _invoke(args, out)


class Homo:
    """Stateful handle: configure once, optionally seed densities, optimize.

    >>> h = Homo()
    >>> h.set_config(16, [1, 1e-4], [0.1, 0.1, 0.1, 0, 0, 0])
    >>> h.set_density([0.5] * 16**3)
    >>> rho = h.optimize()
    """

    def __init__(self):
        self._config = None
        self._density = None

    def set_config(self, resolution, heat_ratio, target, init=InitWay.IWP,
                   model=Model.OC, objective=Objective.MSE, seed: int = 0,
                   max_iter: int = 500):
        resolution = int(resolution)
        if resolution < 2:
            raise ValueError(f"resolution must be at least 2, got {resolution}")
        self._config = {
            "resolution": resolution,
            "heat_ratio": _validate_heat_ratio(heat_ratio),
            "target": _validate_target(target),
            "init": InitWay(init),
            "model": Model(model),
            "objective": Objective(objective),
            "seed": int(seed),
            "max_iter": int(max_iter),
        }
        self._density = None
        return self

    def set_density(self, flat) -> "Homo":
        """Provide the starting field as a flat x-fastest sequence in [0, 1]."""
        if self._config is None:
            raise RuntimeError("call set_config before set_density")
        arr = np.asarray(flat, dtype=np.float64).ravel()
        n = self._config["resolution"]
        if arr.size != n**3:
            raise ValueError(f"density length {arr.size} != expected {n**3}")
        bad = np.nonzero((arr < 0.0) | (arr > 1.0))[0]
        if bad.size:
            raise ValueError(
                f"density out of [0, 1] at flat index {int(bad[0])}: {arr[bad[0]]}"
            )
        self._density = arr
        return self

    def optimize(self, out_dir=None) -> np.ndarray:
        """Run the configured optimization and return the final flat field."""
        if self._config is None:
            raise RuntimeError("call set_config before optimize")
        c = self._config
        out = Path(out_dir) if out_dir is not None else \
            Path(tempfile.mkdtemp(prefix="opentm-homo-"))
        out.mkdir(parents=True, exist_ok=True)
        n = c["resolution"]
        args = ["run",
                "--reso", str(n),
                "--target", ",".join(repr(v) for v in c["target"]),
                "--kappa", f'{c["heat_ratio"][0]!r},{c["heat_ratio"][1]!r}',
                "--model", c["model"].value,
                "--objective", c["objective"].value,
                "--seed", str(c["seed"]),
                "--max-iter", str(c["max_iter"]),
                "--out", str(out)]
        if self._density is not None:
            seed_file = out / "init.otm"
            write_voxels(seed_file, self._density, (n, n, n))
            args += ["--init-file", str(seed_file)]
        else:
            args += ["--init", c["init"].value]
        return _invoke(args, out)
