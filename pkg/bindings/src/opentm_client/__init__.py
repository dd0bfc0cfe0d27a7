"""Thin scripting front end over the ``opentm`` command-line tool.

Everything here goes through the tool's public surface: the CLI subcommands
and the documented OTM1 voxel file format.  No solver code is imported, so
results are bit-identical to driving the CLI by hand with the same manifest.

    import opentm_client as otc
    rho = otc.run_instance(32, [1, 1e-4], [0.5, 0.4, 0.3, 0, 0, 0],
                           otc.InitWay.IWP, otc.Model.OC)
    cube = rho.reshape((32, 32, 32), order="F")
"""

from .client import Homo, InitWay, Model, Objective, run_instance
from .otm import read_voxels, write_voxels

__all__ = ["Homo", "InitWay", "Model", "Objective", "run_instance",
           "read_voxels", "write_voxels"]
__version__ = "0.1.0"
