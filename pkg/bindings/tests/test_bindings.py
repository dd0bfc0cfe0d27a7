"""Binding tests: parity with direct CLI runs, validation, stateful handle."""

import subprocess
import sys

import numpy as np
import pytest

import opentm_client as otc
from opentm_client.client import _cli_command


def cli(args):
    return subprocess.run(_cli_command() + list(args), capture_output=True, text=True)


class TestRunInstance:
    def test_parity_with_cli_run(self, tmp_path):
        # binding result must be bit-identical to the CLI with the same manifest
        rho = otc.run_instance(16, [1, 1e-4], [0.1, 0.1, 0.1, 0, 0, 0],
                               otc.InitWay.IWP, otc.Model.OC, max_iter=15,
                               out_dir=tmp_path / "binding")
        assert rho.shape == (4096,)
        assert rho.dtype == np.float32
        assert float(rho.min()) >= 0.0 and float(rho.max()) <= 1.0

        out = tmp_path / "direct"
        proc = cli(["run", "--reso", "16", "--target", "0.1,0.1,0.1,0.0,0.0,0.0",
                    "--kappa", "1.0,0.0001", "--init", "iwp", "--model", "oc",
                    "--objective", "mse", "--seed", "0", "--max-iter", "15",
                    "--out", str(out)])
        assert proc.returncode == 0, proc.stderr
        direct = otc.read_voxels(out / "rho.otm")
        assert np.array_equal(rho, direct)
        assert (tmp_path / "binding" / "rho.otm").read_bytes() \
            == (out / "rho.otm").read_bytes()

    def test_order_contract_round_trip(self, tmp_path):
        rho = otc.run_instance(8, [1, 1e-4], [0.15, 0.15, 0.15, 0, 0, 0],
                               max_iter=3, out_dir=tmp_path)
        cube = rho.reshape((8, 8, 8), order="F")
        assert np.array_equal(cube.ravel(order="F"), rho)

    def test_same_seed_identical(self, tmp_path):
        kwargs = dict(heat_ratio=[1, 1e-4], target=[0.15, 0.15, 0.15, 0, 0, 0],
                      init=otc.InitWay.RANDOM, seed=11, max_iter=3)
        a = otc.run_instance(8, out_dir=tmp_path / "a", **kwargs)
        b = otc.run_instance(8, out_dir=tmp_path / "b", **kwargs)
        assert np.array_equal(a, b)

    def test_validation_rejects_before_any_compute(self):
        with pytest.raises(ValueError):
            otc.run_instance(16, [1, 1e-4], [0.1, 0.1, 0.1, 0, 0])  # 5 values
        with pytest.raises(ValueError):
            otc.run_instance(16, [1e-4, 1], [0.1, 0.1, 0.1, 0, 0, 0])  # k0 < kmin
        with pytest.raises(ValueError):
            otc.run_instance(1, [1, 1e-4], [0.1, 0.1, 0.1, 0, 0, 0])
        with pytest.raises(ValueError):
            otc.run_instance(16, [1, 1e-4], [0.1, 0.1, 0.1, 0, 0, 0], init="swirl")


class TestHomo:
    def test_requires_config_first(self):
        h = otc.Homo()
        with pytest.raises(RuntimeError):
            h.set_density([0.5] * 8)
        with pytest.raises(RuntimeError):
            h.optimize()

    def test_density_length_mismatch_names_sizes(self):
        h = otc.Homo().set_config(8, [1, 1e-4], [0.1, 0.1, 0.1, 0, 0, 0])
        with pytest.raises(ValueError) as err:
            h.set_density([0.5] * 100)
        assert "100" in str(err.value) and str(8**3) in str(err.value)

    def test_out_of_range_density_reports_first_index(self):
        h = otc.Homo().set_config(8, [1, 1e-4], [0.1, 0.1, 0.1, 0, 0, 0])
        vals = [0.5] * 512
        vals[37] = 1.5
        with pytest.raises(ValueError) as err:
            h.set_density(vals)
        assert "37" in str(err.value)

    def test_custom_density_start(self, tmp_path):
        # uniform 0.5 yields conductivity kmin + 0.5^3 (k0 - kmin) on the nose
        k = 1e-4 + 0.125 * (1.0 - 1e-4)
        h = otc.Homo().set_config(8, [1, 1e-4], [k, k, k, 0, 0, 0], max_iter=5)
        h.set_density([0.5] * 512)
        rho = h.optimize(out_dir=tmp_path)
        assert rho.shape == (512,)
        # uniform start already matches its own tensor, field barely moves
        assert np.abs(rho - 0.5).max() < 0.05

    def test_default_pattern_used_without_set_density(self, tmp_path):
        h = otc.Homo().set_config(8, [1, 1e-4], [0.15, 0.15, 0.15, 0, 0, 0],
                                  max_iter=3)
        rho = h.optimize(out_dir=tmp_path / "handle")
        direct = otc.run_instance(8, [1, 1e-4], [0.15, 0.15, 0.15, 0, 0, 0],
                                  init=otc.InitWay.IWP, max_iter=3,
                                  out_dir=tmp_path / "direct")
        assert np.array_equal(rho, direct)


class TestVoxelHelpers:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        flat = rng.uniform(0, 1, 2 * 3 * 4).astype(np.float32)
        path = tmp_path / "x.otm"
        otc.write_voxels(path, flat, (2, 3, 4))
        assert np.array_equal(otc.read_voxels(path), flat)

    def test_bad_length_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            otc.write_voxels(tmp_path / "y.otm", np.zeros(7), (2, 2, 2))
