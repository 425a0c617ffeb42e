import json
import math
import os

import numpy as np
import pytest

from stquench.config import (ConfigError, RunConfig, check_resources,
                             estimate_run_bytes, to_dmrg_settings,
                             to_protocol, to_tdvp_settings)
from stquench.driver import ObservableSeries
from stquench.mps import Mps
from stquench import store


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfigParsing:
    def test_defaults_reproduce_standard_setup(self, tmp_path):
        cfg = RunConfig.from_file(write_cfg(tmp_path, "geometry.Ly = 3\n"))
        assert cfg.lx() == 24                       # Lx = 8 Ly
        assert cfg.h() == pytest.approx(5 * cfg.gc())   # h = 5 gc
        assert cfg.model_params().t0 == pytest.approx(-2 * cfg.get("quench.tau"))
        assert cfg.get("mps.chiMax") == 512
        assert cfg.get("quench.order") == 4

    def test_unknown_key_rejected(self, tmp_path):
        path = write_cfg(tmp_path, "model.coupling = 2\n")
        with pytest.raises(ConfigError, match="unknown key"):
            RunConfig.from_file(path)

    def test_typo_in_value_rejected(self, tmp_path):
        path = write_cfg(tmp_path, "quench.dt = fast\n")
        with pytest.raises(ConfigError):
            RunConfig.from_file(path)

    def test_comments_and_blank_lines(self, tmp_path):
        path = write_cfg(tmp_path, "# a comment\n\nmodel.J = 2.0  # inline\n")
        cfg = RunConfig.from_file(path)
        assert cfg.get("model.J") == 2.0

    def test_overrides_apply_after_file(self, tmp_path):
        path = write_cfg(tmp_path, "geometry.Ly = 2\nquench.v = 3\n")
        cfg = RunConfig.from_file(path, overrides=["quench.v=4.5"])
        assert cfg.get("quench.v") == 4.5

    def test_infinite_velocity_marks_uniform(self, tmp_path):
        cfg = RunConfig.from_file(write_cfg(tmp_path, "quench.v = inf\n"))
        assert cfg.is_uniform_quench()
        proto = to_protocol(cfg)
        assert proto.uniform

    def test_explicit_gc_and_h(self, tmp_path):
        cfg = RunConfig.from_file(write_cfg(
            tmp_path, "model.gc = 3.0\nmodel.h = 1.5\n"))
        assert cfg.gc() == 3.0
        assert cfg.h() == 1.5

    def test_auto_gc_uses_finite_size_value(self, tmp_path):
        from stquench.analysis import pseudo_critical_field
        cfg = RunConfig.from_file(write_cfg(tmp_path, "geometry.Ly = 5\n"))
        assert cfg.gc() == pytest.approx(pseudo_critical_field(5))

    def test_settings_builders(self, tmp_path):
        cfg = RunConfig.from_file(write_cfg(
            tmp_path,
            "dmrg.chiSchedule = 8,16\nmps.chiMax = 12\nquench.dt = 0.02\n"))
        d = to_dmrg_settings(cfg)
        assert d.chi_schedule == (8, 12)
        t = to_tdvp_settings(cfg)
        assert t.dt == 0.02 and t.chi_max == 12

    def test_resolved_dict_records_conventions(self, tmp_path):
        cfg = RunConfig.from_file(write_cfg(tmp_path, "geometry.Ly = 2\n"))
        resolved = cfg.resolved_dict()
        assert resolved["resolved.Lx"] == 16
        assert resolved["resolved.h"] == pytest.approx(5 * cfg.gc())
        assert resolved["resolved.t0"] == pytest.approx(-0.8)

    def test_resource_estimator_scales(self):
        small = estimate_run_bytes(16, 32, 6)
        big = estimate_run_bytes(200, 512, 9)
        assert big > 100 * small
        cfg = RunConfig.from_dict({"geometry.Ly": 5, "mps.chiMax": 512})
        projected, cap = check_resources(cfg)
        assert projected > cap  # the production config trips the default cap


class TestCsvRoundTrip:
    def test_write_then_read_is_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = [(float(t), rng.standard_normal() * 10.0**rng.integers(-8, 8),
                 rng.standard_normal(), rng.standard_normal())
                for t in range(1000)]
        path = tmp_path / "energy.csv"
        store.write_csv(path, ("t", "E", "E0", "eps"), rows)
        header, back, source = store.read_csv(path)
        assert header == ("t", "E", "E0", "eps")
        assert source == "simulation"
        for a, b in zip(rows, back):
            assert a == b

    def test_rewrite_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(1)
        rows = [(t * 0.05, rng.standard_normal(), np.nan, rng.standard_normal())
                for t in range(1000)]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        store.write_csv(p1, ("t", "E", "E0", "eps"), rows)
        _, back, _ = store.read_csv(p1)
        store.write_csv(p2, ("t", "E", "E0", "eps"), back)
        assert p1.read_bytes() == p2.read_bytes()

    def test_schema_version_mismatch_is_explicit(self, tmp_path):
        path = tmp_path / "energy.csv"
        path.write_text("# schema: v999 source: simulation\nt,E\n1,2\n")
        with pytest.raises(ValueError, match="migration"):
            store.read_csv(path)

    def test_series_round_trip(self, tmp_path):
        series = ObservableSeries()
        series.energy = [(0.0, -3.5, -3.6, 0.1), (0.5, -3.4, np.nan, np.nan)]
        series.entropy = [(0.0, -0.5, 0.3), (0.0, 0.5, 0.31)]
        series.correlations = [(0.5, 1.0, 0.2)]
        with store.RunDirectory(tmp_path / "run") as run:
            store.write_series(run, series)
            back = store.read_series(run)
        assert back.energy[0] == series.energy[0]
        assert np.isnan(back.energy[1][2])
        assert back.entropy == series.entropy


class TestRunDirectory:
    def test_concurrent_writers_excluded(self, tmp_path):
        d = tmp_path / "run"
        with store.RunDirectory(d):
            with pytest.raises(store.RunLockError):
                with store.RunDirectory(d):
                    pass

    def test_distinct_directories_independent(self, tmp_path):
        with store.RunDirectory(tmp_path / "a"):
            with store.RunDirectory(tmp_path / "b"):
                pass


class TestManifest:
    def test_every_file_checksummed(self, tmp_path):
        with store.RunDirectory(tmp_path / "run") as run:
            store.write_csv(run.file("energy.csv"), ("t", "E", "E0", "eps"),
                            [(0, 1, 2, 3)])
            (tmp_path / "run" / "notes.txt").write_text("hello")
            store.write_manifest(run, "test", {"geometry.Ly": 2})
            manifest = store.read_manifest(run.path)
        assert set(manifest["files"]) == {"energy.csv", "notes.txt"}
        assert manifest["files"]["energy.csv"] == store.sha256_file(
            tmp_path / "run" / "energy.csv")
        assert manifest["tq_convention"].startswith("tq = max")

    def test_checkpoint_round_trip(self, tmp_path, rng):
        psi = Mps.random(5, 6, rng)
        with store.RunDirectory(tmp_path / "run") as run:
            store.save_checkpoint(run, psi, step=7, t=0.35)
            back, cursor = store.load_checkpoint(run)
        assert cursor["step"] == 7
        assert cursor["t"] == 0.35
        for a, b in zip(psi.tensors, back.tensors):
            assert np.array_equal(a, b)
