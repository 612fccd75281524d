"""Configuration parsing/validation, CLI dispatch, output format, and the
thread-count reproducibility contract."""

import math

import numpy as np
import pytest

from tflab.cli import dispatch, main, write_sweep_csv
from tflab.config import ConfigError, ExperimentConfig, config_hash, parse_config, validate
from tflab.reporting import CsvWriter, JsonlWriter, csv_config_hash, fmt, read_csv_body

MINIMAL_2D = """
dimension: 2
grid_m: 32
delta: 0.5
nu: [0.5]
spectrum: {kind: shell, radius: 1}
seed: 9
linear_only: true
time: {t_end: 40.0, burn_in_fraction: 0.25, dt: 0.2, sample_every_steps: 1}
"""


class TestConfig:
    def test_minimal_valid_fills_defaults(self):
        cfg = parse_config(MINIMAL_2D)
        assert cfg.grid_m == 32
        assert cfg.batches == 20
        assert cfg.sigma == [2.0]
        assert cfg.growth.t_end == 64.0
        assert cfg.s == 2.5

    def test_negative_delta_names_hypothesis(self):
        with pytest.raises(ConfigError, match="delta > 0"):
            parse_config(MINIMAL_2D.replace("delta: 0.5", "delta: -0.1"))

    def test_3d_growth_regularity_bound(self):
        text = """
dimension: 3
grid_m: 24
galerkin_n: 7
delta: 1.6
nu: [0.5]
spectrum: {kind: shell, radius: 1}
growth: {s: 3.0, sigma: 1.5}
"""
        with pytest.raises(ConfigError, match="s > 7/2"):
            parse_config(text)

    def test_collects_all_violations(self):
        text = """
dimension: 2
grid_m: 33
delta: -1.0
nu: []
spectrum: {kind: shell, radius: 1}
"""
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        msgs = "\n".join(exc.value.errors)
        assert "grid_m" in msgs and "delta" in msgs and "nu" in msgs

    def test_parse_error_reports_location(self):
        with pytest.raises(ConfigError, match="line"):
            parse_config("dimension: [unclosed")

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(MINIMAL_2D + "\nbogus_key: 3\n")

    def test_dealias_headroom(self):
        text = MINIMAL_2D.replace("{kind: shell, radius: 1}", "{kind: annulus, k: 8, alpha: 1.0}")
        with pytest.raises(ConfigError, match="headroom"):
            parse_config(text)

    def test_nu_descending_required(self):
        with pytest.raises(ConfigError, match="descending"):
            parse_config(MINIMAL_2D.replace("nu: [0.5]", "nu: [0.1, 0.5]"))

    def test_hash_stable_and_sensitive(self):
        a = parse_config(MINIMAL_2D)
        b = parse_config(MINIMAL_2D)
        assert config_hash(a) == config_hash(b)
        b.seed = 10
        assert config_hash(a) != config_hash(b)


class TestReporting:
    def test_float_formatting_roundtrip(self):
        for x in (math.pi, 1e-300, 3.0, -7.25e17):
            assert float(fmt(x)) == x

    def test_csv_header_and_body(self, tmp_path):
        p = tmp_path / "t.csv"
        with CsvWriter(p, "demo", ["a", "b"], "cafe12345678") as w:
            w.write_row({"a": 1.5, "b": "x"})
        text = p.read_text()
        assert text.startswith("# tflab-csv schema=demo")
        assert csv_config_hash(p) == "cafe12345678"
        assert read_csv_body(p) == "a,b\n1.5,x\n"

    def test_jsonl_first_line_schema(self, tmp_path):
        p = tmp_path / "t.jsonl"
        with JsonlWriter(p, "demo-events", "beef") as w:
            w.write({"event": "x", "v": 2.0})
        lines = p.read_text().splitlines()
        assert '"schema": "demo-events"' in lines[0]
        assert '"event": "x"' in lines[1]


class TestCli:
    def test_unknown_subcommand_usage(self, capsys):
        assert main(["frobnicate"]) == 2

    def test_dispatch_unknown(self, tmp_path):
        cfg = ExperimentConfig()
        assert dispatch("nope", cfg, tmp_path) == 2

    def test_unwritable_output_dir(self, tmp_path):
        cfg = parse_config(MINIMAL_2D)
        blocked = tmp_path / "file"
        blocked.write_text("")
        assert dispatch("sweep", cfg, blocked / "sub") == 1

    def test_verify_subcommand(self, tmp_path, capsys):
        cfg = parse_config(MINIMAL_2D)
        status = main(["verify", "--config", str(_write(tmp_path, MINIMAL_2D)),
                       "--out", str(tmp_path / "out")])
        assert status == 0
        assert (tmp_path / "out" / "verify.csv").exists()
        assert "PASS" in capsys.readouterr().out

    def test_simulate_writes_series_and_checkpoint(self, tmp_path):
        status = main(["simulate", "--config", str(_write(tmp_path, MINIMAL_2D)),
                       "--out", str(tmp_path / "out")])
        assert status == 0
        assert (tmp_path / "out" / "series.csv").exists()
        assert (tmp_path / "out" / "state.tflab").exists()

    def test_seed_override_changes_output(self, tmp_path):
        for seed, name in ((9, "a"), (10, "b")):
            main(["simulate", "--config", str(_write(tmp_path, MINIMAL_2D)),
                  "--seed", str(seed), "--out", str(tmp_path / name)])
        a = read_csv_body(tmp_path / "a" / "series.csv")
        b = read_csv_body(tmp_path / "b" / "series.csv")
        assert a != b

    def test_env_default_out_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TFLAB_OUT", str(tmp_path / "envout"))
        status = main(["verify", "--config", str(_write(tmp_path, MINIMAL_2D))])
        assert status == 0
        assert (tmp_path / "envout" / "verify.csv").exists()

    def test_sweep_threads_byte_identical(self, tmp_path):
        text = MINIMAL_2D.replace("nu: [0.5]", "nu: [0.5, 0.25]")
        bodies = []
        for threads, name in ((1, "t1"), (3, "t3")):
            status = main(["sweep", "--config", str(_write(tmp_path, text)),
                           "--out", str(tmp_path / name), "--threads", str(threads)])
            assert status == 0
            bodies.append((tmp_path / name / "sweep.csv").read_bytes())
        assert bodies[0] == bodies[1]


def _write(tmp_path, text):
    p = tmp_path / "cfg.yaml"
    p.write_text(text)
    return p
