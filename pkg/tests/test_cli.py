"""End-to-end tests for the command-line entry points."""

import json

import pandas as pd
import pytest

from misreg.cli import main
from misreg.harness import scenario_to_config

from test_harness import small_scenario


def tiny_config(tmp_path, **overrides):
    sc = small_scenario(
        name="cli_cell", methods=("cca",), replicates=5, **overrides
    )
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scenario_to_config(sc)))
    return path


class TestSimulateCommand:
    def test_config_run_writes_results_directory(self, tmp_path, capsys):
        config = tiny_config(tmp_path)
        out = tmp_path / "run"
        assert main(["simulate", "--config", str(config), "--out", str(out)]) == 0
        for fname in ("records.csv", "summary.csv", "summary.md",
                      "scenarios.json"):
            assert (out / fname).exists()
        assert "wrote 1 scenario(s)" in capsys.readouterr().out

    def test_config_and_grid_together_fail(self, tmp_path, capsys):
        config = tiny_config(tmp_path)
        code = main([
            "simulate", "--config", str(config), "--grid", "thm1_suite",
            "--out", str(tmp_path / "run"),
        ])
        assert code == 2
        assert "exactly one" in capsys.readouterr().err

    def test_neither_config_nor_grid_fails(self, tmp_path, capsys):
        code = main(["simulate", "--out", str(tmp_path / "run")])
        assert code == 2
        assert "exactly one" in capsys.readouterr().err

    def test_missing_config_file_fails(self, tmp_path):
        code = main([
            "simulate", "--config", str(tmp_path / "absent.json"),
            "--out", str(tmp_path / "run"),
        ])
        assert code == 2

    def test_unknown_grid_name_is_rejected_by_parser(self, tmp_path):
        with pytest.raises(SystemExit) as excinfo:
            main(["simulate", "--grid", "nope", "--out", str(tmp_path / "run")])
        assert excinfo.value.code == 2


class TestTableCommand:
    def test_reemit_as_csv(self, tmp_path, capsys):
        config = tiny_config(tmp_path)
        out = tmp_path / "run"
        assert main(["simulate", "--config", str(config), "--out", str(out)]) == 0
        target = tmp_path / "table.csv"
        code = main([
            "table", "--in", str(out), "--format", "csv", "--out", str(target),
        ])
        assert code == 0
        assert target.read_text().startswith("mechanism,method")
        assert str(target) in capsys.readouterr().out

    def test_default_output_lands_in_run_directory(self, tmp_path):
        config = tiny_config(tmp_path)
        out = tmp_path / "run"
        main(["simulate", "--config", str(config), "--out", str(out)])
        assert main(["table", "--in", str(out), "--format", "csv"]) == 0
        assert (out / "summary.csv").exists()

    def test_missing_run_directory_fails(self, tmp_path):
        code = main([
            "table", "--in", str(tmp_path / "absent"), "--format", "md",
        ])
        assert code == 2

    def test_format_is_required_choice(self, tmp_path):
        with pytest.raises(SystemExit) as excinfo:
            main(["table", "--in", str(tmp_path), "--format", "tex"])
        assert excinfo.value.code == 2


class TestGwasCommands:
    def simulate(self, tmp_path, extra=(), name="cohort"):
        prefix = tmp_path / name
        code = main([
            "gwas", "simulate", "--n", "300", "--variants", "4",
            "--seed", "17", "--out-prefix", str(prefix), *extra,
        ])
        return code, prefix

    def test_simulate_writes_cohort_files(self, tmp_path, capsys):
        code, prefix = self.simulate(tmp_path)
        assert code == 0
        assert prefix.with_suffix(".pheno.csv").exists()
        assert prefix.with_suffix(".geno.csv").exists()
        assert "causal: v00001" in capsys.readouterr().out

    def test_unsafe_truth_gates_shadow_column(self, tmp_path):
        _, plain = self.simulate(tmp_path)
        header = plain.with_suffix(".pheno.csv").read_text().splitlines()[0]
        assert "y_true_shadow" not in header
        _, gated = self.simulate(
            tmp_path, extra=("--unsafe-truth",), name="gated"
        )
        header = gated.with_suffix(".pheno.csv").read_text().splitlines()[0]
        assert "y_true_shadow" in header

    def test_scan_round_trip(self, tmp_path, capsys):
        _, prefix = self.simulate(tmp_path)
        out = tmp_path / "scan.csv"
        code = main([
            "gwas", "scan",
            "--pheno", str(prefix.with_suffix(".pheno.csv")),
            "--geno", str(prefix.with_suffix(".geno.csv")),
            "--methods", "cca,wcca", "--maf", "0.0", "--out", str(out),
        ])
        assert code == 0
        frame = pd.read_csv(out)
        assert list(frame["variant"]) == [f"v{k:05d}" for k in (1, 2, 3, 4)]
        for col in ("beta_cca", "se_cca", "p_cca", "beta_wcca"):
            assert col in frame.columns
        assert "scanned 4 variant(s)" in capsys.readouterr().out

    def test_scan_no_int_flag_runs(self, tmp_path):
        _, prefix = self.simulate(tmp_path)
        out = tmp_path / "scan_raw.csv"
        code = main([
            "gwas", "scan",
            "--pheno", str(prefix.with_suffix(".pheno.csv")),
            "--geno", str(prefix.with_suffix(".geno.csv")),
            "--methods", "cca", "--no-int", "--out", str(out),
        ])
        assert code == 0
        assert out.exists()

    def test_scan_unknown_method_fails(self, tmp_path, capsys):
        _, prefix = self.simulate(tmp_path)
        code = main([
            "gwas", "scan",
            "--pheno", str(prefix.with_suffix(".pheno.csv")),
            "--geno", str(prefix.with_suffix(".geno.csv")),
            "--methods", "gls", "--out", str(tmp_path / "scan.csv"),
        ])
        assert code == 2
        assert "unknown scan methods" in capsys.readouterr().err
