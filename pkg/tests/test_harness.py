"""Tests for the simulation harness: seeding, scenario configs, metrics,
grid running, and table emission."""

import dataclasses
import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from misreg.datagen import DgpParams, ObservationModelSpec, SurrogateSpec
from misreg.exceptions import ConfigError
from misreg.harness import (
    MiParams,
    RecordRow,
    SimScenario,
    TableRow,
    builtin_grids,
    build_table_rows,
    compute_metrics,
    derive_null_twin,
    emit_table,
    mix64,
    replicate_seed,
    run_grid,
    run_scenario,
    run_to_dir,
    scenario_from_config,
    scenario_to_config,
    table_from_dir,
)


def small_scenario(**overrides) -> SimScenario:
    base = dict(
        name="small",
        dgp=DgpParams(
            beta_truth=(0.0, 0.3, 0.3, 0.5, 0.5), family="linear-continuous"
        ),
        observation=ObservationModelSpec(
            mechanism="mcar", setting="linear-continuous", omega={"prob": 0.5}
        ),
        surrogate=None,
        n=200,
        methods=("full", "cca"),
        replicates=4,
        base_seed=5150,
    )
    base.update(overrides)
    return SimScenario(**base)


class TestSeeds:
    def test_mix64_is_deterministic_and_in_range(self):
        a = mix64(123)
        assert a == mix64(123)
        assert a != mix64(124)
        assert 0 <= a < 2**64

    def test_replicate_seeds_are_distinct(self):
        seeds = [replicate_seed(777, j) for j in range(64)]
        assert len(set(seeds)) == 64
        assert seeds[0] == replicate_seed(777, 0)

    def test_replicate_seeds_depend_on_base(self):
        assert replicate_seed(1, 0) != replicate_seed(2, 0)


class TestScenarioValidation:
    def test_rejects_unknown_method(self):
        with pytest.raises(ConfigError, match="unknown methods"):
            small_scenario(methods=("cca", "bogus"))

    def test_rejects_tiny_n(self):
        with pytest.raises(ConfigError, match="at least 10"):
            small_scenario(n=5)

    def test_rejects_family_mismatch(self):
        obs = ObservationModelSpec(mechanism="mcar", setting="logistic")
        with pytest.raises(ConfigError, match="does not match"):
            small_scenario(observation=obs)

    def test_surrogate_methods_need_surrogate(self):
        with pytest.raises(ConfigError, match="need a surrogate"):
            small_scenario(methods=("cca", "ppi"), surrogate=None)

    def test_synsurr_rejected_for_logistic(self):
        with pytest.raises(ConfigError, match="linear families"):
            small_scenario(
                dgp=DgpParams(
                    beta_truth=(0.0, 0.3, 0.3, 0.5, 0.5), family="logistic"
                ),
                observation=ObservationModelSpec(
                    mechanism="mcar", setting="logistic", omega={"prob": 0.5}
                ),
                surrogate=SurrogateSpec(kind="held-out-logistic", train_n=200),
                methods=("cca", "synsurr"),
            )

    def test_rejects_out_of_range_test_coefficient(self):
        with pytest.raises(ConfigError, match="index the 5"):
            small_scenario(test_coefficients=(1, 7))


class TestDeriveNullTwin:
    def test_twin_zeroes_only_tested_coefficients(self):
        sc = small_scenario(test_coefficients=(1, 2))
        twin = derive_null_twin(sc)
        assert twin.dgp.beta_truth == (0.0, 0.0, 0.0, 0.5, 0.5)
        assert twin.name == "small__null"
        assert twin.null_twin is False
        assert twin.base_seed == sc.base_seed
        assert twin.n == sc.n
        assert twin.methods == sc.methods

    def test_is_null_flags(self):
        sc = small_scenario()
        assert not sc.is_null
        assert derive_null_twin(sc).is_null


def make_records(p_values, estimates=None, method="cca", coefficient=1):
    estimates = estimates if estimates is not None else [0.0] * len(p_values)
    return [
        RecordRow(
            replicate=j,
            method=method,
            coefficient=coefficient,
            estimate=float(est),
            se=1.0,
            p_value=float(p),
        )
        for j, (p, est) in enumerate(zip(p_values, estimates))
    ]


class TestComputeMetrics:
    def test_rejection_rate_and_mc_se(self):
        records = make_records([0.01, 0.2, 0.04, 0.8])
        summary = compute_metrics(records, (0.0, 0.0, 0.0, 0.0, 0.0))
        row = summary.row("cca", 1)
        assert row.rejection_rate == pytest.approx(0.5)
        assert row.mc_se_rejection == pytest.approx(math.sqrt(0.25 / 4))
        assert row.replicate_count == 4
        assert row.failure_count == 0

    def test_exact_estimates_give_zero_bias_and_mse(self):
        records = make_records([0.5] * 6, estimates=[0.3] * 6)
        summary = compute_metrics(records, (0.0, 0.3, 0.0, 0.0, 0.0))
        row = summary.row("cca", 1)
        assert row.abs_bias == 0.0
        assert row.mse == 0.0
        assert row.truth == 0.3

    def test_adjusted_power_uses_null_quantile(self):
        records = make_records([0.03, 0.06])
        null_p = {("cca", 1): np.arange(1, 101) / 100.0}
        summary = compute_metrics(
            records, (0.0, 0.0, 0.0, 0.0, 0.0), null_p_values=null_p
        )
        row = summary.row("cca", 1)
        assert row.p05_threshold == pytest.approx(0.05)
        assert row.adjusted_power == pytest.approx(0.5)
        assert row.mc_se_power == pytest.approx(math.sqrt(0.25 / 2))

    def test_failed_replicates_are_excluded(self):
        records = make_records([0.01, 0.9])
        records.append(
            RecordRow(
                replicate=2,
                method="cca",
                coefficient=1,
                estimate=math.nan,
                se=math.nan,
                p_value=math.nan,
                error="SingularDesign: boom",
            )
        )
        summary = compute_metrics(records, (0.0, 0.0, 0.0, 0.0, 0.0))
        row = summary.row("cca", 1)
        assert row.replicate_count == 2
        assert row.failure_count == 1
        assert row.rejection_rate == pytest.approx(0.5)

    def test_all_failed_group_reports_nan_metrics(self):
        records = [
            RecordRow(
                replicate=j,
                method="cca",
                coefficient=1,
                estimate=math.nan,
                se=math.nan,
                p_value=math.nan,
                error="boom",
            )
            for j in range(3)
        ]
        summary = compute_metrics(records, (0.0, 0.0, 0.0, 0.0, 0.0))
        row = summary.row("cca", 1)
        assert row.replicate_count == 0
        assert row.failure_count == 3
        assert math.isnan(row.abs_bias)
        assert math.isnan(row.rejection_rate)
        assert row.adjusted_power is None

    def test_missing_row_lookup_raises(self):
        summary = compute_metrics(make_records([0.5]), (0.0,) * 5)
        with pytest.raises(KeyError):
            summary.row("cca", 3)


class TestRunScenario:
    def test_record_shape_and_null_twin(self):
        sc = small_scenario(replicates=3)
        res = run_scenario(sc, threads=1)
        assert len(res.records) == 3 * 2 * 2
        assert res.null_records is not None
        assert len(res.null_records) == len(res.records)
        assert res.null_summary is not None
        for method in ("full", "cca"):
            for coef in (1, 2):
                row = res.summary.row(method, coef)
                assert row.adjusted_power is not None
                assert row.failure_count == 0

    def test_reruns_are_identical(self):
        sc = small_scenario(replicates=3, null_twin=False)
        first = run_scenario(sc, threads=1)
        second = run_scenario(sc, threads=1)
        assert first.records == second.records

    def test_thread_count_does_not_change_records(self):
        sc = small_scenario(replicates=4, null_twin=False)
        serial = run_scenario(sc, threads=1)
        parallel = run_scenario(sc, threads=2)
        assert serial.records == parallel.records

    def test_single_replicate_degenerate_summary(self):
        sc = small_scenario(replicates=1, null_twin=False)
        res = run_scenario(sc, threads=1)
        row = res.summary.row("cca", 1)
        assert row.replicate_count == 1
        assert row.rejection_rate in (0.0, 1.0)
        assert row.mc_se_rejection == 0.0

    def test_full_beats_cca_on_calibrated_power(self):
        sc = small_scenario(
            name="power_order",
            dgp=DgpParams(
                beta_truth=(0.0, 0.02, 0.02, 0.5, 0.5),
                family="linear-continuous",
            ),
            n=10_000,
            replicates=150,
            base_seed=909,
        )
        res = run_scenario(sc, threads=1)
        for coef in (1, 2):
            full = res.summary.row("full", coef).adjusted_power
            cca = res.summary.row("cca", coef).adjusted_power
            assert full >= cca


class TestRunGrid:
    def test_duplicate_names_rejected(self):
        sc = small_scenario(replicates=1)
        with pytest.raises(ConfigError, match="unique"):
            run_grid([sc, sc])

    def test_explicit_null_cell_is_reused(self):
        alt = small_scenario(name="pair_alt", replicates=3)
        null = dataclasses.replace(derive_null_twin(alt), name="pair_null")
        results = run_grid([null, alt], threads=1)
        assert [r.scenario.name for r in results] == ["pair_null", "pair_alt"]
        alt_res = results[1]
        assert alt_res.null_source == "pair_null"
        assert alt_res.null_records is None
        assert alt_res.summary.row("cca", 1).adjusted_power is not None

    def test_reused_null_matches_fresh_twin(self):
        alt = small_scenario(name="pair_alt", replicates=3)
        null = dataclasses.replace(derive_null_twin(alt), name="pair_null")
        reused = run_grid([null, alt], threads=1)[1]
        fresh = run_scenario(alt, threads=1)
        for coef in (1, 2):
            assert reused.summary.row("cca", coef).p05_threshold == (
                fresh.summary.row("cca", coef).p05_threshold
            )


class TestConfigRoundTrip:
    def test_round_trip_preserves_scenario(self):
        sc = small_scenario(
            surrogate=SurrogateSpec(
                kind="bias-noise", lambda_pred=1.5, sigma_pred=0.4
            ),
            methods=("full", "cca", "ppi", "mi_pmm"),
            mi=MiParams(k=3, donor_k=4),
            test_coefficients=(1,),
            pi_min=0.05,
        )
        config = scenario_to_config(sc)
        rebuilt = scenario_from_config(json.loads(json.dumps(config)))
        assert rebuilt == sc

    def test_round_trip_without_surrogate(self):
        sc = small_scenario()
        assert scenario_from_config(scenario_to_config(sc)) == sc

    def test_unknown_top_level_key_rejected(self):
        config = scenario_to_config(small_scenario())
        config["bogus"] = 1
        with pytest.raises(ConfigError, match="unknown scenario keys"):
            scenario_from_config(config)

    def test_unknown_dgp_key_rejected(self):
        config = scenario_to_config(small_scenario())
        config["dgp"]["slope"] = 1.0
        with pytest.raises(ConfigError, match="unknown dgp keys"):
            scenario_from_config(config)

    def test_missing_required_key_rejected(self):
        config = scenario_to_config(small_scenario())
        del config["name"]
        with pytest.raises(ConfigError, match="missing 'name'"):
            scenario_from_config(config)

    def test_bad_nested_value_surfaces_as_config_error(self):
        config = scenario_to_config(small_scenario())
        config["dgp"]["beta_truth"] = [0.0, 1.0]
        with pytest.raises(ConfigError, match="bad dgp config"):
            scenario_from_config(config)


class TestBuiltinGrids:
    def test_table_s1_shape(self):
        grid = builtin_grids("table_s1")
        assert len(grid) == 20
        names = [s.name for s in grid]
        assert len(set(names)) == 20
        for sc in grid:
            assert sc.dgp.family == "linear-continuous"
            assert "synsurr" in sc.methods
        alts = [s for s in grid if not s.is_null]
        assert len(alts) == 10
        for sc in alts:
            assert sc.dgp.beta_truth == (0.0, 0.1, 0.1, 0.5, 0.5)

    def test_quality_grid_logistic_shape(self):
        grid = builtin_grids("quality_grid_logistic")
        assert len(grid) == 40
        flips = {s.surrogate.flip_p for s in grid}
        assert flips == {0.0, 0.05, 0.1, 0.2}
        for sc in grid:
            assert sc.surrogate.kind == "label-flip"
            assert sc.methods == ("ps_ppi", "ps_ppi_cca")

    def test_quality_grid_linear_shape(self):
        grid = builtin_grids("quality_grid_linear")
        assert len(grid) == 40
        for sc in grid:
            assert sc.surrogate.kind == "bias-noise"

    def test_focused_suites_are_null_by_construction(self):
        for name in ("thm1_suite", "thm2_suite", "thm3_suite"):
            for sc in builtin_grids(name):
                assert sc.is_null

    def test_complete_case_suite_avoids_covariate_mechanisms(self):
        grid = builtin_grids("thm1_suite")
        assert {s.observation.mechanism for s in grid} == {
            "mcar",
            "mar1",
            "mnar1",
        }
        for sc in grid:
            assert sc.dgp.family == "linear-dummy"

    def test_prediction_suite_runs_both_weightings(self):
        grid = builtin_grids("thm3_suite")
        assert len(grid) == 2
        for sc in grid:
            assert sc.methods == ("ps_ppi", "ps_ppi_cca")
            assert sc.observation.mechanism == "mnar1"

    def test_unknown_grid_rejected(self):
        with pytest.raises(ConfigError, match="unknown grid"):
            builtin_grids("table_s9")


class TestTableEmission:
    def test_empty_rows_still_emit_header(self, tmp_path):
        path = emit_table([], "md", tmp_path / "t.md")
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("| mechanism | method |")

    def test_markdown_cells_use_four_decimals(self, tmp_path):
        row = TableRow(
            mechanism="mcar",
            method="cca",
            coefficient=1,
            bias0=0.12345,
            mse0=None,
            type_i=0.05,
            bias=1.0,
            mse=2.0,
            power=0.5,
            failures=3,
        )
        path = emit_table([row], "md", tmp_path / "t.md")
        body = path.read_text().splitlines()[2]
        assert body == (
            "| mcar | cca | 1 | 0.1235 |  | 0.0500 "
            "| 1.0000 | 2.0000 | 0.5000 | 3 |"
        )

    def test_csv_format(self, tmp_path):
        row = TableRow(
            mechanism="mar1",
            method="full",
            coefficient=2,
            bias0=None,
            mse0=None,
            type_i=None,
            bias=0.25,
            mse=0.0625,
            power=1.0,
            failures=0,
        )
        path = emit_table([row], "csv", tmp_path / "t.csv")
        lines = path.read_text().splitlines()
        assert lines[0].startswith("mechanism,method,coefficient")
        assert lines[1] == "mar1,full,2,,,,0.2500,0.0625,1.0000,0"

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown table format"):
            emit_table([], "tex", tmp_path / "t.tex")

    def test_paired_rows_combine_null_and_alt_blocks(self):
        alt = small_scenario(name="pair_alt", replicates=3)
        null = dataclasses.replace(derive_null_twin(alt), name="pair_null")
        results = run_grid([null, alt], threads=1)
        rows = build_table_rows(results)
        assert len(rows) == 4
        for row in rows:
            assert row.mechanism == "mcar"
            assert row.bias0 is not None
            assert row.type_i is not None
            assert row.power is not None


class TestResultsDirectory:
    def test_run_to_dir_writes_all_outputs(self, tmp_path):
        alt = small_scenario(name="pair_alt", replicates=3)
        null = dataclasses.replace(derive_null_twin(alt), name="pair_null")
        solo = small_scenario(name="solo_alt", replicates=3, n=240)
        out = tmp_path / "results"
        run_to_dir([null, alt, solo], out, threads=1)
        for fname in ("records.csv", "summary.csv", "summary.md",
                      "scenarios.json"):
            assert (out / fname).exists()
        manifest = json.loads((out / "scenarios.json").read_text())
        assert manifest["null_sources"] == {"pair_alt": "pair_null"}
        names = {c["name"] for c in manifest["scenarios"]}
        assert names == {"pair_null", "pair_alt", "solo_alt"}

    def test_table_from_dir_reproduces_emitted_table(self, tmp_path):
        alt = small_scenario(name="pair_alt", replicates=3)
        null = dataclasses.replace(derive_null_twin(alt), name="pair_null")
        solo = small_scenario(name="solo_alt", replicates=3, n=240)
        out = tmp_path / "results"
        run_to_dir([null, alt, solo], out, threads=1)
        original = (out / "summary.md").read_text()
        table_from_dir(out, "md")
        assert (out / "summary.md").read_text() == original

    def test_table_from_dir_custom_output(self, tmp_path):
        out = tmp_path / "results"
        run_to_dir([small_scenario(replicates=2)], out, threads=1)
        target = tmp_path / "elsewhere.csv"
        written = table_from_dir(out, "csv", target)
        assert written == target
        assert target.read_text().startswith("mechanism,method")

    def test_recorded_estimates_survive_csv_round_trip(self, tmp_path):
        sc = small_scenario(replicates=3, null_twin=False)
        out = tmp_path / "results"
        results = run_to_dir([sc], out, threads=1)
        import pandas as pd

        frame = pd.read_csv(out / "records.csv")
        direct = [r.estimate for r in results[0].records]
        assert_allclose(frame["estimate"].to_numpy(), direct, rtol=1e-9)
