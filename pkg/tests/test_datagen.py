"""Cohort generation, missingness mechanisms, and surrogate construction."""

from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose

from misreg import (
    AnalysisFrame,
    DgpParams,
    ObservationModelSpec,
    SurrogateSpec,
    apply_observation_model,
    frame_to_csv,
    gen_dataset,
    make_surrogate,
)


def expit(v):
    return 1.0 / (1.0 + np.exp(-np.asarray(v, dtype=float)))


def constant_frame(n, x1=0.0, x2=0.0, z2=0.0, y=0.0, family="linear-continuous"):
    """All rows identical; handy for point checks of the observation logit."""
    x = np.column_stack([np.full(n, x1), np.full(n, x2)])
    z = np.column_stack([np.zeros(n), np.full(n, z2)])
    return AnalysisFrame(
        y=np.full(n, float(y)), r=np.ones(n, dtype=bool), x=x, z=z, family=family
    )


class TestDgpParams:
    def test_rejects_wrong_beta_length(self):
        with pytest.raises(ValueError, match="5 entries"):
            DgpParams(beta_truth=(0.0, 0.1))

    def test_rejects_unknown_family(self):
        with pytest.raises(ValueError, match="family"):
            DgpParams(beta_truth=(0.0,) * 5, family="poisson")

    def test_rejects_bad_rho(self):
        with pytest.raises(ValueError, match="rho"):
            DgpParams(beta_truth=(0.0,) * 5, rho=1.0)

    def test_rejects_negative_sigma(self):
        with pytest.raises(ValueError, match="nonnegative"):
            DgpParams(beta_truth=(0.0,) * 5, sigma=-0.1)

    def test_rejects_zero_rate(self):
        with pytest.raises(ValueError, match="rate"):
            DgpParams(beta_truth=(0.0,) * 5, lambda_nu=0.0)


class TestGenDataset:
    def test_noiseless_null_outcome_is_constant(self):
        rng = np.random.default_rng(1)
        frame = gen_dataset(
            DgpParams(beta_truth=(3.0, 0.0, 0.0, 0.0, 0.0), sigma=0.0), 50, rng
        )
        assert np.array_equal(frame.y, np.full(50, 3.0))

    def test_determinism(self):
        params = DgpParams(beta_truth=(0.0, 0.1, 0.1, 0.5, 0.5))
        a = gen_dataset(params, 200, np.random.default_rng(42))
        b = gen_dataset(params, 200, np.random.default_rng(42))
        assert np.array_equal(a.y, b.y)
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.z, b.z)

    def test_confounder_moments(self):
        rng = np.random.default_rng(2)
        params = DgpParams(beta_truth=(0.0,) * 5, sigma_z=1.5, rho=0.5)
        frame = gen_dataset(params, 100_000, rng)
        assert_allclose(frame.z.std(axis=0), 1.5, atol=0.03)
        assert_allclose(np.corrcoef(frame.z.T)[0, 1], 0.5, atol=0.02)

    def test_covariate_construction(self):
        rng = np.random.default_rng(3)
        params = DgpParams(beta_truth=(0.0,) * 5, sigma_tau=0.5, lambda_nu=2.0)
        frame = gen_dataset(params, 100_000, rng)
        tau = frame.x[:, 0] - np.cos(frame.z[:, 0])
        nu = frame.x[:, 1] - np.sin(frame.z[:, 1])
        assert_allclose(tau.mean(), 0.0, atol=0.01)
        assert_allclose(tau.std(), 0.5, atol=0.01)
        assert np.all(nu >= 0.0)
        assert_allclose(nu.mean(), 0.5, atol=0.01)

    def test_dummy_quadrant_indicators(self):
        rng = np.random.default_rng(4)
        params = DgpParams(beta_truth=(0.0,) * 5, family="linear-dummy")
        frame = gen_dataset(params, 5_000, rng)
        assert frame.z_labels == ("z3", "z4")
        z1, z2 = frame.raw_z[:, 0], frame.raw_z[:, 1]
        assert np.array_equal(frame.z[:, 0], ((z1 < 0) & (z2 < 0)).astype(float))
        assert np.array_equal(frame.z[:, 1], ((z1 > 0) & (z2 > 0)).astype(float))

    def test_logistic_null_rate(self):
        rng = np.random.default_rng(5)
        params = DgpParams(beta_truth=(0.0,) * 5, family="logistic")
        frame = gen_dataset(params, 100_000, rng)
        assert set(np.unique(frame.y)) <= {0.0, 1.0}
        assert_allclose(frame.y.mean(), 0.5, atol=0.01)

    def test_rejects_nonpositive_n(self):
        with pytest.raises(ValueError, match="positive"):
            gen_dataset(
                DgpParams(beta_truth=(0.0,) * 5), 0, np.random.default_rng(0)
            )


class TestObservationSpec:
    def test_unknown_mechanism(self):
        with pytest.raises(ValueError, match="mechanism"):
            ObservationModelSpec("mar9")

    def test_unknown_setting(self):
        with pytest.raises(ValueError, match="setting"):
            ObservationModelSpec("mcar", setting="survival")

    def test_unknown_outcome_term(self):
        with pytest.raises(ValueError, match="outcome_term"):
            ObservationModelSpec("mnar1", outcome_term="cubed")

    def test_unknown_omega_keys(self):
        with pytest.raises(ValueError, match="omega keys"):
            ObservationModelSpec("mnar1", omega={"intercept": -2.0, "w5": 1.0})

    def test_default_outcome_terms(self):
        assert ObservationModelSpec("mnar1").outcome_term == "indicator_ge_one"
        spec = ObservationModelSpec("mnar1", setting="logistic")
        assert spec.outcome_term == "identity"


class TestObservationProbability:
    def test_mar1_point_value(self):
        spec = ObservationModelSpec("mar1")
        pi = spec.observation_probability(constant_frame(4, z2=0.0))
        assert_allclose(pi, expit(-1.7), atol=1e-12)
        assert_allclose(pi[0], 0.15447, atol=1e-5)

    def test_mar2_point_value(self):
        spec = ObservationModelSpec("mar2")
        pi = spec.observation_probability(constant_frame(4, x1=0.0, z2=0.0))
        assert_allclose(pi, expit(-2.0), atol=1e-12)
        assert_allclose(pi[0], 0.11920, atol=1e-5)

    def test_mcar_constant(self):
        spec = ObservationModelSpec("mcar", omega={"prob": 0.35})
        pi = spec.observation_probability(constant_frame(7))
        assert np.array_equal(pi, np.full(7, 0.35))

    def test_interaction_confined_to_active_rows(self):
        # Rows split by whether the outcome term fires; toggling the
        # x1-by-outcome interaction may only move the rows where x1 * t != 0.
        x = np.column_stack([np.array([0.0, 1.0, 1.0, 0.0]), np.zeros(4)])
        z = np.zeros((4, 2))
        y = np.array([0.0, 0.0, 2.0, 2.0])
        frame = AnalysisFrame(y=y, r=np.ones(4, dtype=bool), x=x, z=z)
        base = dict(ObservationModelSpec("mnar5").omega)
        with_term = ObservationModelSpec("mnar5", omega=base)
        without = ObservationModelSpec("mnar5", omega={**base, "x1_y": 0.0})
        pi_on = with_term.observation_probability(frame)
        pi_off = without.observation_probability(frame)
        active = (x[:, 0] != 0.0) & (y >= 1.0)
        assert np.array_equal(active, np.array([False, False, True, False]))
        assert np.array_equal(pi_on[~active], pi_off[~active])
        assert np.all(pi_on[active] != pi_off[active])


class TestApplyObservationModel:
    def test_mcar_observed_fraction(self):
        rng = np.random.default_rng(6)
        frame = gen_dataset(DgpParams(beta_truth=(0.0,) * 5), 10_000, rng)
        masked = apply_observation_model(frame, ObservationModelSpec("mcar"), rng)
        assert abs(masked.r.mean() - 0.20) < 0.02

    def test_masking_preserves_covariates(self):
        rng = np.random.default_rng(7)
        frame = gen_dataset(DgpParams(beta_truth=(0.0, 0.1, 0.1, 0.5, 0.5)), 500, rng)
        frame = make_surrogate(frame, SurrogateSpec("deterministic-sin"), rng)
        masked = apply_observation_model(frame, ObservationModelSpec("mar1"), rng)
        assert np.array_equal(masked.x, frame.x)
        assert np.array_equal(masked.z, frame.z)
        assert np.array_equal(masked.yhat, frame.yhat)
        assert np.all(np.isnan(masked.y[~masked.r]))
        assert np.array_equal(masked.y[masked.r], frame.y[masked.r])

    def test_mcar_indicator_uncorrelated_with_columns(self):
        rng = np.random.default_rng(8)
        n = 100_000
        frame = gen_dataset(DgpParams(beta_truth=(0.0, 0.1, 0.1, 0.5, 0.5)), n, rng)
        masked = apply_observation_model(frame, ObservationModelSpec("mcar"), rng)
        r = masked.r.astype(float)
        bound = 4.0 / np.sqrt(n)
        for col in (frame.x[:, 0], frame.x[:, 1], frame.z[:, 0], frame.z[:, 1], frame.y):
            assert abs(np.corrcoef(r, col)[0, 1]) < bound

    def test_setting_mismatch(self):
        rng = np.random.default_rng(9)
        frame = gen_dataset(DgpParams(beta_truth=(0.0,) * 5), 50, rng)
        with pytest.raises(ValueError, match="setting"):
            apply_observation_model(
                frame, ObservationModelSpec("mcar", setting="logistic"), rng
            )

    def test_rejects_double_masking(self):
        rng = np.random.default_rng(10)
        frame = gen_dataset(DgpParams(beta_truth=(0.0,) * 5), 200, rng)
        masked = apply_observation_model(frame, ObservationModelSpec("mcar"), rng)
        with pytest.raises(ValueError, match="already masked"):
            apply_observation_model(masked, ObservationModelSpec("mcar"), rng)


class TestMakeSurrogate:
    def test_deterministic_sin_at_origin(self):
        frame = constant_frame(3, y=1.0)
        out = make_surrogate(
            frame, SurrogateSpec("deterministic-sin"), np.random.default_rng(0)
        )
        assert np.array_equal(out.yhat, np.ones(3))

    def test_deterministic_sin_formula(self):
        rng = np.random.default_rng(11)
        frame = gen_dataset(DgpParams(beta_truth=(0.0, 0.1, 0.1, 0.5, 0.5)), 100, rng)
        out = make_surrogate(frame, SurrogateSpec("deterministic-sin"), rng)
        shift = 2.0 * np.sin(
            frame.x[:, 0] ** 2
            + frame.x[:, 1] ** 3
            + frame.z[:, 0] ** 2
            + frame.z[:, 1] ** 2
        )
        assert_allclose(out.yhat, frame.y + shift, atol=1e-12)

    def test_deterministic_sin_uses_raw_confounders_for_dummies(self):
        rng = np.random.default_rng(12)
        frame = gen_dataset(
            DgpParams(beta_truth=(0.0,) * 5, family="linear-dummy"), 100, rng
        )
        out = make_surrogate(frame, SurrogateSpec("deterministic-sin"), rng)
        shift = 2.0 * np.sin(
            frame.x[:, 0] ** 2
            + frame.x[:, 1] ** 3
            + frame.raw_z[:, 0] ** 2
            + frame.raw_z[:, 1] ** 2
        )
        assert_allclose(out.yhat, frame.y + shift, atol=1e-12)

    def test_bias_noise_mean_shift(self):
        rng = np.random.default_rng(13)
        frame = gen_dataset(DgpParams(beta_truth=(0.0,) * 5), 100_000, rng)
        out = make_surrogate(
            frame, SurrogateSpec("bias-noise", lambda_pred=2.0, sigma_pred=0.0), rng
        )
        gap = out.yhat - frame.y
        assert np.all(gap >= 0.0)
        assert_allclose(gap.mean(), 0.5, atol=0.01)

    def test_label_flip_identity_at_zero(self):
        rng = np.random.default_rng(14)
        frame = gen_dataset(
            DgpParams(beta_truth=(0.0,) * 5, family="logistic"), 300, rng
        )
        out = make_surrogate(frame, SurrogateSpec("label-flip", flip_p=0.0), rng)
        assert np.array_equal(out.yhat, frame.y)

    def test_label_flip_at_one_inverts(self):
        rng = np.random.default_rng(15)
        frame = gen_dataset(
            DgpParams(beta_truth=(0.0,) * 5, family="logistic"), 300, rng
        )
        out = make_surrogate(frame, SurrogateSpec("label-flip", flip_p=1.0), rng)
        assert np.array_equal(out.yhat, 1.0 - frame.y)

    def test_label_flip_rejects_continuous_family(self):
        rng = np.random.default_rng(16)
        frame = gen_dataset(DgpParams(beta_truth=(0.0,) * 5), 50, rng)
        with pytest.raises(ValueError, match="binary"):
            make_surrogate(frame, SurrogateSpec("label-flip", flip_p=0.1), rng)

    def test_bias_noise_rejects_binary_family(self):
        rng = np.random.default_rng(17)
        frame = gen_dataset(
            DgpParams(beta_truth=(0.0,) * 5, family="logistic"), 50, rng
        )
        with pytest.raises(ValueError, match="binary"):
            make_surrogate(
                frame, SurrogateSpec("bias-noise", lambda_pred=1.0, sigma_pred=1.0), rng
            )

    def test_held_out_logistic_returns_binary(self):
        rng = np.random.default_rng(18)
        frame = gen_dataset(
            DgpParams(beta_truth=(0.0, 0.3, 0.3, 0.5, 0.5), family="logistic"),
            400,
            rng,
        )
        out = make_surrogate(
            frame, SurrogateSpec("held-out-logistic", train_n=500), rng
        )
        assert set(np.unique(out.yhat)) <= {0.0, 1.0}

    def test_held_out_logistic_needs_generating_params(self):
        frame = constant_frame(60, y=1.0, family="logistic")
        frame.y[::2] = 0.0
        with pytest.raises(ValueError, match="generating parameters"):
            make_surrogate(
                frame, SurrogateSpec("held-out-logistic", train_n=100),
                np.random.default_rng(0),
            )

    @pytest.mark.parametrize(
        "kwargs, message",
        [
            (dict(kind="deterministic-sin", flip_p=0.1), "does not apply"),
            (dict(kind="bias-noise", sigma_pred=1.0), "requires lambda_pred"),
            (dict(kind="label-flip"), "requires flip_p"),
            (dict(kind="label-flip", flip_p=1.5), "flip_p"),
            (dict(kind="bias-noise", lambda_pred=0.0, sigma_pred=1.0), "rate"),
            (dict(kind="spline"), "surrogate kind"),
        ],
    )
    def test_spec_validation(self, kwargs, message):
        with pytest.raises(ValueError, match=message):
            SurrogateSpec(**kwargs)


class TestFrameExport:
    def test_dataframe_masks_and_gates_truth(self, mar2_frame):
        df = mar2_frame.to_dataframe()
        assert "y_true_shadow" not in df.columns
        assert df["y"].isna().sum() == int((~mar2_frame.r).sum())
        unsafe = mar2_frame.to_dataframe(unsafe_truth=True)
        assert "y_true_shadow" in unsafe.columns
        assert np.all(np.isfinite(unsafe["y_true_shadow"].to_numpy()))

    def test_csv_round_trip_masks_cells(self, mar2_frame, tmp_path):
        path = tmp_path / "frame.csv"
        frame_to_csv(mar2_frame, path)
        text = path.read_text()
        header = text.splitlines()[0].split(",")
        assert header[:5] == ["id", "y", "r", "x1", "x2"]
        first_missing = int(np.flatnonzero(~mar2_frame.r)[0])
        row = text.splitlines()[1 + first_missing].split(",")
        assert row[1] == ""
