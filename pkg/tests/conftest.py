"""Shared fixtures: small deterministic frames used across the test modules."""

from __future__ import annotations

import numpy as np
import pytest

from misreg import (
    AnalysisFrame,
    DgpParams,
    ObservationModelSpec,
    SurrogateSpec,
    apply_observation_model,
    gen_dataset,
    make_surrogate,
)


def build_toy_frame(n: int, seed: int, labeled: int) -> AnalysisFrame:
    """Small linear frame with a noisy surrogate and a fixed labeled count.

    Values are rounded to two decimals so failures print readably.
    """
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2)).round(2)
    z = rng.normal(size=(n, 2)).round(2)
    y = (
        0.4 + 0.9 * x[:, 0] - 0.6 * x[:, 1] + 0.5 * z[:, 0] + 0.3 * z[:, 1]
        + rng.normal(size=n)
    ).round(2)
    yhat = (y + rng.normal(scale=0.7, size=n)).round(2)
    r = np.zeros(n, dtype=bool)
    r[:labeled] = True
    rng.shuffle(r)
    return AnalysisFrame(y=y, r=r, x=x, z=z, yhat=yhat)


@pytest.fixture
def frame12() -> AnalysisFrame:
    """12 rows, 6 labeled: the smallest frame every correction accepts."""
    return build_toy_frame(12, 314, 6)


@pytest.fixture
def frame15() -> AnalysisFrame:
    """15 rows, 9 labeled: enough complete cases for the joint surrogate fit."""
    return build_toy_frame(15, 2718, 9)


@pytest.fixture
def frame30() -> AnalysisFrame:
    return build_toy_frame(30, 99, 21)


@pytest.fixture
def mar2_frame() -> AnalysisFrame:
    """Integration-size cohort: covariate-dependent missingness, sin surrogate."""
    rng = np.random.default_rng(1234)
    frame = gen_dataset(
        DgpParams(beta_truth=(0.0, 0.1, 0.1, 0.5, 0.5)), 800, rng
    )
    frame = make_surrogate(frame, SurrogateSpec("deterministic-sin"), rng)
    return apply_observation_model(frame, ObservationModelSpec("mar2"), rng)


@pytest.fixture
def binary_frame() -> AnalysisFrame:
    """Logistic-family cohort with flipped-label surrogate and MCAR masking."""
    rng = np.random.default_rng(4321)
    frame = gen_dataset(
        DgpParams(beta_truth=(0.0, 0.3, 0.3, 0.5, 0.5), family="logistic"),
        600,
        rng,
    )
    frame = make_surrogate(frame, SurrogateSpec("label-flip", flip_p=0.1), rng)
    return apply_observation_model(
        frame, ObservationModelSpec("mcar", setting="logistic", omega={"prob": 0.5}), rng
    )
