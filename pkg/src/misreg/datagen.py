"""Synthetic cohorts with partially observed outcomes and surrogate predictions.

A generated dataset carries two covariates of interest built from latent
confounders,

    X1 = cos(Z1) + tau,   X2 = sin(Z2) + nu,

with (Z1, Z2) centered bivariate normal (marginal SD ``sigma_z``, correlation
``rho``), ``tau`` normal, and ``nu`` exponential. Outcomes follow one of
three families:

- ``linear-continuous``: Y = b0 + b1 X1 + b2 X2 + b3 Z1 + b4 Z2 + eps
- ``linear-dummy``: same, with the confounder block replaced by the corner
  indicators Z3 = 1{Z1<0, Z2<0} and Z4 = 1{Z1>0, Z2>0} (the continuous
  confounders remain available to surrogate constructions)
- ``logistic``: logit E[Y] equal to the continuous-family linear predictor

Observation indicators are drawn from logistic missingness models whose
coefficients are fixed per mechanism and family, and surrogate outcomes are
attached by several constructions of varying quality. The full outcome
vector is retained on a shadow attribute for oracle use by the simulation
harness; estimators must never read it.

Determinism contract: for a fixed generator state, draws happen in a pinned
order (confounders, covariate noises, outcome noise; surrogate draws in the
documented order per kind), so equal seeds give bit-identical frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
import pandas as pd
from scipy.special import expit

from .core import build_design, fit_logistic

__all__ = [
    "FAMILIES",
    "MECHANISMS",
    "SURROGATE_KINDS",
    "OUTCOME_TERMS",
    "DgpParams",
    "AnalysisFrame",
    "ObservationModelSpec",
    "SurrogateSpec",
    "gen_dataset",
    "apply_observation_model",
    "make_surrogate",
    "frame_to_csv",
]

FAMILIES = ("linear-continuous", "linear-dummy", "logistic")
MECHANISMS = (
    "mcar",
    "mar1",
    "mar2",
    "mnar1",
    "mnar2",
    "mnar3",
    "mnar4",
    "mnar5",
    "mnar6",
    "mnar7",
)
SURROGATE_KINDS = (
    "deterministic-sin",
    "bias-noise",
    "label-flip",
    "held-out-logistic",
)
OUTCOME_TERMS = ("identity", "indicator_ge_one", "indicator_eq_one")

# Missingness-model coefficients, fixed per (family, mechanism). Keys:
# intercept; x1, x2, z (the designated confounder: Z2 when continuous,
# Z4 when dummy); y (the outcome term); x1_y, x2_y, z_y (interactions with
# the outcome term). "prob" denotes a constant observation probability.
OMEGA_TABLE: dict[tuple[str, str], dict[str, float]] = {
    ("linear-continuous", "mcar"): {"prob": 0.2},
    ("linear-continuous", "mar1"): {"intercept": -1.7, "z": 0.5},
    ("linear-continuous", "mar2"): {"intercept": -2.0, "x1": 1.0, "z": 0.5},
    ("linear-continuous", "mnar1"): {"intercept": -2.8, "z": 0.5, "y": 2.0},
    ("linear-continuous", "mnar2"): {"intercept": -3.0, "x1": 1.0, "z": 0.5, "y": 2.0},
    ("linear-continuous", "mnar3"): {"intercept": -3.0, "x2": 1.0, "z": 0.5, "y": 2.0},
    ("linear-continuous", "mnar4"): {
        "intercept": -3.2, "x1": 1.0, "x2": 1.0, "z": 0.5, "y": 2.0,
    },
    ("linear-continuous", "mnar5"): {
        "intercept": -3.5, "x1": 1.0, "x2": 1.0, "z": 0.5, "y": 2.0, "x1_y": 1.0,
    },
    ("linear-continuous", "mnar6"): {
        "intercept": -3.2, "x1": 1.0, "x2": 1.0, "z": 0.5, "y": 2.0, "x2_y": 1.0,
    },
    ("linear-continuous", "mnar7"): {
        "intercept": -3.2, "x1": 1.0, "x2": 1.0, "z": 0.5, "y": 2.0, "z_y": 0.5,
    },
    ("linear-dummy", "mcar"): {"prob": 0.2},
    ("linear-dummy", "mar1"): {"intercept": -1.7, "z": 1.0},
    ("linear-dummy", "mar2"): {"intercept": -2.0, "x1": 1.0, "z": 1.0},
    ("linear-dummy", "mnar1"): {"intercept": -2.0, "z": 1.0, "y": 1.0},
    ("linear-dummy", "mnar2"): {"intercept": -2.4, "x1": 1.0, "z": 1.0, "y": 1.0},
    ("linear-dummy", "mnar3"): {"intercept": -2.2, "x2": 1.0, "z": 1.0, "y": 1.0},
    ("linear-dummy", "mnar4"): {
        "intercept": -2.5, "x1": 1.0, "x2": 1.0, "z": 1.0, "y": 1.0,
    },
    ("linear-dummy", "mnar5"): {
        "intercept": -2.5, "x1": 1.0, "x2": 1.0, "z": 1.0, "y": 1.0, "x1_y": -1.0,
    },
    ("linear-dummy", "mnar6"): {
        "intercept": -2.5, "x1": 1.0, "x2": 1.0, "z": 1.0, "y": 1.0, "x2_y": -1.0,
    },
    ("linear-dummy", "mnar7"): {
        "intercept": -2.5, "x1": 1.0, "x2": 1.0, "z": 1.0, "y": 1.0, "z_y": 1.0,
    },
    ("logistic", "mcar"): {"prob": 0.2},
    ("logistic", "mar1"): {"intercept": -1.7, "z": 0.5},
    ("logistic", "mar2"): {"intercept": -2.0, "x1": 1.0, "z": 0.5},
    ("logistic", "mnar1"): {"intercept": -3.3, "z": 0.5, "y": 2.0},
    ("logistic", "mnar2"): {"intercept": -3.5, "x1": 1.0, "z": 0.5, "y": 2.0},
    ("logistic", "mnar3"): {"intercept": -3.5, "x2": 1.0, "z": 0.5, "y": 2.0},
    ("logistic", "mnar4"): {
        "intercept": -3.9, "x1": 1.0, "x2": 1.0, "z": 0.5, "y": 2.0,
    },
    ("logistic", "mnar5"): {
        "intercept": -4.2, "x1": 1.0, "x2": 1.0, "z": 0.5, "y": 2.0, "x1_y": 1.0,
    },
    ("logistic", "mnar6"): {
        "intercept": -4.2, "x1": 1.0, "x2": 1.0, "z": 0.5, "y": 2.0, "x2_y": 1.0,
    },
    ("logistic", "mnar7"): {
        "intercept": -4.5, "x1": 1.0, "x2": 1.0, "z": 0.5, "y": 2.0, "z_y": 0.5,
    },
}

_OMEGA_KEYS = frozenset(
    {"prob", "intercept", "x1", "x2", "z", "y", "x1_y", "x2_y", "z_y"}
)


@dataclass(frozen=True)
class DgpParams:
    """Data-generating parameters.

    Parameters
    ----------
    beta_truth : sequence of 5 floats
        (intercept, X1, X2, first confounder, second confounder).
    family : str
        One of ``FAMILIES``.
    sigma_z : float
        Marginal SD of the latent confounders.
    rho : float
        Correlation of the latent confounders, in (-1, 1).
    sigma : float
        Outcome noise SD (linear families; ignored by logistic).
    sigma_tau : float
        SD of the X1 noise component.
    lambda_nu : float
        Rate of the exponential X2 noise component (mean ``1/lambda_nu``).
    """

    beta_truth: tuple[float, ...]
    family: str = "linear-continuous"
    sigma_z: float = 1.0
    rho: float = 0.5
    sigma: float = 1.0
    sigma_tau: float = 1.0
    lambda_nu: float = 1.0

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta_truth)
        if len(beta) != 5:
            raise ValueError("beta_truth must have exactly 5 entries")
        object.__setattr__(self, "beta_truth", beta)
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.sigma_z <= 0:
            raise ValueError("sigma_z must be positive")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (-1, 1)")
        if self.sigma < 0 or self.sigma_tau < 0:
            raise ValueError("noise SDs must be nonnegative")
        if self.lambda_nu <= 0:
            raise ValueError("lambda_nu is a rate and must be positive")


@dataclass
class AnalysisFrame:
    """One synthetic cohort, ready for the estimators.

    Attributes
    ----------
    y : ndarray, shape (n,)
        Outcome; NaN where unobserved. Logistic outcomes are 0/1 floats.
    r : ndarray of bool, shape (n,)
        Observation indicator (True = Y observed).
    x : ndarray, shape (n, 2)
        Covariates of interest (X1, X2).
    z : ndarray, shape (n, 2)
        Adjustment confounders; (Z1, Z2) or the corner dummies (Z3, Z4).
    yhat : ndarray or None
        Surrogate outcome for every row, when attached.
    family : str
        Outcome family, one of ``FAMILIES``.
    z_labels : tuple of str
        Column names for ``z``.
    dgp : DgpParams or None
        Generating parameters, kept so surrogate constructions can draw
        independent training data from the same law.
    raw_z : ndarray or None
        The continuous (Z1, Z2) when ``z`` holds dummies.
    """

    y: np.ndarray
    r: np.ndarray
    x: np.ndarray
    z: np.ndarray
    yhat: np.ndarray | None = None
    family: str = "linear-continuous"
    z_labels: tuple[str, ...] = ("z1", "z2")
    dgp: DgpParams | None = None
    raw_z: np.ndarray | None = None
    # Full outcome vector for harness-side oracle fits only. Estimators must
    # never read this; a regression test scrambles it and asserts invariance.
    _shadow_y: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_observed(self) -> int:
        return int(self.r.sum())

    def design(self) -> np.ndarray:
        """Regression design ``[1 | X1 X2 | z block]``."""
        return build_design(self.x, self.z)

    def to_dataframe(self, unsafe_truth: bool = False) -> pd.DataFrame:
        """Tabular view; masked outcomes become missing values.

        The shadow copy of the full outcome vector is only included when
        ``unsafe_truth`` is set.
        """
        n = self.n
        data: dict[str, object] = {
            "id": np.arange(1, n + 1),
            "y": np.where(self.r, self.y, np.nan),
            "r": self.r.astype(int),
            "x1": self.x[:, 0],
            "x2": self.x[:, 1],
        }
        for k, label in enumerate(self.z_labels):
            data[label] = self.z[:, k]
        data["yhat"] = self.yhat if self.yhat is not None else np.full(n, np.nan)
        if unsafe_truth and self._shadow_y is not None:
            data["y_true_shadow"] = self._shadow_y
        return pd.DataFrame(data)


def frame_to_csv(frame: AnalysisFrame, path, unsafe_truth: bool = False) -> None:
    """Write a frame to CSV (masked outcomes are empty cells)."""
    frame.to_dataframe(unsafe_truth=unsafe_truth).to_csv(path, index=False)


def gen_dataset(params: DgpParams, n: int, rng: np.random.Generator) -> AnalysisFrame:
    """Draw a complete cohort (every outcome observed) of size ``n``.

    Draw order is pinned: confounder normals, then tau, then nu, then the
    outcome noise (normal for the linear families, uniform threshold for
    the logistic family).
    """
    if n < 1:
        raise ValueError("n must be positive")
    u = rng.standard_normal((n, 2))
    z1 = params.sigma_z * u[:, 0]
    z2 = params.sigma_z * (params.rho * u[:, 0] + np.sqrt(1.0 - params.rho**2) * u[:, 1])
    tau = rng.normal(0.0, params.sigma_tau, n) if params.sigma_tau > 0 else np.zeros(n)
    nu = rng.exponential(1.0 / params.lambda_nu, n)
    x1 = np.cos(z1) + tau
    x2 = np.sin(z2) + nu
    x = np.column_stack([x1, x2])
    b = params.beta_truth

    if params.family == "linear-dummy":
        z3 = ((z1 < 0) & (z2 < 0)).astype(float)
        z4 = ((z1 > 0) & (z2 > 0)).astype(float)
        z = np.column_stack([z3, z4])
        labels = ("z3", "z4")
        raw_z = np.column_stack([z1, z2])
        mean = b[0] + b[1] * x1 + b[2] * x2 + b[3] * z3 + b[4] * z4
        noise = rng.normal(0.0, params.sigma, n) if params.sigma > 0 else np.zeros(n)
        y = mean + noise
    else:
        z = np.column_stack([z1, z2])
        labels = ("z1", "z2")
        raw_z = None
        lin = b[0] + b[1] * x1 + b[2] * x2 + b[3] * z1 + b[4] * z2
        if params.family == "linear-continuous":
            noise = rng.normal(0.0, params.sigma, n) if params.sigma > 0 else np.zeros(n)
            y = lin + noise
        else:
            y = (rng.random(n) < expit(lin)).astype(float)

    return AnalysisFrame(
        y=y,
        r=np.ones(n, dtype=bool),
        x=x,
        z=z,
        yhat=None,
        family=params.family,
        z_labels=labels,
        dgp=params,
        raw_z=raw_z,
        _shadow_y=y.copy(),
    )


def _default_outcome_term(setting: str) -> str:
    return "identity" if setting == "logistic" else "indicator_ge_one"


@dataclass(frozen=True)
class ObservationModelSpec:
    """Which missingness mechanism to apply, and how the outcome enters.

    ``omega`` defaults to the fixed coefficient table for
    (setting, mechanism); passing it explicitly overrides individual terms,
    which the tests use to isolate interaction contributions.
    """

    mechanism: str
    setting: str = "linear-continuous"
    outcome_term: str | None = None
    omega: Mapping[str, float] | None = None

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.setting not in FAMILIES:
            raise ValueError(f"unknown setting {self.setting!r}")
        term = self.outcome_term or _default_outcome_term(self.setting)
        if term not in OUTCOME_TERMS:
            raise ValueError(f"unknown outcome_term {term!r}")
        object.__setattr__(self, "outcome_term", term)
        omega = self.omega
        if omega is None:
            omega = OMEGA_TABLE[(self.setting, self.mechanism)]
        else:
            unknown = set(omega) - _OMEGA_KEYS
            if unknown:
                raise ValueError(f"unknown omega keys {sorted(unknown)}")
        object.__setattr__(self, "omega", dict(omega))

    def observation_probability(self, frame: AnalysisFrame) -> np.ndarray:
        """Per-row probability of observing the outcome."""
        omega = self.omega
        if "prob" in omega:
            return np.full(frame.n, float(omega["prob"]))
        y_full = frame._shadow_y if frame._shadow_y is not None else frame.y
        if not np.all(np.isfinite(y_full)):
            raise ValueError("observation model needs the complete outcome")
        if self.outcome_term == "identity":
            t = y_full
        elif self.outcome_term == "indicator_ge_one":
            t = (y_full >= 1.0).astype(float)
        else:
            t = (y_full == 1.0).astype(float)
        x1, x2 = frame.x[:, 0], frame.x[:, 1]
        zc = frame.z[:, 1]
        eta = (
            omega.get("intercept", 0.0)
            + omega.get("x1", 0.0) * x1
            + omega.get("x2", 0.0) * x2
            + omega.get("z", 0.0) * zc
            + omega.get("y", 0.0) * t
            + omega.get("x1_y", 0.0) * x1 * t
            + omega.get("x2_y", 0.0) * x2 * t
            + omega.get("z_y", 0.0) * zc * t
        )
        return expit(eta)


def apply_observation_model(
    frame: AnalysisFrame, spec: ObservationModelSpec, rng: np.random.Generator
) -> AnalysisFrame:
    """Draw observation indicators and mask the unobserved outcomes.

    Returns a new frame; covariates, confounders, and any attached
    surrogate are untouched, and the full outcome is retained on the
    shadow attribute.
    """
    if spec.setting != frame.family:
        raise ValueError(
            f"observation model for setting {spec.setting!r} applied to a "
            f"{frame.family!r} frame"
        )
    if not np.all(np.isfinite(frame.y)):
        raise ValueError("frame is already masked; generate a fresh cohort")
    pi = spec.observation_probability(frame)
    r = rng.random(frame.n) < pi
    y_masked = frame.y.copy()
    y_masked[~r] = np.nan
    shadow = frame._shadow_y if frame._shadow_y is not None else frame.y.copy()
    return replace(frame, y=y_masked, r=r, _shadow_y=shadow)


@dataclass(frozen=True)
class SurrogateSpec:
    """Surrogate-outcome construction.

    Exactly the parameters belonging to ``kind`` may be set:

    - ``deterministic-sin``: none
    - ``bias-noise``: ``lambda_pred`` (bias rate), ``sigma_pred`` (noise SD)
    - ``label-flip``: ``flip_p``
    - ``held-out-logistic``: ``train_n``
    """

    kind: str
    lambda_pred: float | None = None
    sigma_pred: float | None = None
    flip_p: float | None = None
    train_n: int | None = None

    def __post_init__(self):
        if self.kind not in SURROGATE_KINDS:
            raise ValueError(f"unknown surrogate kind {self.kind!r}")
        required = {
            "deterministic-sin": (),
            "bias-noise": ("lambda_pred", "sigma_pred"),
            "label-flip": ("flip_p",),
            "held-out-logistic": ("train_n",),
        }[self.kind]
        for name in ("lambda_pred", "sigma_pred", "flip_p", "train_n"):
            value = getattr(self, name)
            if name in required and value is None:
                raise ValueError(f"{self.kind} requires {name}")
            if name not in required and value is not None:
                raise ValueError(f"{name} does not apply to {self.kind}")
        if self.lambda_pred is not None and self.lambda_pred <= 0:
            raise ValueError("lambda_pred is a rate and must be positive")
        if self.sigma_pred is not None and self.sigma_pred < 0:
            raise ValueError("sigma_pred must be nonnegative")
        if self.flip_p is not None and not 0.0 <= self.flip_p <= 1.0:
            raise ValueError("flip_p must lie in [0, 1]")
        if self.train_n is not None and self.train_n < 6:
            raise ValueError("train_n too small to fit the training model")


def make_surrogate(
    frame: AnalysisFrame, spec: SurrogateSpec, rng: np.random.Generator
) -> AnalysisFrame:
    """Attach a surrogate outcome column, returning a new frame.

    The construction reads the full outcome (shadow when the frame is
    already masked). Draw order per kind: bias-noise draws the exponential
    bias then the normal noise; held-out-logistic draws its training cohort
    first, then the Bernoulli predictions.
    """
    y_full = frame._shadow_y if frame._shadow_y is not None else frame.y
    if y_full is None or not np.all(np.isfinite(y_full)):
        raise ValueError("surrogate construction needs the complete outcome")
    binary = frame.family == "logistic"

    if spec.kind == "deterministic-sin":
        zc = frame.raw_z if frame.raw_z is not None else frame.z
        x1, x2 = frame.x[:, 0], frame.x[:, 1]
        yhat = y_full + 2.0 * np.sin(x1**2 + x2**3 + zc[:, 0] ** 2 + zc[:, 1] ** 2)
    elif spec.kind == "bias-noise":
        if binary:
            raise ValueError("bias-noise surrogate is undefined for a binary outcome")
        bias = rng.exponential(1.0 / spec.lambda_pred, frame.n)
        noise = (
            rng.normal(0.0, spec.sigma_pred, frame.n)
            if spec.sigma_pred > 0
            else np.zeros(frame.n)
        )
        yhat = y_full + bias + noise
    elif spec.kind == "label-flip":
        if not binary:
            raise ValueError("label-flip surrogate requires a binary outcome")
        flips = rng.random(frame.n) < spec.flip_p
        yhat = np.abs(y_full - flips.astype(float))
    else:  # held-out-logistic
        if not binary:
            raise ValueError("held-out-logistic surrogate requires a binary outcome")
        if frame.dgp is None:
            raise ValueError("frame carries no generating parameters")
        train = gen_dataset(frame.dgp, spec.train_n, rng)
        fit = fit_logistic(train.design(), train.y)
        p = expit(frame.design() @ fit.beta)
        yhat = (rng.random(frame.n) < p).astype(float)

    return replace(frame, yhat=yhat)
