"""Batch association scanning across genotype variants.

The scanner runs the partially-observed-outcome estimators variant by
variant: each fit regresses the (inverse-normal-transformed) phenotype on
an intercept, one dosage column, and a shared confounder block. The
observation propensity is fit once per scan on the confounders alone and
reused by the weighted methods, which keeps a desk-scale scan linear in the
number of variants; a per-variant refit is available behind a flag.

Scan output pairs the surrogate-aware methods with their classical
counterparts (joint-surrogate vs complete-case, weighted prediction-based
vs weighted complete-case) so calibration and efficiency can be read off
as estimate differences and standard-error ratios per variant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import ndtri

from .core import build_design, fit_logistic
from .datagen import (
    AnalysisFrame,
    ObservationModelSpec,
    SurrogateSpec,
    apply_observation_model,
    make_surrogate,
)
from .estimators import (
    PropensityModel,
    estimate_cca,
    estimate_psppi,
    estimate_synsurr,
    estimate_wcca,
    fit_propensity,
)
from .exceptions import ConfigError, DegenerateRanks, MisregError

__all__ = [
    "SCAN_METHODS",
    "GENOME_WIDE_P",
    "GenotypeMatrix",
    "CohortTable",
    "ScanRow",
    "ScanResult",
    "inverse_normal_transform",
    "maf_filter",
    "run_variant_scan",
    "simulate_cohort",
    "read_pheno_csv",
    "read_geno_csv",
    "write_pheno_csv",
    "write_geno_csv",
]

SCAN_METHODS = ("cca", "wcca", "ps_ppi", "synsurr")
GENOME_WIDE_P = 5e-8

# Pairings reported as estimate differences and SE ratios.
_CONTRASTS = (("synsurr", "cca"), ("ps_ppi", "wcca"))


@dataclass(frozen=True)
class GenotypeMatrix:
    """Dosage matrix with variant identifiers.

    ``dosages`` has shape (n, V) with entries in [0, 2].
    """

    dosages: np.ndarray
    variant_ids: tuple[str, ...]

    def __post_init__(self):
        d = np.asarray(self.dosages, dtype=float)
        if d.ndim != 2:
            raise ValueError("dosages must be 2-dimensional")
        if len(self.variant_ids) != d.shape[1]:
            raise ValueError("one variant id per dosage column is required")
        if len(set(self.variant_ids)) != len(self.variant_ids):
            raise ValueError("variant ids must be unique")
        if d.size and (np.nanmin(d) < 0.0 or np.nanmax(d) > 2.0):
            raise ValueError("dosages must lie in [0, 2]")
        object.__setattr__(self, "dosages", d)
        object.__setattr__(self, "variant_ids", tuple(self.variant_ids))

    @property
    def n(self) -> int:
        return self.dosages.shape[0]

    @property
    def n_variants(self) -> int:
        return self.dosages.shape[1]

    def maf(self) -> np.ndarray:
        """Minor-allele frequencies ``min(f, 1 - f)`` with ``f = mean/2``."""
        f = np.nanmean(self.dosages, axis=0) / 2.0
        return np.minimum(f, 1.0 - f)


@dataclass
class CohortTable:
    """Phenotype side of a scan: outcome, surrogate, confounders.

    ``y`` is NaN where unobserved; ``r`` marks observed rows.
    """

    ids: np.ndarray
    y: np.ndarray
    r: np.ndarray
    yhat: np.ndarray
    confounders: np.ndarray
    confounder_labels: tuple[str, ...]

    def __post_init__(self):
        n = self.y.shape[0]
        if self.confounders.ndim != 2 or self.confounders.shape[0] != n:
            raise ValueError("confounders must be (n, q)")
        if len(self.confounder_labels) != self.confounders.shape[1]:
            raise ValueError("one label per confounder column is required")

    @property
    def n(self) -> int:
        return self.y.shape[0]


def inverse_normal_transform(values: np.ndarray) -> np.ndarray:
    """Rank-based inverse normal transform with Blom offsets.

    Non-missing entries are ranked (average ranks for ties) and mapped
    through ``Phi^{-1}((rank - 3/8) / (m + 1/4))``; missing entries pass
    through unchanged.

    Raises
    ------
    DegenerateRanks
        When fewer than 2 non-missing values exist or all are identical.
    """
    from scipy.stats import rankdata

    values = np.asarray(values, dtype=float)
    out = values.copy()
    present = np.isfinite(values)
    m = int(present.sum())
    if m < 2:
        raise DegenerateRanks("need at least 2 non-missing values to rank")
    obs = values[present]
    if obs.min() == obs.max():
        raise DegenerateRanks("all non-missing values are identical")
    ranks = rankdata(obs, method="average")
    out[present] = ndtri((ranks - 0.375) / (m + 0.25))
    return out


def maf_filter(geno: GenotypeMatrix, threshold: float) -> GenotypeMatrix:
    """Keep variants with minor-allele frequency at or above ``threshold``,
    preserving column order."""
    if not 0.0 <= threshold < 0.5:
        raise ValueError("threshold must lie in [0, 0.5)")
    keep = geno.maf() >= threshold
    ids = tuple(v for v, k in zip(geno.variant_ids, keep) if k)
    return GenotypeMatrix(dosages=geno.dosages[:, keep], variant_ids=ids)


@dataclass
class ScanRow:
    """Per-variant scan output."""

    variant: str
    maf: float
    estimates: dict[str, float] = field(default_factory=dict)
    ses: dict[str, float] = field(default_factory=dict)
    p_values: dict[str, float] = field(default_factory=dict)
    significant: dict[str, bool] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    beta_diff: dict[str, float] = field(default_factory=dict)
    se_ratio: dict[str, float] = field(default_factory=dict)


@dataclass
class ScanResult:
    rows: list[ScanRow]
    methods: tuple[str, ...]

    def to_dataframe(self) -> pd.DataFrame:
        """Fixed column order: variant, maf, per-method blocks
        (estimate, se, p, significance flag, error marker), then the
        contrast columns for whichever pairings were run."""
        cols: dict[str, list] = {
            "variant": [r.variant for r in self.rows],
            "maf": [r.maf for r in self.rows],
        }
        for m in self.methods:
            cols[f"beta_{m}"] = [r.estimates.get(m, math.nan) for r in self.rows]
            cols[f"se_{m}"] = [r.ses.get(m, math.nan) for r in self.rows]
            cols[f"p_{m}"] = [r.p_values.get(m, math.nan) for r in self.rows]
            cols[f"sig_{m}"] = [r.significant.get(m, False) for r in self.rows]
            cols[f"error_{m}"] = [r.errors.get(m, "") for r in self.rows]
        for a, b in _CONTRASTS:
            if a in self.methods and b in self.methods:
                key = f"{a}_vs_{b}"
                cols[f"beta_diff_{key}"] = [
                    r.beta_diff.get(key, math.nan) for r in self.rows
                ]
                cols[f"se_ratio_{key}"] = [
                    r.se_ratio.get(key, math.nan) for r in self.rows
                ]
        return pd.DataFrame(cols)

    def to_csv(self, path) -> Path:
        path = Path(path)
        self.to_dataframe().to_csv(path, index=False, float_format="%.12g")
        return path


def _confounder_propensity(cohort: CohortTable, pi_min: float) -> PropensityModel:
    """Propensity of observation on the confounders alone (variant-free)."""
    if cohort.r.all():
        ones = np.ones(cohort.n)
        return PropensityModel(
            coefficients=np.array([]), raw_pi=ones, fitted_pi=ones, pi_min=pi_min
        )
    from scipy.special import expit

    g = build_design(cohort.confounders, None)
    fit = fit_logistic(g, cohort.r.astype(float))
    raw = expit(g @ fit.beta)
    return PropensityModel(
        coefficients=fit.beta,
        raw_pi=raw,
        fitted_pi=np.clip(raw, pi_min, 1.0),
        pi_min=pi_min,
    )


def run_variant_scan(
    cohort: CohortTable,
    geno: GenotypeMatrix,
    methods: tuple[str, ...] = SCAN_METHODS,
    maf_threshold: float = 0.01,
    int_transform: bool = True,
    refit_propensity: bool = False,
    pi_min: float = 0.01,
    sig_threshold: float = GENOME_WIDE_P,
) -> ScanResult:
    """Fit the requested methods for every variant passing the MAF filter.

    The phenotype (observed entries) and the surrogate (all rows) are
    inverse-normal-transformed separately by default so both outcomes share
    a scale. Per-method failures are recorded on the row and never abort
    the scan. Rows are sorted by variant id.
    """
    unknown = [m for m in methods if m not in SCAN_METHODS]
    if unknown:
        raise ConfigError(f"unknown scan methods {unknown}; valid: {list(SCAN_METHODS)}")
    if geno.n != cohort.n:
        raise ValueError("genotype and phenotype row counts differ")
    kept = maf_filter(geno, maf_threshold)
    mafs = kept.maf()

    y = cohort.y.copy()
    yhat = cohort.yhat.copy()
    if int_transform:
        y = inverse_normal_transform(np.where(cohort.r, y, np.nan))
        yhat = inverse_normal_transform(yhat)
    y = np.where(cohort.r, y, np.nan)

    shared = None
    if not refit_propensity and ("wcca" in methods or "ps_ppi" in methods):
        shared = _confounder_propensity(cohort, pi_min)

    rows = []
    for v in range(kept.n_variants):
        frame = AnalysisFrame(
            y=y,
            r=cohort.r,
            x=kept.dosages[:, v : v + 1],
            z=cohort.confounders,
            yhat=yhat,
            family="linear-continuous",
            z_labels=cohort.confounder_labels,
        )
        row = ScanRow(variant=kept.variant_ids[v], maf=float(mafs[v]))
        propensity = shared
        if refit_propensity and ("wcca" in methods or "ps_ppi" in methods):
            try:
                propensity = fit_propensity(frame, pi_min)
            except MisregError as err:
                propensity = err
        for m in methods:
            try:
                if isinstance(propensity, MisregError) and m in ("wcca", "ps_ppi"):
                    raise propensity
                if m == "cca":
                    fit = estimate_cca(frame)
                elif m == "wcca":
                    fit = estimate_wcca(frame, pi_min, propensity=propensity)
                elif m == "ps_ppi":
                    fit = estimate_psppi(
                        frame, weighted=True, pi_min=pi_min, propensity=propensity
                    )
                else:
                    fit = estimate_synsurr(frame)
            except MisregError as err:
                row.errors[m] = type(err).__name__
                continue
            row.estimates[m] = float(fit.beta[1])
            row.ses[m] = float(fit.se[1])
            row.p_values[m] = float(fit.p_values[1])
            row.significant[m] = bool(fit.p_values[1] < sig_threshold)
        for a, b in _CONTRASTS:
            if a in row.estimates and b in row.estimates:
                key = f"{a}_vs_{b}"
                row.beta_diff[key] = row.estimates[a] - row.estimates[b]
                row.se_ratio[key] = (
                    row.ses[a] / row.ses[b] if row.ses[b] > 0 else math.nan
                )
        rows.append(row)
    rows.sort(key=lambda r: r.variant)
    return ScanResult(rows=rows, methods=tuple(methods))


def simulate_cohort(
    n: int,
    n_variants: int,
    causal: dict[int, float] | int = 1,
    effect: float = 0.15,
    missingness: float | ObservationModelSpec = 0.5,
    surrogate_corr: float = 0.8,
    maf_range: tuple[float, float] = (0.05, 0.5),
    confounder_effect: float = 0.3,
    seed: int = 0,
) -> tuple[CohortTable, GenotypeMatrix, dict]:
    """Generate a genotype matrix plus a partially observed phenotype.

    Variant allele frequencies are uniform on ``maf_range`` and dosages
    binomial(2, f). The phenotype is linear in the standardized causal
    dosages (each with the given ``effect``), two standard-normal
    confounders, and unit noise. ``causal`` is either a count (the first
    variants become causal) or a mapping of variant index to effect.
    The surrogate adds noise sized so its correlation with the phenotype is
    approximately ``surrogate_corr``, and missingness is MCAR with the
    given missing fraction unless an observation-model spec is supplied.

    Returns the cohort, the genotypes, and an info mapping with the causal
    assignment and the drawn allele frequencies.
    """
    if not 0.0 < surrogate_corr <= 1.0:
        raise ValueError("surrogate_corr must lie in (0, 1]")
    lo, hi = maf_range
    if not 0.0 < lo <= hi <= 0.5:
        raise ValueError("maf_range must satisfy 0 < lo <= hi <= 0.5")
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(lo, hi, n_variants)
    dosages = rng.binomial(2, freqs[None, :], size=(n, n_variants)).astype(float)
    variant_ids = tuple(f"v{k + 1:05d}" for k in range(n_variants))

    if isinstance(causal, int):
        causal_map = {k: effect for k in range(min(causal, n_variants))}
    else:
        causal_map = {int(k): float(v) for k, v in causal.items()}

    conf = rng.standard_normal((n, 2))
    noise = rng.standard_normal(n)
    y = confounder_effect * conf[:, 0] + confounder_effect * conf[:, 1] + noise
    for idx, b in causal_map.items():
        col = dosages[:, idx]
        sd = col.std()
        if sd > 0:
            y = y + b * (col - col.mean()) / sd

    # Surrogate and missingness reuse the cohort-frame machinery with the
    # phenotype in the outcome role (negligible bias rate; the correlation
    # knob is the noise SD).
    frame = AnalysisFrame(
        y=y,
        r=np.ones(n, dtype=bool),
        x=np.zeros((n, 2)),
        z=conf,
        family="linear-continuous",
        z_labels=("c1", "c2"),
        _shadow_y=y.copy(),
    )
    sd_y = float(y.std())
    sigma_pred = sd_y * math.sqrt(1.0 / surrogate_corr**2 - 1.0)
    frame = make_surrogate(
        frame,
        SurrogateSpec(kind="bias-noise", lambda_pred=1e9, sigma_pred=sigma_pred),
        rng,
    )
    if isinstance(missingness, ObservationModelSpec):
        obs_spec = missingness
    else:
        if not 0.0 <= missingness < 1.0:
            raise ValueError("missing fraction must lie in [0, 1)")
        obs_spec = ObservationModelSpec(
            mechanism="mcar",
            setting="linear-continuous",
            omega={"prob": 1.0 - missingness},
        )
    masked = apply_observation_model(frame, obs_spec, rng)

    cohort = CohortTable(
        ids=np.arange(1, n + 1),
        y=masked.y,
        r=masked.r,
        yhat=masked.yhat,
        confounders=conf,
        confounder_labels=("c1", "c2"),
    )
    geno = GenotypeMatrix(dosages=dosages, variant_ids=variant_ids)
    info = {
        "causal": {variant_ids[k]: v for k, v in causal_map.items()},
        "allele_freqs": freqs,
        "shadow_y": y.copy(),
    }
    return cohort, geno, info


def write_pheno_csv(cohort: CohortTable, path, unsafe_truth: bool = False,
                    shadow: np.ndarray | None = None) -> Path:
    """Phenotype CSV: id, y (empty when unobserved), yhat, confounders.

    ``shadow`` (the full outcome) is only written when ``unsafe_truth`` is
    set, mirroring the frame exporter's gating.
    """
    path = Path(path)
    data = {
        "id": cohort.ids,
        "y": np.where(cohort.r, cohort.y, np.nan),
        "yhat": cohort.yhat,
    }
    for k, label in enumerate(cohort.confounder_labels):
        data[label] = cohort.confounders[:, k]
    if unsafe_truth and shadow is not None:
        data["y_true_shadow"] = shadow
    pd.DataFrame(data).to_csv(path, index=False, float_format="%.12g")
    return path


def write_geno_csv(geno: GenotypeMatrix, path) -> Path:
    """Genotype CSV: id column, then one dosage column per variant."""
    path = Path(path)
    data = {"id": np.arange(1, geno.n + 1)}
    for k, vid in enumerate(geno.variant_ids):
        data[vid] = geno.dosages[:, k]
    pd.DataFrame(data).to_csv(path, index=False, float_format="%.12g")
    return path


def read_pheno_csv(path) -> CohortTable:
    """Read a phenotype CSV (id, y, yhat, then confounder columns)."""
    df = pd.read_csv(path)
    required = ("id", "y", "yhat")
    for col in required:
        if col not in df.columns:
            raise ConfigError(f"phenotype CSV is missing the {col!r} column")
    conf_cols = [c for c in df.columns if c not in required and c != "y_true_shadow"]
    if not conf_cols:
        raise ConfigError("phenotype CSV has no confounder columns")
    y = df["y"].to_numpy(dtype=float)
    return CohortTable(
        ids=df["id"].to_numpy(),
        y=y,
        r=np.isfinite(y),
        yhat=df["yhat"].to_numpy(dtype=float),
        confounders=df[conf_cols].to_numpy(dtype=float),
        confounder_labels=tuple(conf_cols),
    )


def read_geno_csv(path, pheno_ids: np.ndarray | None = None) -> GenotypeMatrix:
    """Read a genotype CSV; optionally check id alignment with a cohort."""
    df = pd.read_csv(path)
    if "id" not in df.columns:
        raise ConfigError("genotype CSV is missing the 'id' column")
    if pheno_ids is not None and not np.array_equal(
        df["id"].to_numpy(), np.asarray(pheno_ids)
    ):
        raise ConfigError("genotype and phenotype id columns do not match")
    variant_cols = [c for c in df.columns if c != "id"]
    return GenotypeMatrix(
        dosages=df[variant_cols].to_numpy(dtype=float),
        variant_ids=tuple(variant_cols),
    )
