"""Monte Carlo harness: scenarios, replicate scheduling, metrics, tables.

A scenario bundles a data-generating law, a missingness mechanism, an
optional surrogate construction, and a list of estimation methods. Running
it draws ``replicates`` independent cohorts, fits every method on each, and
aggregates per-coefficient operating characteristics (absolute bias, MSE,
rejection rate at the nominal 5% level, and power against a
calibration-adjusted threshold obtained from a matched null run).

Reproducibility contract: replicate ``j`` derives its seed as a 64-bit
avalanche mix (the splitmix64 finalizer) of ``base_seed XOR (j * golden)``
with the 64-bit golden-ratio constant, so any subset of replicates can be
recomputed independently; results are aggregated in replicate order, making
every output byte-identical for any worker count. Methods that need their
own randomness (multiple imputation) draw from a child stream seeded by
(replicate seed, method index) so one method's failure cannot shift
another's draws.
"""

from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .datagen import (
    FAMILIES,
    MECHANISMS,
    AnalysisFrame,
    DgpParams,
    ObservationModelSpec,
    SurrogateSpec,
    apply_observation_model,
    gen_dataset,
    make_surrogate,
)
from .estimators import (
    METHOD_IDS,
    PbTuning,
    estimate_cca,
    estimate_full,
    estimate_naive,
    estimate_ppi,
    estimate_psppi,
    estimate_synsurr,
    estimate_wcca,
    fit_propensity,
)
from .exceptions import ConfigError, MisregError
from .impute import ForestParams, mi_estimate

__all__ = [
    "DEFAULT_BASE_SEED",
    "GRID_NAMES",
    "MiParams",
    "SimScenario",
    "RecordRow",
    "MetricsRow",
    "ScenarioSummary",
    "ScenarioResult",
    "TableRow",
    "mix64",
    "replicate_seed",
    "derive_null_twin",
    "run_scenario",
    "compute_metrics",
    "builtin_grids",
    "build_table_rows",
    "emit_table",
    "run_to_dir",
    "table_from_dir",
    "scenario_from_config",
    "scenario_to_config",
]

DEFAULT_BASE_SEED = 20260815
DEFAULT_REPLICATES = 500
ALPHA = 0.05

GRID_NAMES = (
    "table_s1",
    "table_s2",
    "table_s3",
    "quality_grid_linear",
    "quality_grid_logistic",
    "thm1_suite",
    "thm2_suite",
    "thm3_suite",
)

_MASK64 = (1 << 64) - 1
_GOLDEN64 = 0x9E3779B97F4A7C15

# Methods that cannot run without a surrogate column.
_NEEDS_SURROGATE = frozenset(
    {"naive", "ppi", "ppi_pp", "ps_ppi", "ps_ppi_cca", "synsurr"}
)


def mix64(value: int) -> int:
    """64-bit avalanche mix (the splitmix64 finalizer constants)."""
    v = value & _MASK64
    v ^= v >> 30
    v = (v * 0xBF58476D1CE4E5B9) & _MASK64
    v ^= v >> 27
    v = (v * 0x94D049BB133111EB) & _MASK64
    v ^= v >> 31
    return v


def replicate_seed(base_seed: int, j: int) -> int:
    """Independent 64-bit seed for replicate ``j``."""
    return mix64((base_seed ^ ((j * _GOLDEN64) & _MASK64)) & _MASK64)


@dataclass(frozen=True)
class MiParams:
    """Multiple-imputation settings shared by both imputers."""

    k: int = 5
    donor_k: int = 5
    trees: int = 10
    max_depth: int = 10
    min_leaf: int = 5

    def forest(self) -> ForestParams:
        return ForestParams(
            n_trees=self.trees, max_depth=self.max_depth, min_leaf=self.min_leaf
        )


@dataclass(frozen=True)
class SimScenario:
    """One simulation cell.

    ``null_twin=True`` (the default) makes :func:`run_scenario` also run
    the matched scenario with the tested coefficients zeroed, on the same
    seed schedule, to calibrate the power threshold. It is ignored when
    the tested coefficients are already zero.
    """

    name: str
    dgp: DgpParams
    observation: ObservationModelSpec
    surrogate: SurrogateSpec | None
    n: int
    methods: tuple[str, ...]
    replicates: int = DEFAULT_REPLICATES
    base_seed: int = DEFAULT_BASE_SEED
    mi: MiParams = field(default_factory=MiParams)
    null_twin: bool = True
    test_coefficients: tuple[int, ...] = (1, 2)
    pi_min: float = 0.01

    def __post_init__(self):
        if self.n < 10:
            raise ConfigError("n must be at least 10")
        if self.replicates < 1:
            raise ConfigError("replicates must be positive")
        if not self.methods:
            raise ConfigError("at least one method is required")
        unknown = [m for m in self.methods if m not in METHOD_IDS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; valid: {list(METHOD_IDS)}")
        if self.observation.setting != self.dgp.family:
            raise ConfigError(
                f"observation setting {self.observation.setting!r} does not match "
                f"family {self.dgp.family!r}"
            )
        if self.surrogate is None:
            needy = sorted(_NEEDS_SURROGATE.intersection(self.methods))
            if needy:
                raise ConfigError(f"methods {needy} need a surrogate spec")
        if "synsurr" in self.methods and self.dgp.family == "logistic":
            raise ConfigError("synsurr is only defined for the linear families")
        for c in self.test_coefficients:
            if not 0 <= c <= 4:
                raise ConfigError("test_coefficients must index the 5 coefficients")
        if not self.test_coefficients:
            raise ConfigError("at least one tested coefficient is required")

    @property
    def is_null(self) -> bool:
        return all(self.dgp.beta_truth[c] == 0.0 for c in self.test_coefficients)


def derive_null_twin(scenario: SimScenario) -> SimScenario:
    """The matched null scenario: tested coefficients zeroed, same seeds."""
    beta = list(scenario.dgp.beta_truth)
    for c in scenario.test_coefficients:
        beta[c] = 0.0
    return replace(
        scenario,
        name=scenario.name + "__null",
        dgp=replace(scenario.dgp, beta_truth=tuple(beta)),
        null_twin=False,
    )


@dataclass(frozen=True)
class RecordRow:
    """One (replicate, method, coefficient) outcome."""

    replicate: int
    method: str
    coefficient: int
    estimate: float
    se: float
    p_value: float
    error: str = ""


def _run_replicate(scenario: SimScenario, j: int) -> list[RecordRow]:
    seed = replicate_seed(scenario.base_seed, j)
    rng = np.random.default_rng(seed)
    complete = gen_dataset(scenario.dgp, scenario.n, rng)
    if scenario.surrogate is not None:
        complete = make_surrogate(complete, scenario.surrogate, rng)
    masked = apply_observation_model(complete, scenario.observation, rng)

    propensity_cache: list = []

    def shared_propensity():
        if not propensity_cache:
            try:
                propensity_cache.append(fit_propensity(masked, scenario.pi_min))
            except MisregError as err:
                propensity_cache.append(err)
        got = propensity_cache[0]
        if isinstance(got, MisregError):
            raise got
        return got

    rows: list[RecordRow] = []
    for method in scenario.methods:
        try:
            fit = _dispatch_method(method, scenario, complete, masked, seed,
                                   shared_propensity)
        except MisregError as err:
            for c in scenario.test_coefficients:
                rows.append(
                    RecordRow(j, method, c, math.nan, math.nan, math.nan,
                              error=type(err).__name__)
                )
            continue
        for c in scenario.test_coefficients:
            rows.append(
                RecordRow(
                    j,
                    method,
                    c,
                    float(fit.beta[c]),
                    float(fit.se[c]),
                    float(fit.p_values[c]),
                )
            )
    return rows


def _dispatch_method(
    method: str,
    scenario: SimScenario,
    complete: AnalysisFrame,
    masked: AnalysisFrame,
    seed: int,
    shared_propensity,
):
    if method == "full":
        return estimate_full(complete)
    if method == "cca":
        return estimate_cca(masked)
    if method == "wcca":
        return estimate_wcca(masked, scenario.pi_min, propensity=shared_propensity())
    if method == "naive":
        return estimate_naive(masked)
    if method == "ppi":
        return estimate_ppi(masked)
    if method == "ppi_pp":
        return estimate_ppi(
            masked,
            PbTuning(mode="scalar", theta_scalar="auto"),
            target_coefficients=scenario.test_coefficients,
        )
    if method == "ps_ppi":
        return estimate_psppi(
            masked, weighted=True, pi_min=scenario.pi_min,
            propensity=shared_propensity(),
        )
    if method == "ps_ppi_cca":
        return estimate_psppi(masked, weighted=False)
    if method == "synsurr":
        return estimate_synsurr(masked)
    if method in ("mi_pmm", "mi_rf"):
        child = np.random.default_rng(
            np.random.SeedSequence([seed, METHOD_IDS.index(method)])
        )
        return mi_estimate(
            masked,
            imputer="pmm" if method == "mi_pmm" else "rf",
            k=scenario.mi.k,
            donor_k=scenario.mi.donor_k,
            forest=scenario.mi.forest(),
            rng=child,
        )
    raise ConfigError(f"unknown method {method!r}")


def _replicate_task(payload: tuple[SimScenario, int]):
    scenario, j = payload
    return j, _run_replicate(scenario, j)


@dataclass
class MetricsRow:
    """Operating characteristics for one (method, coefficient) cell."""

    method: str
    coefficient: int
    truth: float
    abs_bias: float
    mse: float
    rejection_rate: float
    mc_se_rejection: float
    adjusted_power: float | None
    p05_threshold: float | None
    mc_se_power: float | None
    replicate_count: int
    failure_count: int


@dataclass
class ScenarioSummary:
    scenario: str
    rows: list[MetricsRow]

    def row(self, method: str, coefficient: int) -> MetricsRow:
        for r in self.rows:
            if r.method == method and r.coefficient == coefficient:
                return r
        raise KeyError((method, coefficient))


@dataclass
class ScenarioResult:
    scenario: SimScenario
    records: list[RecordRow]
    summary: ScenarioSummary
    null_records: list[RecordRow] | None = None
    null_summary: ScenarioSummary | None = None
    null_source: str | None = None


def compute_metrics(
    records: list[RecordRow],
    truth_beta: tuple[float, ...],
    null_p_values: dict[tuple[str, int], np.ndarray] | None = None,
    scenario_name: str = "",
    alpha: float = ALPHA,
) -> ScenarioSummary:
    """Aggregate replicate records into per-(method, coefficient) metrics.

    ``null_p_values`` maps (method, coefficient) to the matched null run's
    p-values; when present, the adjusted power threshold is the
    ``ceil(alpha * L)``-th smallest null p-value and power counts strict
    exceedances below it. Failed replicates are excluded from every rate
    and counted in ``failure_count``.
    """
    groups: dict[tuple[str, int], list[RecordRow]] = {}
    order: list[tuple[str, int]] = []
    for row in records:
        key = (row.method, row.coefficient)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)

    rows = []
    for key in order:
        method, coef = key
        rs = groups[key]
        ok = [r for r in rs if not r.error and math.isfinite(r.estimate)]
        failures = len(rs) - len(ok)
        est = np.array([r.estimate for r in ok])
        pvals = np.array([r.p_value for r in ok])
        count = len(ok)
        truth = float(truth_beta[coef])
        if count:
            abs_bias = float(abs(est.mean() - truth))
            mse = float(np.mean((est - truth) ** 2))
            rejection = float(np.mean(pvals < alpha))
            mc_se_rej = float(np.sqrt(rejection * (1 - rejection) / count))
        else:
            abs_bias = mse = rejection = mc_se_rej = math.nan
        adjusted = threshold = mc_se_pow = None
        if null_p_values is not None and key in null_p_values and count:
            null_p = np.sort(np.asarray(null_p_values[key]))
            if null_p.size:
                k = max(1, math.ceil(alpha * null_p.size))
                threshold = float(null_p[k - 1])
                adjusted = float(np.mean(pvals < threshold))
                mc_se_pow = float(np.sqrt(adjusted * (1 - adjusted) / count))
        rows.append(
            MetricsRow(
                method=method,
                coefficient=coef,
                truth=truth,
                abs_bias=abs_bias,
                mse=mse,
                rejection_rate=rejection,
                mc_se_rejection=mc_se_rej,
                adjusted_power=adjusted,
                p05_threshold=threshold,
                mc_se_power=mc_se_pow,
                replicate_count=count,
                failure_count=failures,
            )
        )
    return ScenarioSummary(scenario=scenario_name, rows=rows)


def _null_p_map(
    records: list[RecordRow],
) -> dict[tuple[str, int], np.ndarray]:
    out: dict[tuple[str, int], list[float]] = {}
    for r in records:
        if not r.error and math.isfinite(r.p_value):
            out.setdefault((r.method, r.coefficient), []).append(r.p_value)
    return {k: np.asarray(v) for k, v in out.items()}


def _run_replicates(scenario: SimScenario, threads: int) -> list[RecordRow]:
    reps = range(scenario.replicates)
    if threads <= 1:
        pairs = [(j, _run_replicate(scenario, j)) for j in reps]
    else:
        payloads = [(scenario, j) for j in reps]
        chunk = max(1, scenario.replicates // (threads * 8))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            pairs = list(pool.map(_replicate_task, payloads, chunksize=chunk))
    pairs.sort(key=lambda item: item[0])
    records: list[RecordRow] = []
    for _, rows in pairs:
        records.extend(rows)
    return records


def run_scenario(
    scenario: SimScenario,
    threads: int = 1,
    null_records: list[RecordRow] | None = None,
) -> ScenarioResult:
    """Run one scenario (and its null twin when needed for power).

    ``null_records`` short-circuits the twin with records from an
    already-run matched null scenario.
    """
    twin_records = null_records
    twin_summary = None
    if twin_records is None and scenario.null_twin and not scenario.is_null:
        twin = derive_null_twin(scenario)
        twin_records = _run_replicates(twin, threads)
        twin_summary = compute_metrics(
            twin_records, twin.dgp.beta_truth, scenario_name=twin.name
        )
    records = _run_replicates(scenario, threads)
    null_p = _null_p_map(twin_records) if twin_records is not None else None
    summary = compute_metrics(
        records, scenario.dgp.beta_truth, null_p, scenario_name=scenario.name
    )
    return ScenarioResult(
        scenario=scenario,
        records=records,
        summary=summary,
        null_records=twin_records if null_records is None else None,
        null_summary=twin_summary,
    )


def _twin_signature(scenario: SimScenario) -> SimScenario:
    return replace(scenario, name="", null_twin=False)


def run_grid(
    scenarios: list[SimScenario], threads: int = 1
) -> list[ScenarioResult]:
    """Run a list of scenarios, reusing explicit null cells as twins.

    Null scenarios run first; an alternative whose derived twin matches an
    already-run null (same law, mechanism, surrogate, size, seeds, methods)
    reuses its records instead of re-running them.
    """
    names = [s.name for s in scenarios]
    if len(set(names)) != len(names):
        raise ConfigError("scenario names must be unique within a grid")
    results: list[ScenarioResult] = []
    ran_nulls: list[tuple[SimScenario, ScenarioResult]] = []
    ordered = sorted(scenarios, key=lambda s: 0 if s.is_null else 1)
    for sc in ordered:
        if sc.is_null:
            res = run_scenario(sc, threads=threads)
            ran_nulls.append((sc, res))
            results.append(res)
            continue
        reuse = None
        twin_sig = _twin_signature(derive_null_twin(sc))
        for cand, cand_res in ran_nulls:
            if _twin_signature(cand) == twin_sig:
                reuse = cand_res
                break
        if reuse is not None:
            res = run_scenario(sc, threads=threads, null_records=reuse.records)
            res.null_source = reuse.scenario.name
        else:
            res = run_scenario(sc, threads=threads)
        results.append(res)
    # Restore caller order.
    by_name = {r.scenario.name: r for r in results}
    return [by_name[s.name] for s in scenarios]


# ---------------------------------------------------------------------------
# Built-in scenario grids


def _linear_beta(alt: bool) -> tuple[float, ...]:
    b = 0.1 if alt else 0.0
    return (0.0, b, b, 0.5, 0.5)


def _interaction_mechanism(mech: str) -> bool:
    return mech in ("mnar3", "mnar4", "mnar5", "mnar6", "mnar7")


def _table_grid(family: str) -> list[SimScenario]:
    if family == "logistic":
        methods = ("full", "wcca", "cca", "naive", "ps_ppi_cca", "ps_ppi",
                   "mi_pmm", "mi_rf")
        n_null = {False: 50_000, True: 10_000}
        n_alt = {False: 50_000, True: 1_000}
    else:
        methods = ("full", "wcca", "cca", "naive", "ppi", "ppi_pp", "synsurr",
                   "ps_ppi", "mi_pmm", "mi_rf")
        n_null = {False: 10_000, True: 10_000}
        n_alt = {False: 10_000, True: 1_000}
    tag = {"linear-continuous": "s1", "linear-dummy": "s2", "logistic": "s3"}[family]
    scenarios = []
    for mech in MECHANISMS:
        inter = _interaction_mechanism(mech)
        for alt in (False, True):
            n = (n_alt if alt else n_null)[inter]
            if family == "logistic":
                surrogate = SurrogateSpec(kind="held-out-logistic", train_n=n)
            else:
                surrogate = SurrogateSpec(kind="deterministic-sin")
            scenarios.append(
                SimScenario(
                    name=f"{tag}_{mech}_{'alt' if alt else 'null'}",
                    dgp=DgpParams(beta_truth=_linear_beta(alt), family=family),
                    observation=ObservationModelSpec(mechanism=mech, setting=family),
                    surrogate=surrogate,
                    n=n,
                    methods=methods,
                )
            )
    return scenarios


def _quality_grid(family: str) -> list[SimScenario]:
    scenarios = []
    if family == "linear-continuous":
        methods = ("ppi", "ppi_pp", "ps_ppi", "synsurr")
        for lam in (0.2, 2.0):
            for sd in (0.2, 2.0):
                for mech in MECHANISMS:
                    scenarios.append(
                        SimScenario(
                            name=f"ql_lam{lam}_sd{sd}_{mech}",
                            dgp=DgpParams(
                                beta_truth=_linear_beta(True), family=family
                            ),
                            observation=ObservationModelSpec(
                                mechanism=mech, setting=family
                            ),
                            surrogate=SurrogateSpec(
                                kind="bias-noise", lambda_pred=lam, sigma_pred=sd
                            ),
                            n=10_000,
                            methods=methods,
                        )
                    )
    else:
        methods = ("ps_ppi", "ps_ppi_cca")
        for flip in (0.0, 0.05, 0.1, 0.2):
            for mech in MECHANISMS:
                scenarios.append(
                    SimScenario(
                        name=f"qf_flip{flip}_{mech}",
                        dgp=DgpParams(beta_truth=_linear_beta(True), family=family),
                        observation=ObservationModelSpec(
                            mechanism=mech, setting=family
                        ),
                        surrogate=SurrogateSpec(kind="label-flip", flip_p=flip),
                        n=10_000,
                        methods=methods,
                    )
                )
    return scenarios


def builtin_grids(name: str) -> list[SimScenario]:
    """Named scenario collections mirroring the package's reference tables.

    - ``table_s1`` / ``table_s2`` / ``table_s3``: the full method set over
      all 10 mechanisms, null and alternative cells, for the
      linear-continuous, linear-dummy, and logistic families.
    - ``quality_grid_linear`` / ``quality_grid_logistic``: surrogate-quality
      sweeps (bias rate x noise SD, or label-flip probabilities) crossed
      with all mechanisms.
    - ``thm1_suite`` / ``thm2_suite`` / ``thm3_suite``: null scenarios
      exercising the complete-case and prediction-based validity
      conditions; every scenario in a suite satisfies the corresponding
      conditions by construction.
    """
    if name == "table_s1":
        return _table_grid("linear-continuous")
    if name == "table_s2":
        return _table_grid("linear-dummy")
    if name == "table_s3":
        return _table_grid("logistic")
    if name == "quality_grid_linear":
        return _quality_grid("linear-continuous")
    if name == "quality_grid_logistic":
        return _quality_grid("logistic")
    if name == "thm1_suite":
        # Dummy confounders, null effects, and missingness free of X:
        # the complete-case fit stays valid even when the outcome drives
        # observation.
        return [
            SimScenario(
                name=f"thm1_{mech}_null",
                dgp=DgpParams(beta_truth=_linear_beta(False), family="linear-dummy"),
                observation=ObservationModelSpec(
                    mechanism=mech, setting="linear-dummy"
                ),
                surrogate=None,
                n=10_000,
                methods=("cca",),
            )
            for mech in ("mcar", "mar1", "mnar1")
        ]
    if name == "thm2_suite":
        # Logistic family: the X1 coefficient of the complete-case fit is
        # protected when missingness does not involve X1 (mnar1, mnar3);
        # mnar2 is the matched violation.
        return [
            SimScenario(
                name=f"thm2_{mech}_null",
                dgp=DgpParams(beta_truth=_linear_beta(False), family="logistic"),
                observation=ObservationModelSpec(mechanism=mech, setting="logistic"),
                surrogate=None,
                n=50_000,
                methods=("cca",),
            )
            for mech in ("mnar1", "mnar3", "mnar2")
        ]
    if name == "thm3_suite":
        # Outcome-driven missingness with dummy confounders: both
        # prediction-based variants stay valid for an additive-error
        # surrogate whose error ignores the covariates. Under the
        # deterministic nonlinear surrogate the unweighted variant picks up
        # a fixed bias, while the weighted variant survives because the
        # propensity absorbs the cell-mix shift between labeled and
        # unlabeled rows.
        both = []
        for kind, label in (
            (SurrogateSpec(kind="bias-noise", lambda_pred=2.0, sigma_pred=0.2),
             "biasnoise"),
            (SurrogateSpec(kind="deterministic-sin"), "detsin"),
        ):
            both.append(
                SimScenario(
                    name=f"thm3_mnar1_{label}_null",
                    dgp=DgpParams(
                        beta_truth=_linear_beta(False), family="linear-dummy"
                    ),
                    observation=ObservationModelSpec(
                        mechanism="mnar1", setting="linear-dummy"
                    ),
                    surrogate=kind,
                    n=40_000,
                    methods=("ps_ppi", "ps_ppi_cca"),
                )
            )
        return both
    raise ConfigError(f"unknown grid {name!r}; valid: {list(GRID_NAMES)}")


# ---------------------------------------------------------------------------
# Table emission


@dataclass
class TableRow:
    """One line of the paired null/alternative report table."""

    mechanism: str
    method: str
    coefficient: int
    bias0: float | None
    mse0: float | None
    type_i: float | None
    bias: float | None
    mse: float | None
    power: float | None
    failures: int


TABLE_COLUMNS = (
    "mechanism",
    "method",
    "coefficient",
    "bias0",
    "mse0",
    "type_i",
    "bias",
    "mse",
    "power",
    "failures",
)


def _round4(value: float | None) -> float | None:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return round(float(value), 4)


def build_table_rows(results: list[ScenarioResult]) -> list[TableRow]:
    """Pair null and alternative summaries into report rows.

    An alternative scenario contributes the bias/mse/power block and its
    twin (or reused null cell) the bias0/mse0/type-I block; a stand-alone
    null scenario fills only the null block. Failure counts sum both runs.
    """
    # Index explicit null results by name so reused sources can be found.
    null_by_name = {
        r.scenario.name: r for r in results if r.scenario.is_null
    }
    rows: list[TableRow] = []
    consumed_nulls: set[str] = set()
    for res in results:
        if res.scenario.is_null:
            continue
        mech = res.scenario.observation.mechanism
        null_summary = res.null_summary
        if null_summary is None and res.null_source in null_by_name:
            null_summary = null_by_name[res.null_source].summary
            consumed_nulls.add(res.null_source)
        for mrow in res.summary.rows:
            nrow = None
            if null_summary is not None:
                try:
                    nrow = null_summary.row(mrow.method, mrow.coefficient)
                except KeyError:
                    nrow = None
            rows.append(
                TableRow(
                    mechanism=mech,
                    method=mrow.method,
                    coefficient=mrow.coefficient,
                    bias0=_round4(nrow.abs_bias) if nrow else None,
                    mse0=_round4(nrow.mse) if nrow else None,
                    type_i=_round4(nrow.rejection_rate) if nrow else None,
                    bias=_round4(mrow.abs_bias),
                    mse=_round4(mrow.mse),
                    power=_round4(
                        mrow.adjusted_power
                        if mrow.adjusted_power is not None
                        else mrow.rejection_rate
                    ),
                    failures=mrow.failure_count
                    + (nrow.failure_count if nrow else 0),
                )
            )
    for res in results:
        if not res.scenario.is_null or res.scenario.name in consumed_nulls:
            continue
        mech = res.scenario.observation.mechanism
        for mrow in res.summary.rows:
            rows.append(
                TableRow(
                    mechanism=mech,
                    method=mrow.method,
                    coefficient=mrow.coefficient,
                    bias0=_round4(mrow.abs_bias),
                    mse0=_round4(mrow.mse),
                    type_i=_round4(mrow.rejection_rate),
                    bias=None,
                    mse=None,
                    power=None,
                    failures=mrow.failure_count,
                )
            )
    return rows


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def emit_table(rows: list[TableRow], fmt: str, path) -> Path:
    """Write the report table as CSV or a pipe-delimited text table.

    Numeric cells are fixed 4-decimal; empty cells mark blocks a scenario
    did not run. An empty row list still emits the header.
    """
    path = Path(path)
    if fmt not in ("csv", "md"):
        raise ConfigError(f"unknown table format {fmt!r}")
    cells = [
        {col: getattr(r, col) for col in TABLE_COLUMNS} for r in rows
    ]
    if fmt == "csv":
        lines = [",".join(TABLE_COLUMNS)]
        for c in cells:
            lines.append(",".join(_cell(c[col]) for col in TABLE_COLUMNS))
        path.write_text("\n".join(lines) + "\n")
        return path
    header = "| " + " | ".join(TABLE_COLUMNS) + " |"
    rule = "| " + " | ".join("---" for _ in TABLE_COLUMNS) + " |"
    lines = [header, rule]
    for c in cells:
        lines.append("| " + " | ".join(_cell(c[col]) for col in TABLE_COLUMNS) + " |")
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------------------
# Config serialization


_DGP_KEYS = {"family", "beta_truth", "sigma_z", "rho", "sigma", "sigma_tau",
             "lambda_nu"}
_OBS_KEYS = {"mechanism", "outcome_term", "omega"}
_SURR_KEYS = {"kind", "lambda_pred", "sigma_pred", "flip_p", "train_n"}
_MI_KEYS = {"k", "donor_k", "trees", "max_depth", "min_leaf"}
_TOP_KEYS = {"name", "n", "replicates", "base_seed", "methods", "null_twin",
             "test_coefficients", "pi_min", "dgp", "observation", "surrogate",
             "mi"}


def _check_keys(mapping: dict, allowed: set[str], where: str):
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {unknown}")


def scenario_from_config(config: dict) -> SimScenario:
    """Build a scenario from a plain configuration mapping.

    Unknown keys anywhere in the mapping are rejected so typos fail loudly.
    """
    if not isinstance(config, dict):
        raise ConfigError("scenario config must be a mapping")
    _check_keys(config, _TOP_KEYS, "scenario")
    for required in ("name", "n", "dgp", "observation", "methods"):
        if required not in config:
            raise ConfigError(f"scenario config is missing {required!r}")

    dgp_cfg = dict(config["dgp"])
    _check_keys(dgp_cfg, _DGP_KEYS, "dgp")
    if "beta_truth" not in dgp_cfg:
        raise ConfigError("dgp config is missing 'beta_truth'")
    dgp_cfg["beta_truth"] = tuple(dgp_cfg["beta_truth"])
    try:
        dgp = DgpParams(**dgp_cfg)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad dgp config: {err}") from err

    obs_cfg = dict(config["observation"])
    _check_keys(obs_cfg, _OBS_KEYS, "observation")
    try:
        observation = ObservationModelSpec(setting=dgp.family, **obs_cfg)
    except (TypeError, ValueError, KeyError) as err:
        raise ConfigError(f"bad observation config: {err}") from err

    surrogate = None
    if config.get("surrogate") is not None:
        surr_cfg = dict(config["surrogate"])
        _check_keys(surr_cfg, _SURR_KEYS, "surrogate")
        try:
            surrogate = SurrogateSpec(**surr_cfg)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad surrogate config: {err}") from err

    mi = MiParams()
    if config.get("mi") is not None:
        mi_cfg = dict(config["mi"])
        _check_keys(mi_cfg, _MI_KEYS, "mi")
        try:
            mi = MiParams(**mi_cfg)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"bad mi config: {err}") from err

    return SimScenario(
        name=str(config["name"]),
        dgp=dgp,
        observation=observation,
        surrogate=surrogate,
        n=int(config["n"]),
        methods=tuple(config["methods"]),
        replicates=int(config.get("replicates", DEFAULT_REPLICATES)),
        base_seed=int(config.get("base_seed", DEFAULT_BASE_SEED)),
        mi=mi,
        null_twin=bool(config.get("null_twin", True)),
        test_coefficients=tuple(config.get("test_coefficients", (1, 2))),
        pi_min=float(config.get("pi_min", 0.01)),
    )


def scenario_to_config(scenario: SimScenario) -> dict:
    """Inverse of :func:`scenario_from_config` (omega included explicitly)."""
    return {
        "name": scenario.name,
        "n": scenario.n,
        "replicates": scenario.replicates,
        "base_seed": scenario.base_seed,
        "methods": list(scenario.methods),
        "null_twin": scenario.null_twin,
        "test_coefficients": list(scenario.test_coefficients),
        "pi_min": scenario.pi_min,
        "dgp": {
            "family": scenario.dgp.family,
            "beta_truth": list(scenario.dgp.beta_truth),
            "sigma_z": scenario.dgp.sigma_z,
            "rho": scenario.dgp.rho,
            "sigma": scenario.dgp.sigma,
            "sigma_tau": scenario.dgp.sigma_tau,
            "lambda_nu": scenario.dgp.lambda_nu,
        },
        "observation": {
            "mechanism": scenario.observation.mechanism,
            "outcome_term": scenario.observation.outcome_term,
            "omega": dict(scenario.observation.omega),
        },
        "surrogate": None
        if scenario.surrogate is None
        else {
            k: v
            for k, v in dataclasses.asdict(scenario.surrogate).items()
            if v is not None
        },
        "mi": dataclasses.asdict(scenario.mi),
    }


# ---------------------------------------------------------------------------
# Directory-level pipeline (used by the command-line entry points)


def records_to_dataframe(
    results: list[ScenarioResult],
) -> pd.DataFrame:
    frames = []
    for res in results:
        chunks = [(res.scenario.name, res.records)]
        if res.null_records is not None:
            chunks.append((res.scenario.name + "__null", res.null_records))
        for name, records in chunks:
            frames.append(
                pd.DataFrame(
                    {
                        "scenario": name,
                        "replicate": [r.replicate for r in records],
                        "method": [r.method for r in records],
                        "coefficient": [r.coefficient for r in records],
                        "estimate": [r.estimate for r in records],
                        "se": [r.se for r in records],
                        "p_value": [r.p_value for r in records],
                        "error": [r.error for r in records],
                    }
                )
            )
    return pd.concat(frames, ignore_index=True)


def summaries_to_dataframe(results: list[ScenarioResult]) -> pd.DataFrame:
    rows = []
    for res in results:
        summaries = [res.summary]
        if res.null_summary is not None:
            summaries.append(res.null_summary)
        for summary in summaries:
            for r in summary.rows:
                rows.append(
                    {
                        "scenario": summary.scenario,
                        "method": r.method,
                        "coefficient": r.coefficient,
                        "truth": r.truth,
                        "abs_bias": r.abs_bias,
                        "mse": r.mse,
                        "rejection_rate": r.rejection_rate,
                        "mc_se_rejection": r.mc_se_rejection,
                        "adjusted_power": r.adjusted_power,
                        "p05_threshold": r.p05_threshold,
                        "mc_se_power": r.mc_se_power,
                        "replicate_count": r.replicate_count,
                        "failure_count": r.failure_count,
                    }
                )
    return pd.DataFrame(rows)


def run_to_dir(
    scenarios: list[SimScenario], out_dir, threads: int = 1
) -> list[ScenarioResult]:
    """Run scenarios and write records.csv, summary.csv, summary.md, and a
    manifest (scenarios.json) into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_grid(scenarios, threads=threads)
    records_to_dataframe(results).to_csv(
        out / "records.csv", index=False, float_format="%.12g"
    )
    summaries_to_dataframe(results).to_csv(
        out / "summary.csv", index=False, float_format="%.12g"
    )
    emit_table(build_table_rows(results), "md", out / "summary.md")
    manifest = {
        "scenarios": [scenario_to_config(s) for s in scenarios],
        "null_sources": {
            r.scenario.name: r.null_source
            for r in results
            if r.null_source is not None
        },
    }
    (out / "scenarios.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return results


def table_from_dir(in_dir, fmt: str, out_path=None) -> Path:
    """Recompute summaries from a results directory and emit the table."""
    in_dir = Path(in_dir)
    manifest = json.loads((in_dir / "scenarios.json").read_text())
    records = pd.read_csv(in_dir / "records.csv", keep_default_na=False)
    scenarios = [scenario_from_config(c) for c in manifest["scenarios"]]
    null_sources = manifest.get("null_sources", {})

    def rows_for(name: str) -> list[RecordRow]:
        part = records[records["scenario"] == name]
        return [
            RecordRow(
                replicate=int(r.replicate),
                method=str(r.method),
                coefficient=int(r.coefficient),
                estimate=float(r.estimate) if r.estimate != "" else math.nan,
                se=float(r.se) if r.se != "" else math.nan,
                p_value=float(r.p_value) if r.p_value != "" else math.nan,
                error=str(r.error),
            )
            for r in part.itertuples()
        ]

    results = []
    for sc in scenarios:
        own = rows_for(sc.name)
        twin_name = null_sources.get(sc.name, sc.name + "__null")
        twin_rows = rows_for(twin_name) if not sc.is_null else []
        null_p = _null_p_map(twin_rows) if twin_rows else None
        summary = compute_metrics(
            own, sc.dgp.beta_truth, null_p, scenario_name=sc.name
        )
        res = ScenarioResult(scenario=sc, records=own, summary=summary)
        if twin_rows and twin_name == sc.name + "__null":
            twin_sc = derive_null_twin(sc)
            res.null_records = twin_rows
            res.null_summary = compute_metrics(
                twin_rows, twin_sc.dgp.beta_truth, scenario_name=twin_name
            )
        elif twin_rows:
            res.null_source = twin_name
        results.append(res)
    out_path = Path(out_path) if out_path else in_dir / f"summary.{fmt}"
    return emit_table(build_table_rows(results), fmt, out_path)
