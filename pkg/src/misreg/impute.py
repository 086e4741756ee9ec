"""Multiple imputation of missing outcomes: predictive mean matching, a
random-forest imputer, and pooling of repeated-imputation fits.

Both imputers fill only the missing outcome slots; observed entries are
copied bitwise into every completed dataset. Imputation models regress on
the covariates and confounders; the surrogate column can be added with
``include_surrogate=True`` but the default keeps it out so imputation and
prediction-based methods stay distinct.

Pooling follows the classic repeated-imputation rules: the pooled variance
adds the within-imputation average and the between-imputation spread
inflated by ``1 + 1/K``, and each coefficient gets Satterthwaite-style
degrees of freedom for its Wald test. A zero between-imputation spread
yields infinite degrees of freedom, i.e. the normal reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import FitResult, _finalize, build_design, fit_logistic, fit_wls
from .datagen import AnalysisFrame
from .exceptions import EmptyCompleteCase, SingularDesign

__all__ = [
    "ForestParams",
    "ImputationSet",
    "PooledResult",
    "pmm_impute",
    "rf_impute",
    "rubin_pool",
    "mi_estimate",
]

DEFAULT_K = 5
DEFAULT_DONOR_K = 5

_MAX_RESAMPLE_RETRIES = 10


@dataclass(frozen=True)
class ForestParams:
    """Shape of the regression forest used for imputation."""

    n_trees: int = 10
    max_depth: int = 10
    min_leaf: int = 5

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_leaf < 1:
            raise ValueError("forest parameters must be positive")


@dataclass
class ImputationSet:
    """K completed outcome vectors plus bookkeeping.

    ``y_completed`` has shape (K, n); observed entries are identical across
    copies.
    """

    y_completed: np.ndarray
    imputer: str
    k: int
    extras: dict = field(default_factory=dict)


@dataclass
class PooledResult(FitResult):
    """Repeated-imputation pooled fit.

    Adds the within-imputation average variance (``ubar``) and the
    between-imputation variance (``between``) to the base result; ``df``
    holds the per-coefficient reference degrees of freedom.
    """

    ubar: np.ndarray | None = None
    between: np.ndarray | None = None


def _imputation_features(
    frame: AnalysisFrame, include_surrogate: bool
) -> np.ndarray:
    blocks = [frame.x, frame.z]
    if include_surrogate:
        if frame.yhat is None:
            raise ValueError("include_surrogate=True but the frame has no surrogate")
        blocks.append(frame.yhat[:, None])
    return np.column_stack(blocks)


def pmm_impute(
    frame: AnalysisFrame,
    k: int = DEFAULT_K,
    donor_k: int = DEFAULT_DONOR_K,
    rng: np.random.Generator | None = None,
    include_surrogate: bool = False,
) -> ImputationSet:
    """Predictive mean matching with bootstrap parameter draws.

    Each imputation resamples the observed rows with replacement, fits the
    linear imputation model on the resample, predicts for every row under
    that fit, and fills each missing outcome with the observed outcome of
    one of the ``donor_k`` observed rows whose predicted means are nearest
    (uniformly at random among them; distance ties break by row order).

    Per-imputation draw order: the bootstrap indices, then one donor choice
    per missing row.
    """
    if rng is None:
        rng = np.random.default_rng()
    if k < 1:
        raise ValueError("k must be positive")
    if donor_k < 1:
        raise ValueError("donor_k must be positive")
    feats = _imputation_features(frame, include_surrogate)
    g = build_design(feats, None)
    d = g.shape[1]
    obs_idx = np.flatnonzero(frame.r)
    mis_idx = np.flatnonzero(~frame.r)
    m = obs_idx.size
    if m < donor_k + d:
        raise EmptyCompleteCase(
            f"predictive mean matching needs at least donor_k + d = "
            f"{donor_k + d} observed rows, have {m}"
        )
    y_obs = frame.y[obs_idx]

    completed = np.tile(np.where(frame.r, frame.y, np.nan), (k, 1))
    for copy in range(k):
        beta = None
        for _ in range(_MAX_RESAMPLE_RETRIES):
            boot = rng.integers(0, m, m)
            try:
                beta = fit_wls(g[obs_idx][boot], y_obs[boot]).beta
                break
            except SingularDesign:
                continue
        if beta is None:
            raise SingularDesign(
                "imputation design is singular in every bootstrap resample"
            )
        preds = g @ beta
        obs_preds = preds[obs_idx]
        mis_preds = preds[mis_idx]
        if mis_idx.size:
            donors = _nearest_donors(obs_preds, mis_preds, donor_k)
            pick = rng.integers(0, donor_k, mis_idx.size)
            completed[copy, mis_idx] = y_obs[donors[np.arange(mis_idx.size), pick]]
    return ImputationSet(
        y_completed=completed,
        imputer="pmm",
        k=k,
        extras={"donor_k": donor_k},
    )


def _nearest_donors(
    obs_preds: np.ndarray, mis_preds: np.ndarray, donor_k: int
) -> np.ndarray:
    """Indices (into the observed rows) of the donor_k nearest predicted
    means for each missing row, nearest first, ties broken by row order."""
    order = np.argsort(obs_preds, kind="stable")
    sorted_preds = obs_preds[order]
    m = sorted_preds.size
    window = min(2 * donor_k, m)
    pos = np.searchsorted(sorted_preds, mis_preds)
    # A window of 2*donor_k consecutive positions anchored at the insertion
    # point always contains the donor_k nearest values in a sorted array;
    # anchoring (rather than clipping per entry) keeps candidates distinct.
    start = np.clip(pos - donor_k, 0, m - window)
    cand = start[:, None] + np.arange(window)[None, :]
    dist = np.abs(sorted_preds[cand] - mis_preds[:, None])
    # Deterministic selection: sort by (distance, candidate position).
    sort_idx = np.lexsort((cand, dist), axis=1)[:, :donor_k]
    chosen = np.take_along_axis(cand, sort_idx, axis=1)
    return order[chosen]


class _TreeNode:
    __slots__ = ("feature", "threshold", "left", "right", "values")

    def __init__(self, values=None, feature=None, threshold=None, left=None, right=None):
        self.values = values
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right


def _grow_tree(
    feats: np.ndarray, targets: np.ndarray, params: ForestParams
) -> _TreeNode:
    """Variance-reduction regression tree on (feats, targets)."""

    def build(idx: np.ndarray, depth: int) -> _TreeNode:
        t = targets[idx]
        if depth >= params.max_depth or idx.size < 2 * params.min_leaf:
            return _TreeNode(values=t)
        sse_parent = float(np.sum((t - t.mean()) ** 2))
        best_gain = 1e-12
        best = None
        for f in range(feats.shape[1]):
            vals = feats[idx, f]
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            st = t[order]
            s1 = np.cumsum(st)
            s2 = np.cumsum(st**2)
            total1, total2 = s1[-1], s2[-1]
            counts = np.arange(1, idx.size + 1, dtype=float)
            # Split after position i (left gets i+1 rows); valid where the
            # value strictly increases and both sides respect min_leaf.
            i = np.arange(idx.size - 1)
            valid = (
                (sv[:-1] < sv[1:])
                & (counts[:-1] >= params.min_leaf)
                & (idx.size - counts[:-1] >= params.min_leaf)
            )
            if not np.any(valid):
                continue
            left_sse = s2[:-1] - s1[:-1] ** 2 / counts[:-1]
            right_n = idx.size - counts[:-1]
            right_sse = (total2 - s2[:-1]) - (total1 - s1[:-1]) ** 2 / right_n
            gain = np.where(valid, sse_parent - left_sse - right_sse, -np.inf)
            j = int(np.argmax(gain))
            if gain[j] > best_gain:
                best_gain = float(gain[j])
                best = (f, float((sv[j] + sv[j + 1]) / 2.0))
        if best is None:
            return _TreeNode(values=t)
        f, threshold = best
        mask = feats[idx, f] <= threshold
        return _TreeNode(
            feature=f,
            threshold=threshold,
            left=build(idx[mask], depth + 1),
            right=build(idx[~mask], depth + 1),
        )

    return build(np.arange(feats.shape[0]), 0)


def _leaf_values(node: _TreeNode, row: np.ndarray) -> np.ndarray:
    while node.values is None:
        node = node.left if row[node.feature] <= node.threshold else node.right
    return node.values


def rf_impute(
    frame: AnalysisFrame,
    k: int = DEFAULT_K,
    forest: ForestParams | None = None,
    rng: np.random.Generator | None = None,
    include_surrogate: bool = False,
) -> ImputationSet:
    """Random-forest imputation by drawing observed outcomes from leaves.

    Each imputation grows ``n_trees`` regression trees on bootstrap
    resamples of the observed rows (variance-reduction splits over every
    feature, depth and leaf-size limits from ``forest``). A missing row is
    imputed by picking a tree uniformly at random, walking to its leaf,
    and drawing uniformly among that leaf's training outcomes. A constant
    observed outcome therefore imputes that constant.

    Per-imputation draw order: one bootstrap per tree in tree order, then
    the per-row tree choices, then the per-row donor choices.
    """
    if rng is None:
        rng = np.random.default_rng()
    if k < 1:
        raise ValueError("k must be positive")
    forest = forest or ForestParams()
    feats = _imputation_features(frame, include_surrogate)
    obs_idx = np.flatnonzero(frame.r)
    mis_idx = np.flatnonzero(~frame.r)
    m = obs_idx.size
    if m < 2 * forest.min_leaf:
        raise EmptyCompleteCase(
            f"random-forest imputation needs at least {2 * forest.min_leaf} "
            f"observed rows, have {m}"
        )
    feats_obs = feats[obs_idx]
    y_obs = frame.y[obs_idx]

    completed = np.tile(np.where(frame.r, frame.y, np.nan), (k, 1))
    for copy in range(k):
        trees = []
        for _ in range(forest.n_trees):
            boot = rng.integers(0, m, m)
            trees.append(_grow_tree(feats_obs[boot], y_obs[boot], forest))
        if mis_idx.size:
            tree_choice = rng.integers(0, forest.n_trees, mis_idx.size)
            u = rng.random(mis_idx.size)
            for row_pos, row_idx in enumerate(mis_idx):
                leaf = _leaf_values(trees[tree_choice[row_pos]], feats[row_idx])
                completed[copy, row_idx] = leaf[int(u[row_pos] * leaf.size)]
    return ImputationSet(
        y_completed=completed,
        imputer="rf",
        k=k,
        extras={"forest": forest},
    )


def rubin_pool(estimates: np.ndarray, variances: np.ndarray) -> PooledResult:
    """Pool K per-imputation estimates and variances.

    Parameters
    ----------
    estimates : ndarray, shape (K, d)
        Per-imputation coefficient estimates.
    variances : ndarray, shape (K, d)
        Per-imputation squared standard errors.

    Returns
    -------
    PooledResult
        Pooled coefficients; total variance
        ``ubar + (1 + 1/K) * between`` on the covariance diagonal;
        per-coefficient degrees of freedom
        ``(K - 1) (1 + ubar / ((1 + 1/K) between))^2``, infinite where the
        between-imputation variance vanishes.
    """
    estimates = np.asarray(estimates, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if estimates.ndim != 2 or estimates.shape != variances.shape:
        raise ValueError("estimates and variances must both be (K, d)")
    k = estimates.shape[0]
    if k < 2:
        raise ValueError("pooling needs at least 2 imputations")
    pooled = estimates.mean(axis=0)
    between = estimates.var(axis=0, ddof=1)
    ubar = variances.mean(axis=0)
    inflation = 1.0 + 1.0 / k
    total = ubar + inflation * between
    with np.errstate(divide="ignore", invalid="ignore"):
        df = np.where(
            between > 0,
            (k - 1) * (1.0 + ubar / (inflation * between)) ** 2,
            np.inf,
        )
    base = _finalize(
        pooled,
        np.diag(total),
        df=df,
        n_effective=0,
        method_tag="mi",
    )
    return PooledResult(
        beta=base.beta,
        cov=base.cov,
        se=base.se,
        stat=base.stat,
        p_values=base.p_values,
        df=df,
        n_effective=base.n_effective,
        converged=True,
        method_tag="mi",
        extras=base.extras,
        ubar=ubar,
        between=between,
    )


def mi_estimate(
    frame: AnalysisFrame,
    imputer: str = "pmm",
    k: int = DEFAULT_K,
    donor_k: int = DEFAULT_DONOR_K,
    forest: ForestParams | None = None,
    rng: np.random.Generator | None = None,
    include_surrogate: bool = False,
) -> PooledResult:
    """Impute K times, fit the outcome model on each completed dataset,
    and pool.

    The per-copy fits use all rows with unit weights and the robust
    covariance; pooling consumes the per-coefficient variances.
    """
    if imputer == "pmm":
        imp = pmm_impute(
            frame, k=k, donor_k=donor_k, rng=rng, include_surrogate=include_surrogate
        )
        tag = "mi_pmm"
    elif imputer == "rf":
        imp = rf_impute(
            frame, k=k, forest=forest, rng=rng, include_surrogate=include_surrogate
        )
        tag = "mi_rf"
    else:
        raise ValueError(f"unknown imputer {imputer!r}")

    g = frame.design()
    linear = frame.family in ("linear-continuous", "linear-dummy")
    betas = []
    variances = []
    for y_c in imp.y_completed:
        fit = fit_wls(g, y_c) if linear else fit_logistic(g, y_c)
        betas.append(fit.beta)
        variances.append(np.diag(fit.cov))
    pooled = rubin_pool(np.asarray(betas), np.asarray(variances))
    pooled.method_tag = tag
    pooled.n_effective = frame.n
    pooled.extras.update({"k": k, "imputer": imputer})
    return pooled
