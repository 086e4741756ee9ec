"""Weighted least squares and logistic regression with sandwich covariance.

This module is the numerical engine for every estimator in the package.
Both fits solve weighted estimating equations

    sum_i w_i * g_i * (y_i - mu_i(beta)) = 0

with ``mu = G beta`` (linear) or ``mu = expit(G beta)`` (logistic), and both
report a robust sandwich covariance by default::

    cov = A^{-1} B A^{-1},   A = sum_i w_i * d mu_i * g_i g_i',
                             B = sum_i w_i^2 * (y_i - mu_i)^2 * g_i g_i'

Weights are treated as fixed constants; estimated-weight corrections are the
responsibility of callers that construct the weights.

Linear systems are solved through a QR factorization, and a reciprocal
condition estimate below ``RCOND_MIN`` raises :class:`SingularDesign` instead
of silently returning garbage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit, xlogy
from scipy.stats import norm, t as student_t

from .exceptions import (
    DegenerateVariance,
    NotConverged,
    PerfectSeparation,
    SingularDesign,
)

__all__ = [
    "FitResult",
    "WaldTest",
    "build_design",
    "fit_wls",
    "fit_logistic",
    "wald_test",
    "RCOND_MIN",
]

# Reciprocal-condition threshold below which a design is treated as singular.
RCOND_MIN = 1e-12

# IRLS controls for the logistic fit.
MAX_ITER = 100
SCORE_TOL = 1e-8
BETA_TOL = 1e-10
SEPARATION_BOUND = 30.0
MAX_HALVINGS = 20


@dataclass
class FitResult:
    """Outcome of a single regression fit.

    Attributes
    ----------
    beta : ndarray, shape (d,)
        Point estimates.
    cov : ndarray, shape (d, d)
        Symmetric positive semidefinite covariance estimate.
    se : ndarray, shape (d,)
        Standard errors, exactly ``sqrt(diag(cov))``.
    stat : ndarray, shape (d,)
        Wald statistics against zero.
    p_values : ndarray, shape (d,)
        Two-sided p-values for ``stat``; normal reference unless ``df``
        is set, in which case Student t.
    df : float or ndarray or None
        Reference degrees of freedom. ``None`` means the normal reference.
        Pooled multiple-imputation fits carry a per-coefficient vector.
    n_effective : int
        Number of rows that entered the fit.
    converged : bool
        Whether the solver reached its tolerance.
    method_tag : str
        Identifier of the producing method.
    extras : dict
        Free-form diagnostics (tuning values, warnings, iteration counts).
    """

    beta: np.ndarray
    cov: np.ndarray
    se: np.ndarray
    stat: np.ndarray
    p_values: np.ndarray
    df: Any = None
    n_effective: int = 0
    converged: bool = True
    method_tag: str = ""
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class WaldTest:
    """A single Wald test: statistic and two-sided p-value."""

    stat: float
    p_value: float


def build_design(x: np.ndarray | None, z: np.ndarray | None) -> np.ndarray:
    """Assemble the regression design ``[1 | x | z]``.

    Parameters
    ----------
    x : ndarray of shape (n, p) or (n,) or None
        Covariates of interest. ``None`` contributes no columns.
    z : ndarray of shape (n, q) or (n,) or None
        Additional adjustment covariates.

    Returns
    -------
    ndarray of shape (n, 1 + p + q)
        Design matrix with a leading intercept column.

    Raises
    ------
    ValueError
        If no block supplies rows, row counts disagree, or any entry is
        not finite.
    """
    blocks = []
    n = None
    for name, block in (("x", x), ("z", z)):
        if block is None:
            continue
        arr = np.asarray(block, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValueError(f"{name} must be 1- or 2-dimensional")
        if n is None:
            n = arr.shape[0]
        elif arr.shape[0] != n:
            raise ValueError(
                f"row mismatch: {name} has {arr.shape[0]} rows, expected {n}"
            )
        blocks.append(arr)
    if n is None:
        raise ValueError("at least one covariate block is required")
    design = np.column_stack([np.ones(n)] + blocks)
    if not np.all(np.isfinite(design)):
        raise ValueError("design contains non-finite entries")
    return design


def _qr_solve(gw: np.ndarray, yw: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Solve ``gw beta ~= yw`` by QR; return (beta, R factor, rcond estimate).

    The reciprocal condition is estimated from the ratio of the extreme
    ``|diag(R)|`` entries, the standard cheap proxy for triangular factors.
    """
    q, r = np.linalg.qr(gw)
    rdiag = np.abs(np.diag(r))
    rmax = rdiag.max() if rdiag.size else 0.0
    rcond = float(rdiag.min() / rmax) if rmax > 0 else 0.0
    if rcond < RCOND_MIN:
        raise SingularDesign(
            f"design is numerically singular (rcond~{rcond:.3e})", condition=rcond
        )
    beta = solve_triangular(r, q.T @ yw)
    return beta, r, rcond


def solve_psd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a x = b`` for a small symmetric system with a condition guard."""
    a = np.asarray(a, dtype=float)
    rcond = _rcond(a)
    if rcond < RCOND_MIN:
        raise SingularDesign(
            f"normal-equation matrix is numerically singular (rcond~{rcond:.3e})",
            condition=rcond,
        )
    return np.linalg.solve(a, b)


def _rcond(a: np.ndarray) -> float:
    """Reciprocal condition number in the 2-norm (exact; matrices are tiny)."""
    if not np.all(np.isfinite(a)):
        return 0.0
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0.0
    return float(s[-1] / s[0])


def inv_psd(a: np.ndarray) -> np.ndarray:
    """Invert a small symmetric matrix with the same condition guard."""
    return solve_psd(a, np.eye(a.shape[0]))


def _symmetrize(cov: np.ndarray) -> np.ndarray:
    return (cov + cov.T) / 2.0


def _p_from_stat(stat: np.ndarray, df: Any) -> np.ndarray:
    """Two-sided p-values; Student t when df is given, normal otherwise."""
    stat = np.asarray(stat, dtype=float)
    if df is None:
        return 2.0 * norm.sf(np.abs(stat))
    df_arr = np.broadcast_to(np.asarray(df, dtype=float), stat.shape)
    p = np.empty_like(stat)
    finite = np.isfinite(df_arr)
    p[finite] = 2.0 * student_t.sf(np.abs(stat[finite]), df_arr[finite])
    p[~finite] = 2.0 * norm.sf(np.abs(stat[~finite]))
    return p


def _finalize(
    beta: np.ndarray,
    cov: np.ndarray,
    *,
    df: Any = None,
    n_effective: int,
    converged: bool = True,
    method_tag: str,
    extras: dict | None = None,
) -> FitResult:
    """Assemble a FitResult from a point estimate and covariance."""
    cov = _symmetrize(np.asarray(cov, dtype=float))
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.where(se > 0, beta / se, np.inf * np.sign(beta))
        stat = np.where((se == 0) & (beta == 0), 0.0, stat)
    p_values = _p_from_stat(stat, df)
    return FitResult(
        beta=np.asarray(beta, dtype=float),
        cov=cov,
        se=se,
        stat=np.asarray(stat, dtype=float),
        p_values=p_values,
        df=df,
        n_effective=int(n_effective),
        converged=converged,
        method_tag=method_tag,
        extras=extras or {},
    )


def _check_weights(w: np.ndarray | None, n: int, d: int) -> np.ndarray:
    if w is None:
        w = np.ones(n)
    else:
        w = np.asarray(w, dtype=float)
        if w.shape != (n,):
            raise ValueError(f"weights must have shape ({n},)")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
    if int((w > 0).sum()) < d:
        raise ValueError(
            f"need at least {d} rows with positive weight, have {int((w > 0).sum())}"
        )
    return w


def fit_wls(
    g: np.ndarray,
    y: np.ndarray,
    w: np.ndarray | None = None,
    *,
    robust: bool = True,
    method_tag: str = "wls",
) -> FitResult:
    """Weighted least squares with a heteroskedasticity-robust covariance.

    Solves ``sum_i w_i g_i (y_i - g_i' beta) = 0``.

    Parameters
    ----------
    g : ndarray, shape (n, d)
        Design matrix (build with :func:`build_design`).
    y : ndarray, shape (n,)
        Outcome vector.
    w : ndarray, shape (n,), optional
        Nonnegative case weights, treated as fixed. Defaults to ones.
    robust : bool
        When True (default) report the sandwich covariance
        ``(G'WG)^{-1} (sum w_i^2 e_i^2 g_i g_i') (G'WG)^{-1}``.
        When False report the model-based ``sigma^2 (G'WG)^{-1}`` with
        ``sigma^2 = sum w_i e_i^2 / (n_pos - d)``.

    Returns
    -------
    FitResult

    Raises
    ------
    ValueError
        On shape problems, non-finite input, or fewer than ``d`` usable rows.
    SingularDesign
        When the weighted design is numerically rank deficient.
    """
    g = np.asarray(g, dtype=float)
    y = np.asarray(y, dtype=float)
    if g.ndim != 2:
        raise ValueError("design must be 2-dimensional")
    n, d = g.shape
    if y.shape != (n,):
        raise ValueError(f"outcome must have shape ({n},)")
    if n < d:
        raise ValueError(f"need at least d={d} rows, have {n}")
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(y))):
        raise ValueError("inputs contain non-finite entries")
    w = _check_weights(w, n, d)

    sw = np.sqrt(w)
    beta, r, _ = _qr_solve(g * sw[:, None], y * sw)
    resid = y - g @ beta

    # (G'WG)^{-1} from the triangular factor: R^{-1} R^{-T}.
    rinv = solve_triangular(r, np.eye(d))
    bread = rinv @ rinv.T

    if robust:
        meat = (g * (w**2 * resid**2)[:, None]).T @ g
        cov = bread @ meat @ bread
    else:
        n_pos = int((w > 0).sum())
        dof = max(n_pos - d, 1)
        sigma2 = float(np.sum(w * resid**2) / dof)
        cov = sigma2 * bread

    return _finalize(
        beta,
        cov,
        n_effective=int((w > 0).sum()),
        method_tag=method_tag,
    )


def fit_logistic(
    g: np.ndarray,
    y: np.ndarray,
    w: np.ndarray | None = None,
    *,
    robust: bool = True,
    max_iter: int = MAX_ITER,
    method_tag: str = "logistic",
) -> FitResult:
    """Weighted logistic regression by damped iteratively reweighted LS.

    Solves ``sum_i w_i g_i (y_i - expit(g_i' beta)) = 0`` starting from
    ``beta = 0``, halving the Newton step (up to 20 times) whenever the
    weighted deviance would increase. Convergence is declared when the
    score max-norm drops to 1e-8 or the relative coefficient change drops
    to 1e-10.

    Parameters
    ----------
    g : ndarray, shape (n, d)
        Design matrix.
    y : ndarray, shape (n,)
        Binary outcome coded 0/1.
    w : ndarray, shape (n,), optional
        Nonnegative case weights, treated as fixed.
    robust : bool
        Sandwich covariance ``A^{-1} B A^{-1}`` with
        ``A = sum w_i mu_i (1 - mu_i) g_i g_i'`` and
        ``B = sum w_i^2 (y_i - mu_i)^2 g_i g_i'`` (default), or the
        model-based ``A^{-1}``.

    Raises
    ------
    ValueError
        On shape problems or a response outside {0, 1}.
    PerfectSeparation
        When the positively weighted response is single-class, or the
        iterate escapes ``max|beta| > 30``.
    NotConverged
        When ``max_iter`` Newton steps do not reach tolerance.
    SingularDesign
        When the curvature matrix is numerically singular.
    """
    g = np.asarray(g, dtype=float)
    y = np.asarray(y, dtype=float)
    if g.ndim != 2:
        raise ValueError("design must be 2-dimensional")
    n, d = g.shape
    if y.shape != (n,):
        raise ValueError(f"outcome must have shape ({n},)")
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(y))):
        raise ValueError("inputs contain non-finite entries")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("logistic outcome must be coded 0/1")
    if n < d:
        raise ValueError(f"need at least d={d} rows, have {n}")
    w = _check_weights(w, n, d)

    active = w > 0
    if y[active].min() == y[active].max():
        raise PerfectSeparation("response takes a single value on weighted rows")

    def deviance(mu: np.ndarray) -> float:
        return float(-2.0 * np.sum(w * (xlogy(y, mu) + xlogy(1.0 - y, 1.0 - mu))))

    beta = np.zeros(d)
    mu = expit(g @ beta)
    dev = deviance(mu)
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        score = g.T @ (w * (y - mu))
        if np.max(np.abs(score)) <= SCORE_TOL:
            converged = True
            break
        curvature = (g * (w * mu * (1.0 - mu))[:, None]).T @ g
        step = solve_psd(curvature, score)

        # Step halving keeps the weighted deviance monotone.
        scale = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = beta + scale * step
            mu_new = expit(g @ candidate)
            dev_new = deviance(mu_new)
            if dev_new <= dev + 1e-12:
                break
            scale /= 2.0
        else:
            candidate = beta + scale * step
            mu_new = expit(g @ candidate)
            dev_new = deviance(mu_new)

        delta = np.max(np.abs(candidate - beta))
        denom = max(np.max(np.abs(candidate)), 1.0)
        beta, mu, dev = candidate, mu_new, dev_new

        if np.max(np.abs(beta)) > SEPARATION_BOUND:
            raise PerfectSeparation(
                f"coefficients diverging (max|beta|={np.max(np.abs(beta)):.1f}); "
                "data are likely separated"
            )
        if delta / denom <= BETA_TOL:
            converged = True
            break

    if not converged:
        score = g.T @ (w * (y - mu))
        if np.max(np.abs(score)) <= SCORE_TOL:
            converged = True
        else:
            raise NotConverged(
                f"IRLS did not converge in {max_iter} iterations "
                f"(score max-norm {np.max(np.abs(score)):.3e})",
                iterations=max_iter,
            )

    info = (g * (w * mu * (1.0 - mu))[:, None]).T @ g
    a_inv = inv_psd(info)
    if robust:
        meat = (g * (w**2 * (y - mu) ** 2)[:, None]).T @ g
        cov = a_inv @ meat @ a_inv
    else:
        cov = a_inv

    return _finalize(
        beta,
        cov,
        n_effective=int((w > 0).sum()),
        converged=converged,
        method_tag=method_tag,
        extras={"iterations": iterations},
    )


def wald_test(fit: FitResult, j: int, null_value: float = 0.0) -> WaldTest:
    """Two-sided Wald test of ``beta[j] == null_value``.

    Uses the Student t reference when the fit carries degrees of freedom
    (scalar or per-coefficient), the normal reference otherwise.

    Raises
    ------
    DegenerateVariance
        When ``se[j]`` is zero or not finite.
    IndexError
        When ``j`` is out of range.
    """
    d = fit.beta.shape[0]
    if not -d <= j < d:
        raise IndexError(f"coefficient index {j} out of range for d={d}")
    se = float(fit.se[j])
    if not np.isfinite(se) or se <= 0.0:
        raise DegenerateVariance(f"standard error for coefficient {j} is {se}")
    stat = (float(fit.beta[j]) - null_value) / se
    df = fit.df
    if df is not None and np.ndim(df) > 0:
        df = float(np.asarray(df, dtype=float)[j])
    if df is not None and not np.isfinite(df):
        df = None
    if df is None:
        p = float(2.0 * norm.sf(abs(stat)))
    else:
        p = float(2.0 * student_t.sf(abs(stat), df))
    return WaldTest(stat=stat, p_value=p)
