"""Estimators for regression with partially observed outcomes.

Every estimator consumes an :class:`~misreg.datagen.AnalysisFrame` and
returns a :class:`~misreg.core.FitResult` whose covariance comes from
influence functions, so downstream Wald tests are honest about each
method's sampling variability.

Families of estimators:

- complete-case (``cca``) and inverse-probability-weighted complete-case
  (``wcca``) fits of the outcome model;
- the naive fit that splices surrogate predictions into the missing slots;
- prediction-powered fits (``ppi``, ``ppi_pp``) that solve a debiased
  estimating equation combining labeled true outcomes with surrogate
  predictions on both labeled and unlabeled rows;
- estimator-level prediction-based corrections (``ps_ppi``,
  ``ps_ppi_cca``) that subtract a tuned contrast of two surrogate fits
  from the (weighted) complete-case fit;
- the joint surrogate regression (``synsurr``) that combines a surrogate
  projection over all rows with a labeled-row regression of the outcome on
  surrogate and design jointly;
- a prediction-based mean (:func:`pb_mean`) for the no-covariate case.

Weights produced by the propensity model are treated as fixed in every
covariance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import expit

from .core import (
    FitResult,
    RCOND_MIN,
    _finalize,
    _rcond,
    build_design,
    fit_logistic,
    fit_wls,
    inv_psd,
    solve_psd,
)
from .datagen import AnalysisFrame
from .exceptions import (
    EmptyCompleteCase,
    IllConditionedTheta,
    NotConverged,
    NotLinearFamily,
    SurrogateCollinear,
)

__all__ = [
    "METHOD_IDS",
    "PropensityModel",
    "PbTuning",
    "PbMeanResult",
    "fit_propensity",
    "pb_mean",
    "estimate_full",
    "estimate_cca",
    "estimate_wcca",
    "estimate_naive",
    "estimate_ppi",
    "estimate_psppi",
    "estimate_synsurr",
]

# Identifiers understood by the simulation harness and the variant scanner.
METHOD_IDS = (
    "full",
    "cca",
    "wcca",
    "naive",
    "ppi",
    "ppi_pp",
    "ps_ppi",
    "ps_ppi_cca",
    "synsurr",
    "mi_pmm",
    "mi_rf",
)

DEFAULT_PI_MIN = 0.01

# Newton controls for the prediction-powered estimating equation.
_PPI_MAX_ITER = 100
_PPI_TOL = 1e-8
_PPI_MAX_HALVINGS = 20

# Reciprocal-condition floor for the tuning-matrix normal equations.
_THETA_RCOND_MIN = 1e-10


@dataclass(frozen=True)
class PropensityModel:
    """Fitted observation propensities and the weights they imply.

    Attributes
    ----------
    coefficients : ndarray
        Logistic coefficients of R on the intercept, X, and Z.
    raw_pi : ndarray
        Untrimmed fitted probabilities, one per row.
    fitted_pi : ndarray
        Probabilities trimmed into ``[pi_min, 1]``.
    pi_min : float
        Trim floor.
    """

    coefficients: np.ndarray
    raw_pi: np.ndarray
    fitted_pi: np.ndarray
    pi_min: float

    def weights_observed(self) -> np.ndarray:
        """Inverse-probability weights ``1 / pi`` (meaningful on observed rows)."""
        return 1.0 / self.fitted_pi

    def weights_unobserved(self) -> np.ndarray:
        """Complement weights ``1 / (1 - pi)`` with the same trim floor."""
        comp = np.clip(1.0 - self.raw_pi, self.pi_min, 1.0)
        return 1.0 / comp


def fit_propensity(
    frame: AnalysisFrame, pi_min: float = DEFAULT_PI_MIN
) -> PropensityModel:
    """Fit a logistic model of the observation indicator on (1, X, Z).

    When every outcome is observed the logistic fit would see a single
    response class, so the model short-circuits to constant probability 1
    (weights identically one).
    """
    if not 0.0 < pi_min < 1.0:
        raise ValueError("pi_min must lie in (0, 1)")
    n = frame.n
    if frame.r.all():
        ones = np.ones(n)
        return PropensityModel(
            coefficients=np.array([]), raw_pi=ones, fitted_pi=ones, pi_min=pi_min
        )
    g = frame.design()
    fit = fit_logistic(g, frame.r.astype(float))
    raw = expit(g @ fit.beta)
    trimmed = np.clip(raw, pi_min, 1.0)
    return PropensityModel(
        coefficients=fit.beta, raw_pi=raw, fitted_pi=trimmed, pi_min=pi_min
    )


@dataclass(frozen=True)
class PbTuning:
    """Tuning of the prediction-based correction.

    ``mode`` selects the shape of the tuning multiplier:

    - ``identity``: the full correction (multiplier I);
    - ``scalar``: ``theta_scalar`` times I, or a variance-minimizing
      per-use scalar when ``theta_scalar == "auto"``;
    - ``matrix``: an explicit d-by-d multiplier in ``theta_matrix``, or the
      variance-minimizing matrix when ``theta_matrix == "auto"``.
    """

    mode: Literal["identity", "scalar", "matrix"] = "identity"
    theta_scalar: float | str | None = None
    theta_matrix: np.ndarray | str | None = None

    def __post_init__(self):
        if self.mode not in ("identity", "scalar", "matrix"):
            raise ValueError(f"unknown tuning mode {self.mode!r}")
        if self.mode == "identity":
            if self.theta_scalar is not None or self.theta_matrix is not None:
                raise ValueError("identity mode takes no theta parameters")
        elif self.mode == "scalar":
            if self.theta_matrix is not None:
                raise ValueError("scalar mode does not take theta_matrix")
            ts = self.theta_scalar
            if ts is None or (isinstance(ts, str) and ts != "auto"):
                raise ValueError("scalar mode needs theta_scalar (number or 'auto')")
        else:
            if self.theta_scalar is not None:
                raise ValueError("matrix mode does not take theta_scalar")
            tm = self.theta_matrix
            if tm is None or (isinstance(tm, str) and tm != "auto"):
                raise ValueError("matrix mode needs theta_matrix (array or 'auto')")

    def is_auto(self) -> bool:
        return (isinstance(self.theta_scalar, str) and self.theta_scalar == "auto") or (
            isinstance(self.theta_matrix, str) and self.theta_matrix == "auto"
        )

    def static_matrix(self, d: int) -> np.ndarray | None:
        """The fixed multiplier, or None when tuning is data-driven."""
        if self.mode == "identity":
            return np.eye(d)
        if self.mode == "scalar" and not self.is_auto():
            return float(self.theta_scalar) * np.eye(d)
        if self.mode == "matrix" and not self.is_auto():
            tm = np.asarray(self.theta_matrix, dtype=float)
            if tm.shape != (d, d):
                raise ValueError(f"theta_matrix must be {d}x{d}")
            return tm
        return None


@dataclass(frozen=True)
class PbMeanResult:
    """Prediction-based mean estimate.

    ``theta`` is the tuning value actually used (``M / (M + m)`` when the
    call requested automatic tuning).
    """

    mu: float
    var: float
    theta: float


def pb_mean(
    y_lab: np.ndarray,
    yhat_lab: np.ndarray,
    yhat_unlab: np.ndarray,
    theta: float | str = 1.0,
) -> PbMeanResult:
    """Debiased mean of a partially observed outcome.

    Combines the surrogate mean over unlabeled rows with a labeled-row
    correction::

        mu = mean(yhat_unlab) - theta * (mean(yhat_lab) - mean(y_lab))

    The variance estimate sums the two independent pieces, using unbiased
    sample variances::

        var = theta^2 Var(yhat_unlab) / M + Var(y_lab - theta yhat_lab) / m

    ``theta="auto"`` uses ``M / (M + m)``.
    """
    y_lab = np.asarray(y_lab, dtype=float)
    yhat_lab = np.asarray(yhat_lab, dtype=float)
    yhat_unlab = np.asarray(yhat_unlab, dtype=float)
    if y_lab.shape != yhat_lab.shape or y_lab.ndim != 1:
        raise ValueError("labeled outcome and prediction lengths must agree")
    m = y_lab.shape[0]
    big_m = yhat_unlab.shape[0]
    if m < 2 or big_m < 2:
        raise ValueError("need at least 2 labeled and 2 unlabeled rows")
    if isinstance(theta, str):
        if theta != "auto":
            raise ValueError(f"unknown theta {theta!r}")
        theta_val = big_m / (big_m + m)
    else:
        theta_val = float(theta)
    mu = float(
        yhat_unlab.mean() - theta_val * (yhat_lab.mean() - y_lab.mean())
    )
    var = float(
        theta_val**2 * yhat_unlab.var(ddof=1) / big_m
        + (y_lab - theta_val * yhat_lab).var(ddof=1) / m
    )
    return PbMeanResult(mu=mu, var=var, theta=theta_val)


def _family_is_linear(frame: AnalysisFrame) -> bool:
    return frame.family in ("linear-continuous", "linear-dummy")


def _fit_outcome_model(
    g: np.ndarray,
    y: np.ndarray,
    frame: AnalysisFrame,
    w: np.ndarray | None = None,
    method_tag: str = "",
) -> FitResult:
    if _family_is_linear(frame):
        return fit_wls(g, y, w, method_tag=method_tag)
    return fit_logistic(g, y, w, method_tag=method_tag)


def _require_yhat(frame: AnalysisFrame) -> np.ndarray:
    if frame.yhat is None:
        raise ValueError("this estimator needs a surrogate outcome column")
    return np.asarray(frame.yhat, dtype=float)


def _check_complete_cases(frame: AnalysisFrame, d: int, needed: int | None = None):
    needed = d + 1 if needed is None else needed
    m = frame.n_observed
    if m < needed:
        raise EmptyCompleteCase(
            f"only {m} observed outcomes; need at least {needed}"
        )


def estimate_full(frame: AnalysisFrame) -> FitResult:
    """Reference fit on a fully observed cohort.

    Requires every outcome present; the harness calls this on the
    pre-masking frame rather than letting any estimator read masked truth.
    """
    if not np.all(np.isfinite(frame.y)):
        raise ValueError("full-data fit requires a complete outcome vector")
    g = frame.design()
    fit = _fit_outcome_model(g, frame.y, frame, method_tag="full")
    return fit


def estimate_cca(frame: AnalysisFrame) -> FitResult:
    """Unweighted fit on the observed-outcome rows."""
    g = frame.design()
    _check_complete_cases(frame, g.shape[1])
    obs = frame.r
    return _fit_outcome_model(g[obs], frame.y[obs], frame, method_tag="cca")


def estimate_wcca(
    frame: AnalysisFrame,
    pi_min: float = DEFAULT_PI_MIN,
    propensity: PropensityModel | None = None,
) -> FitResult:
    """Inverse-probability-weighted fit on the observed-outcome rows.

    Weights are ``1 / pi`` from a logistic propensity of the observation
    indicator on (1, X, Z), trimmed at ``pi_min``, and treated as fixed in
    the covariance. With every row observed this reduces to the unweighted
    complete-case fit.
    """
    g = frame.design()
    _check_complete_cases(frame, g.shape[1])
    if propensity is None:
        propensity = fit_propensity(frame, pi_min)
    obs = frame.r
    w = propensity.weights_observed()[obs]
    fit = _fit_outcome_model(g[obs], frame.y[obs], frame, w=w, method_tag="wcca")
    return fit


def estimate_naive(frame: AnalysisFrame) -> FitResult:
    """Fit on all rows with surrogate predictions spliced into missing slots."""
    if frame.r.all():
        y_tilde = frame.y
    else:
        yhat = _require_yhat(frame)
        y_tilde = np.where(frame.r, frame.y, yhat)
    g = frame.design()
    return _fit_outcome_model(g, y_tilde, frame, method_tag="naive")


def _per_row_scores(
    g: np.ndarray, outcome: np.ndarray, beta: np.ndarray, linear: bool
) -> np.ndarray:
    """Rows of ``g_i * (outcome_i - mu_i(beta))``."""
    mu = g @ beta if linear else expit(g @ beta)
    return g * (outcome - mu)[:, None]


def _mean_score(
    g: np.ndarray, outcome: np.ndarray, beta: np.ndarray, linear: bool
) -> np.ndarray:
    return _per_row_scores(g, outcome, beta, linear).mean(axis=0)


def _mean_curvature(g: np.ndarray, beta: np.ndarray, linear: bool) -> np.ndarray:
    """Average of ``dmu_i * g_i g_i'`` (the negative score Jacobian)."""
    if linear:
        return g.T @ g / g.shape[0]
    mu = expit(g @ beta)
    return (g * (mu * (1.0 - mu))[:, None]).T @ g / g.shape[0]


def _solve_pp_equation(
    g_lab: np.ndarray,
    y_lab: np.ndarray,
    yhat_lab: np.ndarray,
    g_unl: np.ndarray,
    yhat_unl: np.ndarray,
    theta: np.ndarray,
    linear: bool,
) -> np.ndarray:
    """Root of the debiased estimating equation

    ``mean_lab psi(Y) - theta (mean_lab psi(Yhat) - mean_unl psi(Yhat)) = 0``.

    Closed form for the linear family; damped Newton otherwise.
    """
    if linear:
        m_lab = g_lab.T @ g_lab / g_lab.shape[0]
        m_unl = g_unl.T @ g_unl / g_unl.shape[0]
        a = m_lab - theta @ (m_lab - m_unl)
        b = (
            g_lab.T @ y_lab / g_lab.shape[0]
            - theta
            @ (g_lab.T @ yhat_lab / g_lab.shape[0] - g_unl.T @ yhat_unl / g_unl.shape[0])
        )
        return solve_psd(a, b)

    d = g_lab.shape[1]
    beta = np.zeros(d)

    def ee(b_vec: np.ndarray) -> np.ndarray:
        return (
            _mean_score(g_lab, y_lab, b_vec, False)
            - theta
            @ (
                _mean_score(g_lab, yhat_lab, b_vec, False)
                - _mean_score(g_unl, yhat_unl, b_vec, False)
            )
        )

    s = ee(beta)
    for _ in range(_PPI_MAX_ITER):
        if np.max(np.abs(s)) <= _PPI_TOL:
            return beta
        h_lab = _mean_curvature(g_lab, beta, False)
        h_unl = _mean_curvature(g_unl, beta, False)
        a = h_lab - theta @ (h_lab - h_unl)
        step = solve_psd(a, s)
        scale = 1.0
        norm_old = np.linalg.norm(s)
        for _ in range(_PPI_MAX_HALVINGS):
            candidate = beta + scale * step
            s_new = ee(candidate)
            if np.linalg.norm(s_new) <= norm_old * (1.0 + 1e-12):
                break
            scale /= 2.0
        else:
            candidate = beta + scale * step
            s_new = ee(candidate)
        beta, s = candidate, s_new
    if np.max(np.abs(s)) <= _PPI_TOL:
        return beta
    raise NotConverged(
        f"debiased estimating equation did not converge "
        f"(score max-norm {np.max(np.abs(s)):.3e})",
        iterations=_PPI_MAX_ITER,
    )


def _pp_covariance(
    g_lab: np.ndarray,
    y_lab: np.ndarray,
    yhat_lab: np.ndarray,
    g_unl: np.ndarray,
    yhat_unl: np.ndarray,
    theta: np.ndarray,
    beta: np.ndarray,
    linear: bool,
) -> np.ndarray:
    """Sandwich covariance for the debiased estimating equation."""
    m = g_lab.shape[0]
    big_m = g_unl.shape[0]
    psi_y = _per_row_scores(g_lab, y_lab, beta, linear)
    psi_h_lab = _per_row_scores(g_lab, yhat_lab, beta, linear)
    psi_h_unl = _per_row_scores(g_unl, yhat_unl, beta, linear)

    u = psi_y - psi_h_lab @ theta.T
    v = psi_h_unl @ theta.T
    u_c = u - u.mean(axis=0)
    v_c = v - v.mean(axis=0)
    var_s = (u_c.T @ u_c) / m**2 + (v_c.T @ v_c) / big_m**2

    h_lab = _mean_curvature(g_lab, beta, linear)
    h_unl = _mean_curvature(g_unl, beta, linear)
    a = h_lab - theta @ (h_lab - h_unl)
    a_inv = inv_psd(a)
    return a_inv @ var_s @ a_inv.T


def _auto_scalar_thetas(
    g_lab: np.ndarray,
    y_lab: np.ndarray,
    yhat_lab: np.ndarray,
    g_unl: np.ndarray,
    yhat_unl: np.ndarray,
    linear: bool,
) -> np.ndarray:
    """Per-coefficient variance-minimizing scalars, anchored at the
    complete-case solution.

    For each coefficient the correction's influence contribution has
    variance quadratic in theta; the minimizer is the covariance-to-variance
    ratio of the complete-case and correction influence functions.
    """
    m = g_lab.shape[0]
    big_m = g_unl.shape[0]
    if linear:
        anchor = fit_wls(g_lab, y_lab).beta
    else:
        anchor = fit_logistic(g_lab, y_lab).beta
    a0_inv = inv_psd(_mean_curvature(g_lab, anchor, linear))
    phi_y = _per_row_scores(g_lab, y_lab, anchor, linear) @ a0_inv.T
    phi_h = _per_row_scores(g_lab, yhat_lab, anchor, linear) @ a0_inv.T
    phi_u = _per_row_scores(g_unl, yhat_unl, anchor, linear) @ a0_inv.T

    phi_y_c = phi_y - phi_y.mean(axis=0)
    phi_h_c = phi_h - phi_h.mean(axis=0)
    phi_u_c = phi_u - phi_u.mean(axis=0)

    var_cc = (phi_y_c**2).sum(axis=0) / m**2
    var_delta = (phi_h_c**2).sum(axis=0) / m**2 + (phi_u_c**2).sum(axis=0) / big_m**2
    cov = (phi_y_c * phi_h_c).sum(axis=0) / m**2

    thetas = np.zeros(g_lab.shape[1])
    usable = var_delta > 1e-10 * np.maximum(var_cc, 1e-300)
    thetas[usable] = cov[usable] / var_delta[usable]
    return thetas


def estimate_ppi(
    frame: AnalysisFrame,
    tuning: PbTuning | None = None,
    target_coefficients: tuple[int, ...] | None = None,
) -> FitResult:
    """Prediction-powered fit: solve the debiased estimating equation.

    The labeled-row score with true outcomes is corrected by the tuned
    difference of surrogate scores between labeled and unlabeled rows.
    ``tuning=None`` means the identity multiplier. With
    ``theta_scalar="auto"`` a per-coefficient variance-minimizing scalar is
    chosen and the equation is re-solved once per coefficient; the returned
    estimate and standard error for each coefficient come from its own
    tuned fit (off-diagonal covariance entries are not defined for the
    composite and are left zero).
    """
    tuning = tuning or PbTuning()
    yhat = _require_yhat(frame)
    g = frame.design()
    d = g.shape[1]
    _check_complete_cases(frame, d)
    obs = frame.r
    if obs.all():
        raise ValueError("prediction-powered fit needs unlabeled rows")
    linear = _family_is_linear(frame)
    g_lab, y_lab, yhat_lab = g[obs], frame.y[obs], yhat[obs]
    g_unl, yhat_unl = g[~obs], yhat[~obs]

    def solve_with(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        beta = _solve_pp_equation(
            g_lab, y_lab, yhat_lab, g_unl, yhat_unl, theta, linear
        )
        cov = _pp_covariance(
            g_lab, y_lab, yhat_lab, g_unl, yhat_unl, theta, beta, linear
        )
        return beta, cov

    static = tuning.static_matrix(d)
    if static is not None:
        beta, cov = solve_with(static)
        tag = "ppi" if tuning.mode == "identity" else "ppi_tuned"
        return _finalize(
            beta,
            cov,
            n_effective=frame.n,
            method_tag=tag,
            extras={"tuning_mode": tuning.mode},
        )

    if tuning.mode != "scalar":
        raise ValueError("automatic tuning for this estimator is scalar-mode only")
    thetas = _auto_scalar_thetas(g_lab, y_lab, yhat_lab, g_unl, yhat_unl, linear)
    targets = tuple(range(d)) if target_coefficients is None else target_coefficients
    beta = np.full(d, np.nan)
    variances = np.full(d, np.nan)
    for j in targets:
        theta_j = thetas[j] * np.eye(d)
        beta_j, cov_j = solve_with(theta_j)
        beta[j] = beta_j[j]
        variances[j] = cov_j[j, j]
    cov = np.diag(np.where(np.isfinite(variances), variances, 0.0))
    result = _finalize(
        beta,
        cov,
        n_effective=frame.n,
        method_tag="ppi_pp",
        extras={"tuning_mode": "scalar-auto", "theta": thetas},
    )
    if target_coefficients is not None:
        # Untargeted coefficients have no estimate in the composite.
        result.p_values[np.isnan(beta)] = np.nan
    return result


def _if_rows(
    g: np.ndarray,
    outcome: np.ndarray,
    w: np.ndarray,
    beta: np.ndarray,
    linear: bool,
) -> np.ndarray:
    """Per-row influence contributions of a weighted estimating-equation fit.

    Rows are ``A^{-1} w_i g_i (outcome_i - mu_i)`` with
    ``A = sum_i w_i dmu_i g_i g_i'`` unnormalized, so the contributions sum
    to zero exactly and the fit's covariance is the sum of their outer
    products.
    """
    mu = g @ beta if linear else expit(g @ beta)
    if linear:
        a = (g * w[:, None]).T @ g
    else:
        a = (g * (w * mu * (1.0 - mu))[:, None]).T @ g
    scores = g * (w * (outcome - mu))[:, None]
    return scores @ inv_psd(a).T


def estimate_psppi(
    frame: AnalysisFrame,
    tuning: PbTuning | None = None,
    weighted: bool = True,
    pi_min: float = DEFAULT_PI_MIN,
    propensity: PropensityModel | None = None,
) -> FitResult:
    """Estimator-level prediction-based correction of the complete-case fit.

    Three fits are combined::

        beta_pb = beta_cc - Theta (gamma_lab - gamma_unl)

    where ``beta_cc`` fits the true outcome on labeled rows, ``gamma_lab``
    fits the surrogate on labeled rows, and ``gamma_unl`` fits the
    surrogate on unlabeled rows. With ``weighted=True`` each equation uses
    inclusion-probability weights from the propensity model (``1 / pi`` on
    labeled rows, ``1 / (1 - pi)`` on unlabeled rows, both trimmed);
    ``weighted=False`` uses unit weights throughout.

    ``tuning`` defaults to the variance-minimizing matrix estimated from
    the stacked influence functions. Near-singular tuning normal equations
    fall back to the trace-ratio scalar (zero when degenerate) and record a
    warning in ``extras`` instead of raising. The covariance is the outer
    product sum of the corrected influence functions, so a zero correction
    reproduces the base fit's covariance exactly.
    """
    if tuning is None:
        tuning = PbTuning(mode="matrix", theta_matrix="auto")
    g = frame.design()
    d = g.shape[1]
    _check_complete_cases(frame, d)
    obs = frame.r
    linear = _family_is_linear(frame)
    tag = "ps_ppi" if weighted else "ps_ppi_cca"
    extras: dict = {"tuning_mode": tuning.mode, "weighted": weighted}

    if weighted and not obs.all():
        if propensity is None:
            propensity = fit_propensity(frame, pi_min)
        w_lab = propensity.weights_observed()[obs]
        w_unl = propensity.weights_unobserved()[~obs]
    else:
        w_lab = np.ones(int(obs.sum()))
        w_unl = np.ones(int((~obs).sum()))

    g_lab, y_lab = g[obs], frame.y[obs]
    base = (
        fit_wls(g_lab, y_lab, w_lab, method_tag=tag)
        if linear
        else fit_logistic(g_lab, y_lab, w_lab, method_tag=tag)
    )

    static = tuning.static_matrix(d)
    if static is not None and not np.any(static):
        # Zero correction requested: the base (weighted) complete-case fit.
        base.method_tag = tag
        base.extras.update(extras)
        return base

    yhat = _require_yhat(frame)
    if int((~obs).sum()) < d + 1:
        raise ValueError("correction needs at least d+1 unlabeled rows")
    g_unl, yhat_unl = g[~obs], yhat[~obs]
    yhat_lab = yhat[obs]

    fit_gamma = fit_wls if linear else fit_logistic
    gamma_lab = fit_gamma(g_lab, yhat_lab, w_lab)
    gamma_unl = fit_gamma(g_unl, yhat_unl, w_unl)

    a_rows = _if_rows(g_lab, y_lab, w_lab, base.beta, linear)
    b_rows = _if_rows(g_lab, yhat_lab, w_lab, gamma_lab.beta, linear)
    c_rows = _if_rows(g_unl, yhat_unl, w_unl, gamma_unl.beta, linear)

    delta = np.zeros((frame.n, d))
    delta[obs] = b_rows
    delta[~obs] -= c_rows
    a_full = np.zeros((frame.n, d))
    a_full[obs] = a_rows

    if static is not None:
        theta = static
    else:
        cross = a_full.T @ delta
        gram = delta.T @ delta
        # The rcond guard alone misses an absolutely tiny gram (e.g. a
        # constant surrogate leaves only rounding noise in the correction
        # rows, with healthy relative conditioning); measure the correction
        # scale against the base influence rows.
        base_scale = float(np.einsum("ij,ij->", a_full, a_full))
        trace_gram = float(np.trace(gram))
        degenerate = trace_gram <= 1e-12 * max(base_scale, 1e-300)

        def trace_ratio() -> float:
            return float(np.trace(cross)) / trace_gram if not degenerate else 0.0

        try:
            if degenerate or _rcond(gram) < _THETA_RCOND_MIN:
                raise IllConditionedTheta(
                    "tuning normal equations are near-singular"
                )
            theta = np.linalg.solve(gram.T, cross.T).T
        except (IllConditionedTheta, np.linalg.LinAlgError) as err:
            scalar = trace_ratio()
            theta = scalar * np.eye(d)
            extras["warnings"] = [str(err) + "; fell back to trace-ratio scalar"]
            extras["theta_fallback_scalar"] = scalar
        if tuning.mode == "scalar":
            theta = trace_ratio() * np.eye(d)

    correction = theta @ (gamma_lab.beta - gamma_unl.beta)
    beta = base.beta - correction
    phi = a_full - delta @ theta.T
    cov = phi.T @ phi
    extras["theta"] = theta
    return _finalize(
        beta,
        cov,
        n_effective=frame.n,
        method_tag=tag,
        extras=extras,
    )


def estimate_synsurr(frame: AnalysisFrame) -> FitResult:
    """Joint surrogate regression (linear family only).

    Stage 1 projects the surrogate on the design over all rows; stage 2
    regresses the observed outcome on the surrogate and the design jointly
    over labeled rows. The reported slope recombines the two::

        beta = gamma + delta * alpha

    with ``delta`` the stage-2 surrogate coefficient. The covariance is a
    delta-method combination of both stages' stacked influence functions,
    so a perfect surrogate collapses to the full-data fit's covariance.
    """
    if not _family_is_linear(frame):
        raise NotLinearFamily("joint surrogate regression needs a linear family")
    yhat = _require_yhat(frame)
    g = frame.design()
    n, d = g.shape
    _check_complete_cases(frame, d, needed=d + 2)
    obs = frame.r

    # Surrogate must carry signal beyond the design span.
    g_lab = g[obs]
    yhat_lab = yhat[obs]
    proj = fit_wls(g_lab, yhat_lab)
    resid = yhat_lab - g_lab @ proj.beta
    total = float(np.sum((yhat_lab - yhat_lab.mean()) ** 2))
    if float(np.sum(resid**2)) <= 1e-10 * max(total, 1.0):
        raise SurrogateCollinear(
            "surrogate lies in the span of the design columns on labeled rows"
        )

    stage1 = fit_wls(g, yhat)
    w_design = np.column_stack([yhat_lab, g_lab])
    stage2 = fit_wls(w_design, frame.y[obs])
    delta_hat = stage2.beta[0]
    gamma_hat = stage2.beta[1:]
    beta = gamma_hat + delta_hat * stage1.beta

    if_alpha = _if_rows(g, yhat, np.ones(n), stage1.beta, linear=True)
    if_stage2_rows = _if_rows(
        w_design, frame.y[obs], np.ones(g_lab.shape[0]), stage2.beta, linear=True
    )
    if_stage2 = np.zeros((n, d + 1))
    if_stage2[obs] = if_stage2_rows

    stacked = np.hstack([if_stage2, if_alpha])
    jac = np.hstack(
        [stage1.beta[:, None], np.eye(d), delta_hat * np.eye(d)]
    )
    cov = jac @ (stacked.T @ stacked) @ jac.T
    return _finalize(
        beta,
        cov,
        n_effective=n,
        method_tag="synsurr",
        extras={"delta": float(delta_hat)},
    )
