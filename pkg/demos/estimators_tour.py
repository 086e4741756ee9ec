###############################################################################
# Estimator tour: one partially observed dataset, every estimator
#
# Generates a single cohort with a continuous outcome, hides half of the
# outcomes under three different observation models, and fits the full
# method set on each masked copy. The printout shows which estimators keep
# their nominal behavior as the missingness mechanism gets nastier.
###############################################################################

import numpy as np

from misreg import (
    DgpParams,
    ObservationModelSpec,
    SurrogateSpec,
    apply_observation_model,
    estimate_cca,
    estimate_full,
    estimate_naive,
    estimate_ppi,
    estimate_psppi,
    estimate_synsurr,
    estimate_wcca,
    gen_dataset,
    make_surrogate,
    pb_mean,
)

rng = np.random.default_rng(20260815)
n = 20_000
truth = (0.0, 0.1, 0.1, 0.5, 0.5)

print("coefficient vector: (intercept, x1, x2, z1, z2) =", truth)
print("sample size:", n)
print("")


def fit_all(masked, pre_masking):
    """Fit every estimator that applies to a linear-family frame.

    The full-data reference needs the outcome before masking; everything
    else sees only the masked frame.
    """
    fits = {
        "full": estimate_full(pre_masking),
        "naive": estimate_naive(masked),
        "cca": estimate_cca(masked),
        "wcca": estimate_wcca(masked),
        "ppi": estimate_ppi(masked),
        "ps_ppi": estimate_psppi(masked, weighted=True),
        "synsurr": estimate_synsurr(masked),
    }
    return fits


def report(fits):
    print(f"{'method':10s} {'beta_x1':>9s} {'se':>8s} {'p':>9s} {'n_eff':>7s}")
    for name, fit in fits.items():
        print(
            f"{name:10s} {fit.beta[1]:9.4f} {fit.se[1]:8.4f} "
            f"{fit.p_values[1]:9.2e} {fit.n_effective:7d}"
        )
    print("")


######################################################
# Complete data, then three observation models

params = DgpParams(beta_truth=truth, family="linear-continuous")
complete = gen_dataset(params, n, rng)
complete = make_surrogate(
    complete, SurrogateSpec(kind="bias-noise", lambda_pred=1.0, sigma_pred=0.5),
    rng,
)

scenarios = {
    "MCAR (random 50%)": ObservationModelSpec(
        mechanism="mcar", setting="linear-continuous", omega={"prob": 0.5}
    ),
    "MAR (covariate-driven)": ObservationModelSpec(
        mechanism="mar2", setting="linear-continuous"
    ),
    "MNAR (outcome-driven)": ObservationModelSpec(
        mechanism="mnar1", setting="linear-continuous"
    ),
}

for label, spec in scenarios.items():
    masked = apply_observation_model(complete, spec, np.random.default_rng(99))
    print("====================================")
    print(label)
    print("====================================")
    print("observed fraction:", round(float(masked.r.mean()), 3))
    report(fit_all(masked, complete))

print("Reading the table: the surrogate here carries a constant positive")
print("bias plus noise, both independent of the covariates. The naive fit")
print("plugs predictions in for the missing outcomes, which works under")
print("random masking and drifts once selection is covariate-driven. The")
print("complete-case fits (cca, wcca) stay centered while selection depends")
print("only on covariates; the identity-tuned ppi needs the labeled and")
print("unlabeled prediction projections to match and breaks badly in the")
print("covariate-driven column. The tuned corrections (ps_ppi, synsurr)")
print("track the full-data fit with smaller error than cca wherever they")
print("are valid. In the outcome-driven column no method except the tuned")
print("corrections under their stated conditions is protected, and the")
print("complete-case estimate drifts upward.")
print("")

######################################################
# Mean estimation with predictions

print("====================================")
print("Outcome mean from labeled + unlabeled rows")
print("====================================")
# A small labeled sample plus predictions everywhere. The predictions are
# unbiased with moderate noise, the setting where the rectified mean earns
# its keep: the unlabeled predictions carry most of the information and the
# labeled contrast removes whatever error the predictor has on average.
demo_rng = np.random.default_rng(11)
mask = demo_rng.random(n) < 0.05
predictions = complete.y + 0.6 * demo_rng.standard_normal(n)
y_lab = complete.y[mask]

out = pb_mean(y_lab, predictions[mask], predictions[~mask], theta=1.0)
naive_se = y_lab.std(ddof=1) / np.sqrt(y_lab.size)
se = np.sqrt(out.var)
print(f"labeled-only mean     : {y_lab.mean():.4f} +/- {1.96 * naive_se:.4f}"
      f" (m = {y_lab.size})")
print(f"prediction-based mean : {out.mu:.4f} +/- {1.96 * se:.4f}")
print(f"true mean             : {complete.y.mean():.4f}")
print("")
print("The corrected interval is tighter than the labeled-only interval")
print("because the predictions transfer information from the unlabeled rows")
print("while the labeled rows keep the estimate honest.")
