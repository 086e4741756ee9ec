###############################################################################
# Multiple imputation: filling in missing outcomes K times and pooling
#
# Masks outcomes under a covariate-driven observation model, imputes the
# missing values with predictive mean matching and with a regression
# forest, pools the per-copy fits, and compares both against the
# complete-case fit and the full-data reference. Later sections fold an
# auxiliary prediction into the imputation model, split each pooled
# variance into within- and between-imputation parts, and show how the
# pooled quantities settle down as the number of imputations K grows.
###############################################################################

import numpy as np

from misreg import (
    DgpParams,
    ObservationModelSpec,
    SurrogateSpec,
    apply_observation_model,
    estimate_cca,
    estimate_full,
    gen_dataset,
    make_surrogate,
    mi_estimate,
)

truth = (0.0, 0.1, 0.1, 0.5, 0.5)
n = 4_000
coef_names = ("intercept", "x1", "x2", "z1", "z2")

rng = np.random.default_rng(5551212)
complete = gen_dataset(DgpParams(beta_truth=truth, family="linear-continuous"), n, rng)
# A noisy external prediction of the outcome, attached before masking so
# every row has one. It gets its own generator to keep it independent of
# the masking draw below.
complete = make_surrogate(
    complete,
    SurrogateSpec(kind="bias-noise", lambda_pred=10.0, sigma_pred=0.3),
    np.random.default_rng(606),
)

# Observation depends on x1 and the confounder, never on the outcome, so
# an imputation model built from those columns matches the mechanism.
spec = ObservationModelSpec(
    mechanism="mar2",
    setting="linear-continuous",
    omega={"intercept": 0.0, "x1": 1.0, "z": 0.5},
)
masked = apply_observation_model(complete, spec, rng)
observed = int(masked.r.sum())

print("sample size:", n)
print(f"observed outcomes: {observed} ({observed / n:.1%})")
print("coefficient vector: (intercept, x1, x2, z1, z2) =", truth)
print("")


def row(name, fit):
    df = np.inf if fit.df is None else fit.df[1]
    df_txt = f"{df:8.1f}" if np.isfinite(df) else "     inf"
    print(
        f"{name:10s} {fit.beta[1]:9.4f} {fit.se[1]:8.4f} "
        f"{fit.p_values[1]:9.2e} {df_txt}"
    )


######################################################
# One dataset, four fits

fits = {
    "full": estimate_full(complete),
    "cca": estimate_cca(masked),
    "mi_pmm": mi_estimate(masked, imputer="pmm", k=25, rng=np.random.default_rng(11)),
    "mi_rf": mi_estimate(masked, imputer="rf", k=25, rng=np.random.default_rng(11)),
}

print("==========================================")
print("x1 coefficient, covariate-only imputation")
print("==========================================")
print(f"{'method':10s} {'beta_x1':>9s} {'se':>8s} {'p':>9s} {'df':>8s}")
for name, fit in fits.items():
    row(name, fit)
print("")

######################################################
# Folding the auxiliary prediction into the imputer

aug = {
    "mi_pmm": mi_estimate(
        masked, imputer="pmm", k=25,
        rng=np.random.default_rng(11), include_surrogate=True,
    ),
    "mi_rf": mi_estimate(
        masked, imputer="rf", k=25,
        rng=np.random.default_rng(11), include_surrogate=True,
    ),
}

print("=============================================")
print("same pools with the prediction as a feature")
print("=============================================")
print(f"{'method':10s} {'beta_x1':>9s} {'se':>8s} {'p':>9s} {'df':>8s}")
for name, fit in aug.items():
    row(name, fit)
print("")

######################################################
# Inside the pooled fit: per-coefficient variance split

pmm = fits["mi_pmm"]
print("==========================================================")
print("predictive mean matching, K = 25: variance decomposition")
print("==========================================================")
print(f"{'coef':10s} {'beta':>8s} {'se':>8s} {'df':>9s} {'fmi':>6s}")
for j, name in enumerate(coef_names):
    total = pmm.se[j] ** 2
    # Share of the total variance owed to missing data.
    fmi = (1.0 + 1.0 / 25.0) * pmm.between[j] / total
    print(
        f"{name:10s} {pmm.beta[j]:8.4f} {pmm.se[j]:8.4f} "
        f"{pmm.df[j]:9.1f} {fmi:6.3f}"
    )
print("")
print("fmi is the share of each coefficient's variance that imputation")
print("noise contributes; coefficients with more of it get fewer")
print("reference degrees of freedom.")
print("")

######################################################
# How many imputations are enough

print("===============================================")
print("sensitivity to K (predictive mean matching)")
print("===============================================")
print(f"{'K':>4s} {'beta_x1':>9s} {'se':>8s} {'df':>9s}")
for k in (2, 5, 10, 25, 50):
    fit = mi_estimate(masked, imputer="pmm", k=k, rng=np.random.default_rng(11))
    print(f"{k:4d} {fit.beta[1]:9.4f} {fit.se[1]:8.4f} {fit.df[1]:9.1f}")
print("")

print("Reading the output: the complete-case fit is unbiased here because")
print("observation never looks at the outcome, but it spends only the")
print("labeled rows. Imputing from the model covariates alone tightens the")
print("standard error a little (and for some coefficients not at all,")
print("since the pooled variance prices in the imputation noise). The real")
print("gain arrives when the imputation model knows something the outcome")
print("model does not: with the auxiliary prediction as a feature, the")
print("pooled standard error comes close to the full-data one. On the K")
print("axis, two imputations give an erratic between-imputation variance")
print("and near-useless reference degrees of freedom; both stabilize by K")
print("around 25.")
