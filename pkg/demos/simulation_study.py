###############################################################################
# Simulation study walkthrough
#
# Builds a two-cell Monte Carlo study from scratch: a benign random-masking
# cell and an outcome-driven-masking cell, each with a matched null twin for
# power calibration. Prints the per-method metrics and the paired report
# table the command-line runner emits.
###############################################################################

import tempfile
import time
from pathlib import Path

from misreg import DgpParams, ObservationModelSpec, SurrogateSpec
from misreg.harness import (
    SimScenario,
    build_table_rows,
    emit_table,
    run_grid,
)

methods = ("cca", "wcca", "ps_ppi")


def cell(name, mechanism):
    return SimScenario(
        name=name,
        dgp=DgpParams(
            beta_truth=(0.0, 0.1, 0.1, 0.5, 0.5), family="linear-dummy"
        ),
        observation=ObservationModelSpec(
            mechanism=mechanism, setting="linear-dummy"
        ),
        surrogate=SurrogateSpec(
            kind="bias-noise", lambda_pred=2.0, sigma_pred=0.2
        ),
        n=5_000,
        methods=methods,
        replicates=100,
        base_seed=314159,
    )


scenarios = [cell("random_masking", "mcar"), cell("outcome_masking", "mnar2")]

print("Running", len(scenarios), "cells x 100 replicates (each with a")
print("matched null twin on the same seed schedule)...")
start = time.perf_counter()
results = run_grid(scenarios, threads=1)
print(f"done in {time.perf_counter() - start:.1f} s")
print("")

######################################################
# Per-method metrics, one scenario at a time

for res in results:
    print("====================================")
    print(res.scenario.name)
    print("====================================")
    print(f"{'method':8s} {'coef':>4s} {'abs_bias':>9s} {'rmse':>8s} "
          f"{'type_i(null)':>13s} {'adj_power':>10s}")
    for method in methods:
        for coef in (1, 2):
            row = res.summary.row(method, coef)
            null_row = res.null_summary.row(method, coef)
            print(
                f"{method:8s} {coef:4d} {row.abs_bias:9.4f} "
                f"{row.mse ** 0.5:8.4f} {null_row.rejection_rate:13.3f} "
                f"{row.adjusted_power:10.3f}"
            )
    print("")

######################################################
# The paired report table (what the CLI writes as summary.md)

with tempfile.TemporaryDirectory() as tmp:
    path = emit_table(build_table_rows(results), "md", Path(tmp) / "t.md")
    print(path.read_text())

print("Reading the table: in the random-masking cell every method sits")
print("within Monte Carlo noise of its nominal size at 100 replicates, and")
print("the prediction-based correction roughly halves the complete-case")
print("RMSE. In the outcome-masking cell the selection probability depends")
print("on the first covariate and the outcome together, which violates")
print("every method's validity conditions for that coefficient: the")
print("complete-case test rejects the true null 82% of the time, the")
print("weighted fit corrects only the covariate part of the selection (its")
print("propensity model cannot see the outcome) and still rejects half the")
print("time, and the prediction-based correction shrinks the bias by a")
print("factor of five but keeps a residual size distortion. The second")
print("coefficient, which the selection rule does not touch directly, is")
print("only mildly affected for any method. Power columns are calibrated")
print("against each cell's own null twin, so they stay comparable across")
print("methods even when a method's size is off; the inflated-null methods")
print("pay for their distortion with zero calibrated power at the affected")
print("coefficient.")
