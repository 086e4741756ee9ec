###############################################################################
# Variant scan: association testing when half the phenotypes are missing
#
# Simulates a cohort with two causal variants and a phenotype that is only
# observed for half the samples, writes the cohort to CSV and reads it
# back (the on-disk format round-trips), then scans every variant with the
# four scan methods. The printout ranks the top hits, checks calibration
# on the null variants, and summarizes the precision gain of the
# surrogate-assisted methods.
###############################################################################

import tempfile
from pathlib import Path

import numpy as np

from misreg import (
    read_geno_csv,
    read_pheno_csv,
    run_variant_scan,
    simulate_cohort,
    write_geno_csv,
    write_pheno_csv,
)

n, n_variants = 3_000, 400
cohort, geno, info = simulate_cohort(
    n,
    n_variants,
    causal={0: 0.25, 1: 0.10},
    missingness=0.5,
    surrogate_corr=0.8,
    seed=1234,
)
print(f"cohort: {n} samples, {n_variants} variants, "
      f"{int(cohort.r.sum())} phenotyped")
print("planted effects:", info["causal"])
print("")

######################################################
# Disk round trip

workdir = Path(tempfile.mkdtemp(prefix="variant_scan_"))
pheno_path = write_pheno_csv(cohort, workdir / "cohort.pheno.csv")
geno_path = write_geno_csv(geno, workdir / "cohort.geno.csv")
cohort = read_pheno_csv(pheno_path)
geno = read_geno_csv(geno_path, pheno_ids=cohort.ids)
print("wrote and re-read", pheno_path.name, "and", geno_path.name)
print("")

######################################################
# The scan

result = run_variant_scan(cohort, geno)
frame = result.to_dataframe()
bonferroni = 0.05 / len(frame)

print("=================================================")
print(f"top hits by synsurr p-value (n_scanned = {len(frame)})")
print("=================================================")
top = frame.nsmallest(5, "p_synsurr")
print(f"{'variant':8s} {'maf':>6s} {'p_cca':>10s} {'p_wcca':>10s} "
      f"{'p_ps_ppi':>10s} {'p_synsurr':>10s}")
for _, r in top.iterrows():
    print(f"{r['variant']:8s} {r['maf']:6.3f} {r['p_cca']:10.2e} "
          f"{r['p_wcca']:10.2e} {r['p_ps_ppi']:10.2e} {r['p_synsurr']:10.2e}")
print("")
print(f"study-wide threshold (0.05 Bonferroni): {bonferroni:.1e}")
for m in result.methods:
    hits = frame.loc[frame[f"p_{m}"] < bonferroni, "variant"].tolist()
    print(f"  {m:8s} passes: {hits}")
print("")

######################################################
# Null calibration and precision

is_null = ~frame["variant"].isin(info["causal"])
print("==========================================")
print(f"null variants ({int(is_null.sum())} of {len(frame)})")
print("==========================================")
print(f"{'method':9s} {'frac p<0.05':>12s} {'min p':>10s}")
for m in result.methods:
    p = frame.loc[is_null, f"p_{m}"]
    print(f"{m:9s} {float((p < 0.05).mean()):12.3f} {p.min():10.2e}")
print("")

print("precision of the surrogate-assisted methods (se ratios, mean over")
print("all variants; below 1 means tighter than the paired baseline):")
for col in ("se_ratio_synsurr_vs_cca", "se_ratio_ps_ppi_vs_wcca"):
    print(f"  {col:26s} {frame[col].mean():.3f}")
print("")

errors = sum(bool(r.errors) for r in result.rows)
print(f"per-variant method failures: {errors}")
print("")

print("Reading the output: with half the phenotypes missing, every method")
print("finds the strong variant, but the complete-case and weighted tests")
print("miss the weak one at the study-wide threshold. The surrogate-")
print("assisted methods shrink each standard error by roughly a sixth,")
print("and that is enough to pull the weak variant well past the line.")
print("Null variants reject at about the nominal 5% rate for all four")
print("methods, so the extra power is not bought with miscalibration.")
