"""Command-line entry points: simulation runs, table emission, variant scans.

The commands are thin wrappers over the library API; every artifact they
write (records.csv, summary.csv, summary.md, scan.csv, cohort CSVs) can be
reproduced programmatically from :mod:`misreg.harness` and
:mod:`misreg.gwas`.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .exceptions import ConfigError, MisregError
from .gwas import (
    SCAN_METHODS,
    read_geno_csv,
    read_pheno_csv,
    run_variant_scan,
    simulate_cohort,
    write_geno_csv,
    write_pheno_csv,
)
from .harness import (
    GRID_NAMES,
    builtin_grids,
    run_to_dir,
    scenario_from_config,
    table_from_dir,
)

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="misreg",
        description="Regression inference with partially observed outcomes: "
        "simulation studies and variant scans.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser(
        "simulate", help="run a scenario config or a named built-in grid"
    )
    sim.add_argument("--config", type=Path, help="scenario config (JSON)")
    sim.add_argument("--grid", choices=GRID_NAMES, help="named built-in grid")
    sim.add_argument("--out", type=Path, required=True, help="output directory")
    sim.add_argument("--threads", type=int, default=1, help="worker processes")

    tab = sub.add_parser("table", help="re-emit the report table from a run")
    tab.add_argument("--in", dest="in_dir", type=Path, required=True,
                     help="directory written by simulate")
    tab.add_argument("--format", choices=("csv", "md"), required=True)
    tab.add_argument("--out", type=Path, help="output path (default: in dir)")

    gwas = sub.add_parser("gwas", help="variant-scan commands")
    gsub = gwas.add_subparsers(dest="gwas_command", required=True)

    scan = gsub.add_parser("scan", help="scan genotype columns against a phenotype")
    scan.add_argument("--pheno", type=Path, required=True, help="phenotype CSV")
    scan.add_argument("--geno", type=Path, required=True, help="genotype CSV")
    scan.add_argument(
        "--methods",
        default=",".join(SCAN_METHODS),
        help="comma-separated subset of: " + ",".join(SCAN_METHODS),
    )
    scan.add_argument("--maf", type=float, default=0.01,
                      help="minor-allele-frequency floor")
    scan.add_argument("--out", type=Path, required=True, help="scan CSV path")
    scan.add_argument("--no-int", action="store_true",
                      help="skip the rank-based inverse normal transform")
    scan.add_argument("--refit-propensity", action="store_true",
                      help="refit the observation propensity per variant")

    gsim = gsub.add_parser("simulate", help="generate a synthetic cohort")
    gsim.add_argument("--n", type=int, required=True, help="cohort size")
    gsim.add_argument("--variants", type=int, required=True, help="variant count")
    gsim.add_argument("--causal", type=int, default=1,
                      help="number of causal variants")
    gsim.add_argument("--effect", type=float, default=0.15,
                      help="standardized per-variant effect")
    gsim.add_argument("--missing", type=float, default=0.5,
                      help="fraction of phenotypes masked (MCAR)")
    gsim.add_argument("--surrogate-corr", type=float, default=0.8,
                      help="target surrogate-phenotype correlation")
    gsim.add_argument("--seed", type=int, required=True)
    gsim.add_argument("--out-prefix", type=Path, required=True,
                      help="writes <prefix>.pheno.csv and <prefix>.geno.csv")
    gsim.add_argument("--unsafe-truth", action="store_true",
                      help="include the full outcome column in the phenotype CSV")
    return parser


def _cmd_simulate(args) -> int:
    if (args.config is None) == (args.grid is None):
        raise ConfigError("pass exactly one of --config or --grid")
    if args.grid is not None:
        scenarios = builtin_grids(args.grid)
    else:
        config = json.loads(args.config.read_text())
        scenarios = [scenario_from_config(config)]
    results = run_to_dir(scenarios, args.out, threads=max(1, args.threads))
    total = sum(len(r.records) for r in results)
    print(f"wrote {len(results)} scenario(s), {total} record rows -> {args.out}")
    return 0


def _cmd_table(args) -> int:
    out = table_from_dir(args.in_dir, args.format, args.out)
    print(f"wrote {out}")
    return 0


def _cmd_gwas_scan(args) -> int:
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    cohort = read_pheno_csv(args.pheno)
    geno = read_geno_csv(args.geno, pheno_ids=cohort.ids)
    result = run_variant_scan(
        cohort,
        geno,
        methods=methods,
        maf_threshold=args.maf,
        int_transform=not args.no_int,
        refit_propensity=args.refit_propensity,
    )
    result.to_csv(args.out)
    print(f"scanned {len(result.rows)} variant(s) -> {args.out}")
    return 0


def _cmd_gwas_simulate(args) -> int:
    cohort, geno, info = simulate_cohort(
        n=args.n,
        n_variants=args.variants,
        causal=args.causal,
        effect=args.effect,
        missingness=args.missing,
        surrogate_corr=args.surrogate_corr,
        seed=args.seed,
    )
    prefix = str(args.out_prefix)
    pheno_path = Path(prefix + ".pheno.csv")
    geno_path = Path(prefix + ".geno.csv")
    write_pheno_csv(cohort, pheno_path, unsafe_truth=args.unsafe_truth,
                    shadow=info["shadow_y"] if args.unsafe_truth else None)
    write_geno_csv(geno, geno_path)
    causal = ", ".join(sorted(info["causal"])) or "none"
    print(f"wrote {pheno_path} and {geno_path} (causal: {causal})")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "table":
            return _cmd_table(args)
        if args.command == "gwas" and args.gwas_command == "scan":
            return _cmd_gwas_scan(args)
        if args.command == "gwas" and args.gwas_command == "simulate":
            return _cmd_gwas_simulate(args)
        parser.error("unknown command")
    except MisregError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
