"""Command-line entry point.

Subcommands: run (scan), simulate (synthetic cohort), validate (engine vs
OLS reference concordance), bench (timed scan with machine-parseable
metrics), convert (genotype format conversion). Flags mirror conventional
GWAS tooling (--bfile/--bed/--bim/--fam, --pheno, --covar, --keep,
--remove, --out). All diagnostics go to standard error; result data goes
only to the declared output paths. Exit code 0 iff the workflow fully
succeeded.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import output, phenotypes
from .engine import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_FULL_BYTE_BUDGET,
    DEFAULT_P_THRESHOLD,
    DEFAULT_TOP_K,
    DfMode,
    OutputMode,
    Precision,
    ScanConfig,
    run_scan,
)
from .errors import ConfigError, PanelGwasError
from .genotypes.types import (
    DenseOrientation,
    GenotypeFormat,
    SourceSpec,
    open_genotype_source,
)
from .oracle import concordance_report, ols_single
from .phenotypes import MissingPolicy
from .simulate import SimSpec, simulate_cohort, write_bed_trio

THREADS_ENV = "PANELGWAS_THREADS"

logger = logging.getLogger(__name__)


@dataclass
class Invocation:
    """A parsed command line: the subcommand plus its validated namespace."""

    subcommand: str
    args: argparse.Namespace


def _add_genotype_flags(sp: argparse.ArgumentParser) -> None:
    grp = sp.add_argument_group("genotype input (choose one format)")
    grp.add_argument("--bfile", type=Path,
                     help="PLINK prefix, expands to PREFIX.bed/.bim/.fam")
    grp.add_argument("--bed", type=Path, help="PLINK .bed path")
    grp.add_argument("--bim", type=Path, help="PLINK .bim path")
    grp.add_argument("--fam", type=Path, help="PLINK .fam path")
    grp.add_argument("--bgen", type=Path, help="BGEN v1.2 path")
    grp.add_argument("--dense", type=Path, help="dense NPY dosage matrix")
    grp.add_argument("--sample-ids", type=Path,
                     help="newline-delimited sample IDs (required with "
                          "--dense; overrides embedded IDs with --bgen)")
    grp.add_argument("--dense-orientation",
                     choices=[o.value for o in DenseOrientation],
                     default=DenseOrientation.MARKERS_BY_SAMPLES.value,
                     help="axis order of the dense matrix")


def _source_from_args(parser, args) -> SourceSpec:
    plink = bool(args.bfile) or bool(args.bed or args.bim or args.fam)
    chosen = [name for name, used in (
        ("PLINK", plink), ("--bgen", bool(args.bgen)),
        ("--dense", bool(args.dense)),
    ) if used]
    if len(chosen) != 1:
        parser.error(
            "exactly one genotype input is required "
            f"(got: {', '.join(chosen) or 'none'})"
        )
    if plink:
        if args.bfile and (args.bed or args.bim or args.fam):
            parser.error("--bfile conflicts with --bed/--bim/--fam")
        if args.bfile:
            bed = args.bfile.with_suffix(".bed")
            bim = args.bfile.with_suffix(".bim")
            fam = args.bfile.with_suffix(".fam")
        else:
            if not (args.bed and args.bim and args.fam):
                parser.error("--bed, --bim and --fam must all be given")
            bed, bim, fam = args.bed, args.bim, args.fam
        return SourceSpec(GenotypeFormat.PLINK_BED, bed_path=bed,
                          bim_path=bim, fam_path=fam)
    if args.bgen:
        return SourceSpec(GenotypeFormat.BGEN, bgen_path=args.bgen,
                          sample_id_path=args.sample_ids)
    if not args.sample_ids:
        parser.error("--dense requires --sample-ids")
    return SourceSpec(
        GenotypeFormat.DENSE, dense_path=args.dense,
        sample_id_path=args.sample_ids,
        dense_orientation=DenseOrientation(args.dense_orientation),
    )


def _add_table_flags(sp: argparse.ArgumentParser, pheno_required: bool) -> None:
    grp = sp.add_argument_group("phenotypes, covariates and sample lists")
    grp.add_argument("--pheno", type=Path, required=pheno_required,
                     help="phenotype table (header row, ID column)")
    grp.add_argument("--covar", type=Path, help="covariate table")
    grp.add_argument("--keep", type=Path,
                     help="keep only these sample IDs (newline-delimited)")
    grp.add_argument("--remove", type=Path,
                     help="remove these sample IDs (wins over --keep)")
    grp.add_argument("--id-col", default="IID",
                     help="sample-ID column name in tables")
    grp.add_argument("--sep", choices=["tab", "comma"], default="tab",
                     help="table delimiter")
    grp.add_argument("--missing-policy",
                     choices=[p.value for p in MissingPolicy],
                     default=MissingPolicy.MEAN_IMPUTE.value,
                     help="how to handle missing phenotype cells")


def _add_engine_flags(sp: argparse.ArgumentParser,
                      default_precision: str = "f32") -> None:
    grp = sp.add_argument_group("engine")
    grp.add_argument("--batch-size", type=int, default=DEFAULT_BATCH_SIZE,
                     help="markers per batch")
    grp.add_argument("--precision", choices=[p.value for p in Precision],
                     default=default_precision,
                     help="f32 = float32 storage with float64 accumulation")
    grp.add_argument("--df-mode", choices=[m.value for m in DfMode],
                     default=DfMode.PAPER_N_MINUS_2.value,
                     help="paper: df = N-2; adjusted: df = N-q-1")
    grp.add_argument("--residualize-genotypes", action="store_true",
                     help="also project genotype rows off the covariate "
                          "basis (extension mode)")
    grp.add_argument("--threads", type=int, default=None,
                     help=f"worker threads (default: ${THREADS_ENV} or 1)")


def _add_output_mode_flags(sp: argparse.ArgumentParser) -> None:
    grp = sp.add_argument_group("output mode (choose at most one)")
    grp.add_argument("--p-threshold", type=float, default=None,
                     help="THRESHOLD mode: emit records with p <= this "
                          f"(default mode, threshold {DEFAULT_P_THRESHOLD})")
    grp.add_argument("--top-k", type=int, default=None,
                     help=f"TOPK mode: best K records per phenotype "
                          f"(K default {DEFAULT_TOP_K})")
    grp.add_argument("--full", action="store_true",
                     help="FULL mode: dense binary t-matrix")
    grp.add_argument("--full-byte-budget", type=int,
                     default=DEFAULT_FULL_BYTE_BUDGET,
                     help="refuse FULL output larger than this")
    grp.add_argument("--allow-large-full", action="store_true",
                     help="override the FULL byte budget")
    grp.add_argument("--qc-sidecar", action="store_true",
                     help="write <out>.qc.tsv listing skipped markers "
                          "and phenotypes")


def _add_sim_flags(sp: argparse.ArgumentParser, defaults: dict) -> None:
    grp = sp.add_argument_group("simulation")
    grp.add_argument("--seed", type=int, default=defaults.get("seed"),
                     required="seed" not in defaults, help="RNG seed")
    grp.add_argument("--n-samples", type=int,
                     default=defaults.get("n_samples", 500))
    grp.add_argument("--n-markers", type=int,
                     default=defaults.get("n_markers", 1000))
    grp.add_argument("--n-phenotypes", type=int,
                     default=defaults.get("n_phenotypes", 8))
    grp.add_argument("--n-covariates", type=int,
                     default=defaults.get("n_covariates", 0))
    grp.add_argument("--causal-fraction", type=float,
                     default=defaults.get("causal_fraction", 0.0))
    grp.add_argument("--effect-sd", type=float,
                     default=defaults.get("effect_sd", 0.1))
    grp.add_argument("--noise-sd", type=float, default=1.0)
    grp.add_argument("--covariate-effect-sd", type=float, default=0.1)
    grp.add_argument("--geno-missing-rate", type=float, default=0.0)
    grp.add_argument("--pheno-missing-rate", type=float, default=0.0)
    grp.add_argument("--af-min", type=float, default=0.05)
    grp.add_argument("--af-max", type=float, default=0.95)


def _sim_spec_from_args(args) -> SimSpec:
    return SimSpec(
        seed=args.seed,
        n_samples=args.n_samples,
        n_markers=args.n_markers,
        n_phenotypes=args.n_phenotypes,
        n_covariates=args.n_covariates,
        causal_fraction=args.causal_fraction,
        effect_sd=args.effect_sd,
        noise_sd=args.noise_sd,
        covariate_effect_sd=args.covariate_effect_sd,
        genotype_missing_rate=args.geno_missing_rate,
        phenotype_missing_rate=args.pheno_missing_rate,
        af_range=(args.af_min, args.af_max),
    )


def _resolve_threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"${THREADS_ENV} is not an integer: {env!r}")
    return 1


def _scan_config(parser, args, out_path: Path,
                 source: SourceSpec | None = None,
                 force_precision: Precision | None = None,
                 force_mode: tuple | None = None) -> ScanConfig:
    mode_flags = [
        flag for flag, used in (
            ("--p-threshold", args.p_threshold is not None),
            ("--top-k", args.top_k is not None),
            ("--full", args.full),
        ) if used
    ]
    if len(mode_flags) > 1:
        parser.error(f"conflicting output modes: {' and '.join(mode_flags)}")
    if force_mode is not None:
        mode, p_threshold, top_k = force_mode
    elif args.full:
        mode, p_threshold, top_k = OutputMode.FULL, DEFAULT_P_THRESHOLD, DEFAULT_TOP_K
    elif args.top_k is not None:
        mode, p_threshold, top_k = OutputMode.TOPK, DEFAULT_P_THRESHOLD, args.top_k
    else:
        mode = OutputMode.THRESHOLD
        p_threshold = (
            args.p_threshold if args.p_threshold is not None
            else DEFAULT_P_THRESHOLD
        )
        top_k = DEFAULT_TOP_K
    return ScanConfig(
        source=source if source is not None else _source_from_args(parser, args),
        pheno_path=args.pheno,
        out_path=out_path,
        covar_path=args.covar,
        keep_path=args.keep,
        remove_path=args.remove,
        id_column=args.id_col,
        delimiter="\t" if args.sep == "tab" else ",",
        missing_policy=MissingPolicy(args.missing_policy),
        batch_size=args.batch_size,
        precision=force_precision or Precision(args.precision),
        df_mode=DfMode(args.df_mode),
        residualize_genotypes=args.residualize_genotypes,
        output_mode=mode,
        p_threshold=p_threshold,
        top_k=top_k,
        worker_count=_resolve_threads(args),
        full_byte_budget=args.full_byte_budget,
        allow_large_full=args.allow_large_full,
        qc_sidecar=args.qc_sidecar,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panelgwas",
        description="Batched linear association scans of quantitative "
                    "phenotype panels",
    )
    parser.add_argument("--log-level", default="warning",
                        choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    sp = sub.add_parser("run", help="run an association scan",
                        formatter_class=fmt)
    _add_genotype_flags(sp)
    _add_table_flags(sp, pheno_required=True)
    _add_engine_flags(sp)
    _add_output_mode_flags(sp)
    sp.add_argument("--out", type=Path, required=True,
                    help="output path (records or FULL matrix)")

    sp = sub.add_parser("simulate", help="write a synthetic cohort",
                        formatter_class=fmt)
    _add_sim_flags(sp, defaults={})
    sp.add_argument("--out-dir", type=Path, required=True)

    sp = sub.add_parser("validate",
                        help="compare the engine against the OLS reference",
                        formatter_class=fmt)
    _add_genotype_flags(sp)
    _add_table_flags(sp, pheno_required=False)
    _add_engine_flags(sp, default_precision="f64")
    sp.add_argument("--simulate", action="store_true",
                    help="validate on a simulated cohort instead of "
                         "user inputs")
    _add_sim_flags(sp, defaults={
        "seed": 1, "n_samples": 500, "n_markers": 300, "n_phenotypes": 4,
        "n_covariates": 2, "causal_fraction": 0.02, "effect_sd": 0.3,
    })
    sp.add_argument("--engine-output", type=Path,
                    help="check an existing engine output file instead of "
                         "running a scan")
    sp.add_argument("--exact", action="store_true",
                    help="adjusted df + genotype residualization; require "
                         "max |t| difference <= --max-abs-dt")
    sp.add_argument("--min-p-correlation", type=float, default=0.999,
                    help="required Pearson r of -log10 p (default mode)")
    sp.add_argument("--max-abs-dt", type=float, default=1e-6,
                    help="allowed max |t| difference (--exact mode)")
    sp.add_argument("--out-dir", type=Path, default=Path("panelgwas_validate"))

    sp = sub.add_parser("bench", help="run a timed scan and print metrics",
                        formatter_class=fmt)
    _add_genotype_flags(sp)
    _add_table_flags(sp, pheno_required=False)
    _add_engine_flags(sp)
    _add_output_mode_flags(sp)
    sp.add_argument("--simulate", action="store_true",
                    help="bench on a simulated cohort")
    _add_sim_flags(sp, defaults={
        "seed": 1, "n_samples": 1000, "n_markers": 20000,
        "n_phenotypes": 256, "n_covariates": 0,
    })
    sp.add_argument("--out-dir", type=Path, default=Path("panelgwas_bench"))
    sp.add_argument("--out", type=Path, default=None,
                    help="scan output path (default <out-dir>/bench.assoc.tsv)")

    sp = sub.add_parser("convert", help="convert genotype formats",
                        formatter_class=fmt)
    _add_genotype_flags(sp)
    sp.add_argument("--to", choices=["dense", "bed"], required=True)
    sp.add_argument("--out", type=Path, required=True,
                    help="output prefix")
    sp.add_argument("--batch-size", type=int, default=DEFAULT_BATCH_SIZE)

    return parser


def parse_invocation(argv: list[str]) -> Invocation:
    """Parse and validate a command line (usage errors exit with code 2)."""
    parser = build_parser()
    args = parser.parse_args(argv)
    args._parser = parser
    return Invocation(args.subcommand, args)


# ---------------------------------------------------------------------------
# subcommand implementations


def _cmd_run(args) -> int:
    config = _scan_config(args._parser, args, args.out)
    summary = run_scan(config)
    logger.info("scan complete: %d records", summary.records_emitted)
    return 0


def _cmd_simulate(args) -> int:
    spec = _sim_spec_from_args(args)
    cohort = simulate_cohort(spec, args.out_dir)
    for key, value in (
        ("bed", cohort.bed_path), ("bim", cohort.bim_path),
        ("fam", cohort.fam_path), ("pheno", cohort.pheno_path),
        ("covar", cohort.covar_path or ""), ("truth", cohort.truth_path),
    ):
        print(f"{key}={value}")
    return 0


def _dataset_from_args(parser, args, out_dir: Path):
    """(source_spec, pheno_path, covar_path) from --simulate or user flags."""
    if args.simulate:
        cohort = simulate_cohort(_sim_spec_from_args(args), out_dir / "dataset")
        spec = SourceSpec(
            GenotypeFormat.PLINK_BED, bed_path=cohort.bed_path,
            bim_path=cohort.bim_path, fam_path=cohort.fam_path,
        )
        return spec, cohort.pheno_path, cohort.covar_path
    if not args.pheno:
        parser.error("--pheno is required unless --simulate is given")
    return _source_from_args(parser, args), args.pheno, args.covar


def _oracle_stats_for_records(args, source_spec, pheno_path, covar_path,
                              records) -> dict:
    """Full-OLS reference stats for every (marker, phenotype) engine record."""
    delim = "\t" if args.sep == "tab" else ","
    source = open_genotype_source(source_spec)
    try:
        pheno_table = phenotypes.load_table(pheno_path, args.id_col, delim)
        covar_table = (
            phenotypes.load_table(covar_path, args.id_col, delim)
            if covar_path else None
        )
        keep = phenotypes.read_id_list(args.keep) if args.keep else None
        remove = phenotypes.read_id_list(args.remove) if args.remove else None
        align = phenotypes.align_samples(
            source.sample_ids, pheno_table, covar_table, keep, remove
        )
        panel = phenotypes.build_panel(pheno_table, align)
        covars = (
            phenotypes.covariate_matrix(covar_table, align)
            if covar_table is not None else None
        )
        col_of = {name: j for j, name in enumerate(panel.phenotype_names)}
        by_marker: dict[str, list[str]] = {}
        for rec in records:
            by_marker.setdefault(rec.id, []).append(rec.phenotype)
        known: set[str] = set()
        dup_with_records: set[str] = set()
        for marker in source.marker_catalog:
            if marker.id in known and marker.id in by_marker:
                dup_with_records.add(marker.id)
            known.add(marker.id)
        if dup_with_records:
            raise PanelGwasError(
                "cannot validate: duplicate marker IDs in the genotype "
                f"source make records ambiguous (e.g. "
                f"{sorted(dup_with_records)[:3]})"
            )
        unknown = set(by_marker) - known
        if unknown:
            raise PanelGwasError(
                f"engine output names {len(unknown)} markers not in the "
                f"genotype source (e.g. {sorted(unknown)[:3]})"
            )
        g_idx = align.genotype_row_index
        stats: dict = {}
        for start in range(0, source.n_markers, 1024):
            raw = source.read_marker_batch(start, 1024)
            for local, marker in enumerate(raw.markers):
                phenos = by_marker.get(marker.id)
                if not phenos:
                    continue
                g = raw.dosages[local, g_idx]
                missing = np.isnan(g)
                if missing.any():
                    g = np.where(missing, g[~missing].mean(), g)
                for name in phenos:
                    if name not in col_of:
                        raise PanelGwasError(
                            f"engine output names unknown phenotype {name!r}"
                        )
                    res = ols_single(panel.y[:, col_of[name]], g, covars)
                    stats[(marker.id, name)] = (res.t, res.p)
        return stats
    finally:
        source.close()


def _cmd_validate(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    parser = args._parser
    source_spec, pheno_path, covar_path = _dataset_from_args(
        parser, args, out_dir
    )
    if args.engine_output:
        engine_out = args.engine_output
    else:
        engine_out = out_dir / "engine.assoc.tsv"
        df_mode = DfMode.ADJUSTED if args.exact else DfMode(args.df_mode)
        config = ScanConfig(
            source=source_spec,
            pheno_path=pheno_path,
            out_path=engine_out,
            covar_path=covar_path,
            keep_path=args.keep,
            remove_path=args.remove,
            id_column=args.id_col,
            delimiter="\t" if args.sep == "tab" else ",",
            batch_size=args.batch_size,
            precision=Precision(args.precision),
            df_mode=df_mode,
            residualize_genotypes=args.residualize_genotypes or args.exact,
            output_mode=OutputMode.THRESHOLD,
            p_threshold=1.0,
            worker_count=_resolve_threads(args),
            summary_to_stderr=False,
        )
        run_scan(config)
    records = output.load_association_records(engine_out)
    engine_stats = {(r.id, r.phenotype): (r.t, r.p) for r in records}
    oracle_stats = _oracle_stats_for_records(
        args, source_spec, pheno_path, covar_path, records
    )
    report = concordance_report(engine_stats, oracle_stats)
    print(report.to_text())
    with open(out_dir / "concordance.txt", "w") as fh:
        fh.write(report.to_text() + "\n")
    with open(out_dir / "concordance_metrics.txt", "w") as fh:
        for key, value in report.metrics().items():
            fh.write(f"{key}={value}\n")
    if args.exact:
        ok = report.max_abs_dt <= args.max_abs_dt
        verdict = (
            f"max |dt| {report.max_abs_dt:.3e} vs bound {args.max_abs_dt:.3e}"
        )
    else:
        ok = report.pearson_r_neglog10p >= args.min_p_correlation
        verdict = (
            f"pearson r {report.pearson_r_neglog10p:.6f} vs required "
            f"{args.min_p_correlation}"
        )
    print(f"{'PASS' if ok else 'FAIL'}: {verdict}")
    return 0 if ok else 1


def _cmd_bench(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    parser = args._parser
    source_spec, pheno_path, covar_path = _dataset_from_args(
        parser, args, out_dir
    )
    args.pheno = pheno_path
    args.covar = covar_path
    out_path = args.out or (out_dir / "bench.assoc.tsv")
    config = _scan_config(parser, args, out_path, source=source_spec)
    config.summary_to_stderr = False
    summary = run_scan(config)
    tests = summary.markers_scanned * summary.phenotypes_scanned
    metrics = dict(summary.to_dict())
    metrics["tests"] = tests
    metrics["tests_per_second"] = tests / summary.wall_s if summary.wall_s else 0.0
    for key in sorted(metrics):
        print(f"{key}={metrics[key]}")
    return 0


def _cmd_convert(args) -> int:
    parser = args._parser
    source_spec = _source_from_args(parser, args)
    source = open_genotype_source(source_spec)
    try:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        if args.to == "dense":
            npy_path = out.with_suffix(".npy")
            sids_path = out.with_suffix(".samples.txt")
            arr = np.lib.format.open_memmap(
                npy_path, mode="w+", dtype=np.float64,
                shape=(source.n_markers, source.n_samples),
            )
            for start in range(0, source.n_markers, args.batch_size):
                raw = source.read_marker_batch(start, args.batch_size)
                arr[start : start + raw.n_markers] = raw.dosages
            arr.flush()
            sids_path.write_text("\n".join(source.sample_ids) + "\n")
            print(f"dense={npy_path}")
            print(f"sample_ids={sids_path}")
        else:
            dosages = np.empty((source.n_markers, source.n_samples))
            for start in range(0, source.n_markers, args.batch_size):
                raw = source.read_marker_batch(start, args.batch_size)
                block = raw.dosages
                if not source.counts_allele1:
                    # .bed counts allele1; flip so the stored counts agree
                    block = 2.0 - block
                dosages[start : start + raw.n_markers] = block
            bed, bim, fam = write_bed_trio(
                out, dosages, source.sample_ids, list(source.marker_catalog)
            )
            print(f"bed={bed}")
            print(f"bim={bim}")
            print(f"fam={fam}")
        return 0
    finally:
        source.close()


_COMMANDS = {
    "run": _cmd_run,
    "simulate": _cmd_simulate,
    "validate": _cmd_validate,
    "bench": _cmd_bench,
    "convert": _cmd_convert,
}


def main(argv: list[str] | None = None) -> int:
    inv = parse_invocation(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, inv.args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[inv.subcommand](inv.args)
    except PanelGwasError as exc:
        print(f"panelgwas: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"panelgwas: i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
