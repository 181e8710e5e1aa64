"""Scan orchestration: plan batches, pipeline decode -> prepare -> correlate
-> emit, and write results deterministically.

The pipeline is one sequential decode stream (sources are single-consumer),
a worker pool for the per-batch math, and a single writer that consumes
futures in submission order, so output order and content are independent of
worker scheduling. The in-flight window is bounded at twice the worker
count to cap memory.
"""

from __future__ import annotations

import enum
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernel, output, phenotypes
from .errors import ConfigError, PanelGwasError
from .genotypes.types import RawBatch, SourceSpec, open_genotype_source
from .kernel import SkipReason
from .phenotypes import MissingPolicy, PanelState


class Precision(enum.Enum):
    F32_STORE_F64_ACC = "f32"
    F64 = "f64"


class DfMode(enum.Enum):
    PAPER_N_MINUS_2 = "paper"
    ADJUSTED = "adjusted"


class OutputMode(enum.Enum):
    THRESHOLD = "threshold"
    TOPK = "topk"
    FULL = "full"


DEFAULT_BATCH_SIZE = 4096
DEFAULT_P_THRESHOLD = 1e-4
DEFAULT_TOP_K = 100
DEFAULT_FULL_BYTE_BUDGET = 16 * 1024**3


@dataclass
class ScanConfig:
    """Everything a scan needs; defaults match the CLI help text."""

    source: SourceSpec
    pheno_path: Path
    out_path: Path
    covar_path: Path | None = None
    keep_path: Path | None = None
    remove_path: Path | None = None
    id_column: str = "IID"
    delimiter: str = "\t"
    missing_policy: MissingPolicy = MissingPolicy.MEAN_IMPUTE
    batch_size: int = DEFAULT_BATCH_SIZE
    precision: Precision = Precision.F32_STORE_F64_ACC
    df_mode: DfMode = DfMode.PAPER_N_MINUS_2
    residualize_genotypes: bool = False
    rank_tolerance: float = 1e-8
    output_mode: OutputMode = OutputMode.THRESHOLD
    p_threshold: float = DEFAULT_P_THRESHOLD
    top_k: int = DEFAULT_TOP_K
    worker_count: int = 1
    full_byte_budget: int = DEFAULT_FULL_BYTE_BUDGET
    allow_large_full: bool = False
    qc_sidecar: bool = False
    summary_to_stderr: bool = True

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 < self.p_threshold <= 1.0:
            raise ConfigError("p_threshold must be in (0, 1]")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.worker_count < 1:
            raise ConfigError("worker_count must be >= 1")


@dataclass
class ScanSummary:
    """Scan accounting; `markers_scanned + skipped == n_markers`."""

    n_markers: int
    n_samples_source: int
    n_samples_used: int
    markers_scanned: int
    markers_skipped_monomorphic: int
    markers_skipped_all_missing: int
    phenotypes_total: int
    phenotypes_scanned: int
    phenotypes_skipped_zero_variance: int
    records_emitted: int
    clamp_count: int
    p_underflow_count: int
    df: int
    time_decode_s: float
    time_prepare_s: float
    time_correlate_s: float
    time_emit_s: float
    wall_s: float
    exclusion_log: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "n_markers": self.n_markers,
            "n_samples_source": self.n_samples_source,
            "n_samples_used": self.n_samples_used,
            "markers_scanned": self.markers_scanned,
            "markers_skipped_monomorphic": self.markers_skipped_monomorphic,
            "markers_skipped_all_missing": self.markers_skipped_all_missing,
            "phenotypes_total": self.phenotypes_total,
            "phenotypes_scanned": self.phenotypes_scanned,
            "phenotypes_skipped_zero_variance":
                self.phenotypes_skipped_zero_variance,
            "records_emitted": self.records_emitted,
            "clamp_count": self.clamp_count,
            "p_underflow_count": self.p_underflow_count,
            "df": self.df,
            "time_decode_s": self.time_decode_s,
            "time_prepare_s": self.time_prepare_s,
            "time_correlate_s": self.time_correlate_s,
            "time_emit_s": self.time_emit_s,
            "wall_s": self.wall_s,
        }
        for reason, count in self.exclusion_log.items():
            d[f"excluded_{reason}"] = count
        return d


def plan_batches(n_markers: int, batch_size: int) -> list[tuple[int, int]]:
    """Contiguous (start, count) spans covering [0, n_markers)."""
    if n_markers < 1:
        raise ValueError("plan_batches requires at least one marker")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    return [
        (s, min(batch_size, n_markers - s))
        for s in range(0, n_markers, batch_size)
    ]


@dataclass
class _Prepared:
    """Panel-side state shared read-only by all workers."""

    ytil: np.ndarray
    basis: kernel.CovariateBasis
    df: float
    dtype: np.dtype
    residualize_genotypes: bool
    mode: OutputMode
    premask_abs_r: float
    topk_bar: np.ndarray | None
    topk_t_floor: float
    out_dtype: np.dtype


def _abs_t_to_abs_r(abs_t, df: float):
    # inverse of |t| = |r| sqrt(df / (1 - r^2)); monotone, so a premask bar
    # in t-space maps exactly to one in r-space
    with np.errstate(invalid="ignore", divide="ignore"):
        r = abs_t / np.sqrt(df + np.square(abs_t))
    return np.where(np.isinf(abs_t), 1.0, r)


def _process_batch(raw: RawBatch, prep: _Prepared):
    t0 = time.perf_counter()
    std = kernel.prepare_genotype_batch(
        raw,
        basis=prep.basis,
        residualize_genotypes=prep.residualize_genotypes,
        dtype=prep.dtype,
    )
    t1 = time.perf_counter()
    r, clamp = kernel.correlate(std.matrix, prep.ytil)
    row_ok = ~std.skip_mask

    batch = output.BatchStats(
        markers=std.markers,
        allele_frequency=std.allele_frequency,
        missing_count=std.missing_count,
        skip_reason=std.skip_reason,
        clamp_count=clamp,
    )
    if prep.mode is OutputMode.FULL:
        batch.t_rows = kernel.t_from_r(r[row_ok], prep.df)
    else:
        # premask on |r| (t and p are strict monotone maps of it), then
        # compute t only for the candidates
        abs_r = np.abs(r)
        if prep.mode is OutputMode.THRESHOLD:
            mask = abs_r >= prep.premask_abs_r
        else:
            # stale reads of the shared bar only widen the candidate set
            bar_t = np.minimum(prep.topk_bar, prep.topk_t_floor)
            bar_t = bar_t * (1.0 - 1e-12)
            bar_r = _abs_t_to_abs_r(np.maximum(bar_t, 0.0), prep.df)
            bar_r = np.where(bar_t <= 0.0, -1.0, bar_r * (1.0 - 1e-12))
            mask = abs_r >= bar_r[None, :]
        mask &= row_ok[:, None]
        rows, cols = np.nonzero(mask)
        batch.cand_rows = rows
        batch.cand_cols = cols
        batch.cand_r = r[rows, cols]
        batch.cand_t = kernel.t_from_r(batch.cand_r, prep.df)
    t2 = time.perf_counter()
    return batch, std.skip_reason, t1 - t0, t2 - t1


def run_scan(config: ScanConfig) -> ScanSummary:
    """Execute a full scan and write results plus the summary files.

    Output records appear in (marker source order, phenotype column order)
    regardless of batch size or worker count; reruns with identical inputs
    produce byte-identical result files.
    """
    wall0 = time.perf_counter()
    config.validate()
    source = open_genotype_source(config.source)
    try:
        return _run_scan_open(config, source, wall0)
    finally:
        source.close()


def _run_scan_open(config: ScanConfig, source, wall0: float) -> ScanSummary:
    pheno_table = phenotypes.load_table(
        config.pheno_path, config.id_column, config.delimiter
    )
    covar_table = (
        phenotypes.load_table(
            config.covar_path, config.id_column, config.delimiter
        )
        if config.covar_path
        else None
    )
    keep = phenotypes.read_id_list(config.keep_path) if config.keep_path else None
    remove = (
        phenotypes.read_id_list(config.remove_path) if config.remove_path else None
    )
    align = phenotypes.align_samples(
        source.sample_ids, pheno_table, covar_table, keep, remove
    )
    panel = phenotypes.build_panel(pheno_table, align, config.missing_policy)
    n = align.n_kept

    if covar_table is not None:
        c_matrix = phenotypes.covariate_matrix(covar_table, align)
        c_names = covar_table.column_names
    else:
        c_matrix = np.zeros((n, 0))
        c_names = []
    basis = kernel.build_covariate_basis(
        c_matrix, True, config.rank_tolerance, c_names
    )

    y_res = kernel.residualize(panel.y, basis)
    panel.y = y_res
    panel.state = PanelState.RESIDUALIZED
    ytil, _sd, zero_variance = kernel.standardize_columns(y_res)
    panel.y = ytil
    panel.state = PanelState.STANDARDIZED
    kept_cols = np.nonzero(~zero_variance)[0]
    pheno_names = [panel.phenotype_names[j] for j in kept_cols]
    if len(pheno_names) == 0:
        raise PanelGwasError("every phenotype has zero variance; nothing to scan")
    ytil = np.ascontiguousarray(ytil[:, kept_cols])

    if config.df_mode is DfMode.PAPER_N_MINUS_2:
        df = float(n - 2)
    else:
        df = float(n - basis.rank - 1)
    if df < 1:
        raise ConfigError(
            f"degrees of freedom {df:.0f} < 1 (n={n}, basis rank={basis.rank})"
        )

    if source.n_markers < 1:
        raise PanelGwasError("genotype source has no markers")

    dtype = np.dtype(
        np.float32 if config.precision is Precision.F32_STORE_F64_ACC
        else np.float64
    )
    out_dtype = dtype

    if config.output_mode is OutputMode.FULL:
        projected = source.n_markers * len(pheno_names) * out_dtype.itemsize
        if projected > config.full_byte_budget and not config.allow_large_full:
            raise ConfigError(
                f"FULL output would be ~{projected} bytes, over the "
                f"{config.full_byte_budget}-byte budget; pass the "
                "large-output override to proceed"
            )
        writer = output.FullMatrixWriter(
            config.out_path, out_dtype, df, n, source.counts_allele1, pheno_names
        )
    elif config.output_mode is OutputMode.TOPK:
        writer = output.TopKWriter(
            config.out_path, config.top_k, df, n, source.counts_allele1,
            pheno_names,
        )
    else:
        writer = output.ThresholdWriter(
            config.out_path, config.p_threshold, df, n, source.counts_allele1,
            pheno_names,
        )

    premask_abs_r = 0.0
    topk_bar = None
    t_floor = np.inf
    if config.output_mode is OutputMode.THRESHOLD:
        t_crit = kernel.t_threshold_for_p(config.p_threshold, df)
        if t_crit > 0.0:
            safe_t = t_crit * (1.0 - 1e-9)
            premask_abs_r = float(
                _abs_t_to_abs_r(np.float64(safe_t), df) * (1.0 - 1e-12)
            )
    elif config.output_mode is OutputMode.TOPK:
        topk_bar = writer.worst_abs_t
        t_floor = kernel.t_threshold_for_p(kernel.P_FLOOR, df)

    prep = _Prepared(
        ytil=ytil,
        basis=basis,
        df=df,
        dtype=dtype,
        residualize_genotypes=config.residualize_genotypes,
        mode=config.output_mode,
        premask_abs_r=premask_abs_r,
        topk_bar=topk_bar,
        topk_t_floor=t_floor,
        out_dtype=out_dtype,
    )

    g_idx = align.genotype_row_index
    subset_needed = not (
        len(g_idx) == source.n_samples
        and np.array_equal(g_idx, np.arange(source.n_samples))
    )

    skip_mono = 0
    skip_missing = 0
    clamp_total = 0
    time_decode = 0.0
    time_prepare = 0.0
    time_correlate = 0.0
    time_emit = 0.0
    qc_rows: list[str] = []

    def consume(fut) -> None:
        nonlocal skip_mono, skip_missing, clamp_total
        nonlocal time_prepare, time_correlate, time_emit
        batch, skip_reason, dt_prep, dt_corr = fut.result()
        time_prepare += dt_prep
        time_correlate += dt_corr
        clamp_total += batch.clamp_count
        skip_mono += int(np.count_nonzero(skip_reason == SkipReason.MONOMORPHIC))
        skip_missing += int(np.count_nonzero(skip_reason == SkipReason.ALL_MISSING))
        if config.qc_sidecar:
            for i in np.nonzero(skip_reason)[0]:
                marker = batch.markers[int(i)]
                reason = SkipReason(int(skip_reason[i])).name
                qc_rows.append(f"marker\t{marker.id}\t{reason}\n")
        t0 = time.perf_counter()
        writer.emit(batch)
        time_emit += time.perf_counter() - t0

    plan = plan_batches(source.n_markers, config.batch_size)
    window = max(2, 2 * config.worker_count)
    with ThreadPoolExecutor(max_workers=config.worker_count) as pool:
        pending: deque = deque()
        for start, count in plan:
            t0 = time.perf_counter()
            raw = source.read_marker_batch(start, count, dtype=dtype)
            if subset_needed:
                sub = raw.dosages[:, g_idx]
                raw = RawBatch(
                    raw.markers, sub, np.isnan(sub).sum(axis=1)
                )
            time_decode += time.perf_counter() - t0
            pending.append(pool.submit(_process_batch, raw, prep))
            while len(pending) >= window:
                consume(pending.popleft())
        while pending:
            consume(pending.popleft())

    t0 = time.perf_counter()
    records = writer.finalize()
    time_emit += time.perf_counter() - t0

    if config.qc_sidecar:
        qc_path = Path(str(config.out_path) + ".qc.tsv")
        with open(qc_path, "w") as fh:
            fh.write("KIND\tNAME\tREASON\n")
            fh.writelines(qc_rows)
            for j in np.nonzero(zero_variance)[0]:
                fh.write(
                    f"phenotype\t{panel.phenotype_names[int(j)]}\tZERO_VARIANCE\n"
                )

    summary = ScanSummary(
        n_markers=source.n_markers,
        n_samples_source=source.n_samples,
        n_samples_used=n,
        markers_scanned=source.n_markers - skip_mono - skip_missing,
        markers_skipped_monomorphic=skip_mono,
        markers_skipped_all_missing=skip_missing,
        phenotypes_total=panel.n_phenotypes,
        phenotypes_scanned=len(pheno_names),
        phenotypes_skipped_zero_variance=int(np.count_nonzero(zero_variance)),
        records_emitted=records,
        clamp_count=clamp_total,
        p_underflow_count=writer.p_underflow_count,
        df=int(df),
        time_decode_s=time_decode,
        time_prepare_s=time_prepare,
        time_correlate_s=time_correlate,
        time_emit_s=time_emit,
        wall_s=time.perf_counter() - wall0,
        exclusion_log=dict(align.exclusion_log),
    )
    summary_path = Path(str(config.out_path) + ".summary.json")
    with open(summary_path, "w") as fh:
        json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if config.summary_to_stderr:
        for key, value in summary.to_dict().items():
            print(f"{key}={value}", file=sys.stderr)
    return summary
