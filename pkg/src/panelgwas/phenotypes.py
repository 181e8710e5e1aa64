"""Phenotype/covariate table loading and sample alignment.

Tables are delimited text with a header row and a sample-ID column
(default "IID"). Cells matching the missing tokens {"", "NA", "NaN",
"nan", "-9"} become NaN; so do unparseable or non-finite cells, with a
per-column warning count. The kept-sample set follows genotype-file order
so genotype batches never need row reordering; phenotype and covariate
rows are reordered instead.
"""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PanelGwasError

logger = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "NA", "NaN", "nan", "-9"})

EXCLUSION_REASONS = (
    "not-in-genotypes",
    "not-in-phenotypes",
    "not-in-covariates",
    "remove-listed",
    "not-keep-listed",
)


@dataclass(frozen=True)
class Table:
    """A parsed delimited table: string IDs plus a float matrix."""

    ids: list[str]
    column_names: list[str]
    values: np.ndarray
    missing_count: np.ndarray
    unparseable_count: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def row_index(self) -> dict[str, int]:
        return {sid: i for i, sid in enumerate(self.ids)}


def _cell_to_float(cell: str) -> tuple[float, bool]:
    # -> (value, unparseable-warning)
    if cell in MISSING_TOKENS:
        return np.nan, False
    try:
        value = float(cell)
    except ValueError:
        return np.nan, True
    if not np.isfinite(value):
        return np.nan, True
    return value, False


def load_table(
    path: Path, id_column: str = "IID", delimiter: str = "\t"
) -> Table:
    """Parse a delimited table with a header row and a sample-ID column."""
    path = Path(path)
    if not path.exists():
        raise PanelGwasError(f"missing table file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise PanelGwasError(f"{path}: empty file, expected a header row")
        header = [h.strip() for h in header]
        if id_column not in header:
            raise PanelGwasError(
                f"{path}: header has no {id_column!r} column "
                f"(columns: {', '.join(header)})"
            )
        id_pos = header.index(id_column)
        names = [h for i, h in enumerate(header) if i != id_pos]
        ids: list[str] = []
        rows: list[list[str]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise PanelGwasError(
                    f"{path}:{lineno}: ragged row with {len(row)} cells, "
                    f"header has {len(header)}"
                )
            ids.append(row[id_pos].strip())
            rows.append([row[i] for i in range(len(row)) if i != id_pos])

    seen: set[str] = set()
    for sid in ids:
        if sid in seen:
            raise PanelGwasError(f"{path}: duplicate sample ID {sid!r}")
        seen.add(sid)

    n, c = len(rows), len(names)
    values = np.empty((n, c), dtype=np.float64)
    unparseable = np.zeros(c, dtype=np.int64)
    parsed_fast = False
    if rows:
        try:
            candidate = np.asarray(rows, dtype=np.float64)
        except ValueError:
            candidate = None
        # the fast path cannot see string forms, so any value that collides
        # with a declared token ("-9") or is non-finite forces the slow path
        if candidate is not None:
            finite_ok = not np.any(np.isinf(candidate))
            if finite_ok and not np.any(candidate == -9.0):
                values = candidate
                parsed_fast = True
    if not parsed_fast:
        for i, row in enumerate(rows):
            for j, cell in enumerate(row):
                values[i, j], warn = _cell_to_float(cell.strip())
                if warn:
                    unparseable[j] += 1
    missing = np.isnan(values).sum(axis=0).astype(np.int64)
    for j in range(c):
        if unparseable[j]:
            logger.warning(
                "%s: column %s has %d unparseable cells (treated as missing)",
                path,
                names[j],
                unparseable[j],
            )
    return Table(ids, names, values, missing, unparseable)


def read_id_list(path: Path) -> set[str]:
    """Newline-delimited sample IDs (blank lines ignored)."""
    path = Path(path)
    if not path.exists():
        raise PanelGwasError(f"missing sample list: {path}")
    return {ln.strip() for ln in path.read_text().splitlines() if ln.strip()}


@dataclass(frozen=True)
class SampleAlignment:
    """Kept samples in genotype-file order with per-table row indices."""

    kept_sample_ids: list[str]
    genotype_row_index: np.ndarray
    phenotype_row_index: np.ndarray
    covariate_row_index: np.ndarray | None
    exclusion_log: dict[str, int]
    table_ids_not_in_genotypes: int

    @property
    def n_kept(self) -> int:
        return len(self.kept_sample_ids)


def align_samples(
    genotype_ids: list[str],
    phenotype: Table,
    covariates: Table | None = None,
    keep_list: set[str] | None = None,
    remove_list: set[str] | None = None,
) -> SampleAlignment:
    """Intersect sample sets and fix the kept order to genotype-file order.

    kept = genotypes ∩ phenotypes ∩ covariates (if given) ∩ keep_list
    (if given) minus remove_list (if given). The remove list wins over the
    keep list. Every dropped genotype sample is counted under exactly one
    reason; fewer than 3 kept samples is fatal.
    """
    pheno_index = phenotype.row_index()
    covar_index = covariates.row_index() if covariates is not None else None
    log = {reason: 0 for reason in EXCLUSION_REASONS}
    kept_ids: list[str] = []
    g_idx: list[int] = []
    p_idx: list[int] = []
    c_idx: list[int] = []
    for i, sid in enumerate(genotype_ids):
        if remove_list is not None and sid in remove_list:
            log["remove-listed"] += 1
            continue
        if keep_list is not None and sid not in keep_list:
            log["not-keep-listed"] += 1
            continue
        if sid not in pheno_index:
            log["not-in-phenotypes"] += 1
            continue
        if covar_index is not None and sid not in covar_index:
            log["not-in-covariates"] += 1
            continue
        kept_ids.append(sid)
        g_idx.append(i)
        p_idx.append(pheno_index[sid])
        if covar_index is not None:
            c_idx.append(covar_index[sid])
    if len(kept_ids) < 3:
        raise PanelGwasError(
            f"only {len(kept_ids)} samples remain after alignment; "
            "at least 3 are required (df = N - 2 must be positive)"
        )
    genotype_set = set(genotype_ids)
    stray = sum(1 for sid in phenotype.ids if sid not in genotype_set)
    if covariates is not None:
        stray += sum(1 for sid in covariates.ids if sid not in genotype_set)
    return SampleAlignment(
        kept_ids,
        np.asarray(g_idx, dtype=np.int64),
        np.asarray(p_idx, dtype=np.int64),
        np.asarray(c_idx, dtype=np.int64) if covar_index is not None else None,
        log,
        stray,
    )


class PanelState(enum.Enum):
    RAW = "raw"
    RESIDUALIZED = "residualized"
    STANDARDIZED = "standardized"


class MissingPolicy(enum.Enum):
    FAIL = "fail"
    MEAN_IMPUTE = "mean-impute"


@dataclass
class PhenotypePanel:
    """Dense N x P phenotype matrix aligned to the kept-sample order."""

    y: np.ndarray
    phenotype_names: list[str]
    missing_count: np.ndarray
    state: PanelState = PanelState.RAW

    @property
    def n_samples(self) -> int:
        return self.y.shape[0]

    @property
    def n_phenotypes(self) -> int:
        return self.y.shape[1]


def build_panel(
    table: Table,
    alignment: SampleAlignment,
    missing_policy: MissingPolicy = MissingPolicy.MEAN_IMPUTE,
) -> PhenotypePanel:
    """Assemble the aligned phenotype matrix.

    Under MEAN_IMPUTE each NaN becomes its column's mean over the
    non-missing kept samples (logged per column); under FAIL any NaN is
    fatal. A column with no non-missing kept values is fatal either way.
    """
    if table.values.shape[1] < 1:
        raise PanelGwasError("phenotype table has no phenotype columns")
    y = np.array(table.values[alignment.phenotype_row_index], dtype=np.float64)
    missing = np.isnan(y)
    missing_count = missing.sum(axis=0).astype(np.int64)
    n_obs = y.shape[0] - missing_count
    for j, name in enumerate(table.column_names):
        if n_obs[j] == 0:
            raise PanelGwasError(
                f"phenotype column entirely missing: {name}"
            )
    if missing.any():
        if missing_policy is MissingPolicy.FAIL:
            j = int(np.argmax(missing_count > 0))
            raise PanelGwasError(
                f"phenotype column {table.column_names[j]} has "
                f"{int(missing_count[j])} missing values and the missing "
                "policy is FAIL"
            )
        with np.errstate(invalid="ignore"):
            col_means = np.nansum(y, axis=0) / n_obs
        fill = np.broadcast_to(col_means, y.shape)
        y[missing] = fill[missing]
        for j, name in enumerate(table.column_names):
            if missing_count[j]:
                logger.warning(
                    "phenotype %s: mean-imputed %d of %d samples",
                    name,
                    int(missing_count[j]),
                    y.shape[0],
                )
    return PhenotypePanel(y, list(table.column_names), missing_count)


def covariate_matrix(table: Table, alignment: SampleAlignment) -> np.ndarray:
    """Aligned covariate matrix; any missing cell is fatal."""
    if alignment.covariate_row_index is None:
        raise PanelGwasError("alignment was built without covariates")
    c = np.array(table.values[alignment.covariate_row_index], dtype=np.float64)
    if np.isnan(c).any():
        i, j = np.argwhere(np.isnan(c))[0]
        raise PanelGwasError(
            f"missing covariate cell: sample "
            f"{alignment.kept_sample_ids[int(i)]!r}, column "
            f"{table.column_names[int(j)]!r} (covariates are never imputed)"
        )
    return c
