"""Result sinks for the three output modes.

THRESHOLD and TOPK write long-format TSV with the header
CHR ID POS A1 A2 AF N_MISS N DF R T P PHENO; floats are shortest
round-trip decimals so reruns are byte-identical. FULL writes the
t-statistic matrix as little-endian binary (magic "PANELGWAS-FULL\\0\\0",
u32 version, u64 M, u64 P, u32 element code 4|8) plus marker/phenotype
sidecars. A1 is always the counted allele.

Writers are driven by a single thread; batches must arrive in source
order. p-values are evaluated here, only for candidate records (the
engine premasks on |t|, which orders records identically because p is
strictly monotone in |t| at fixed df).
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PanelGwasError
from .genotypes.types import MarkerRecord
from .kernel import P_FLOOR, p_from_t

TSV_COLUMNS = (
    "CHR",
    "ID",
    "POS",
    "A1",
    "A2",
    "AF",
    "N_MISS",
    "N",
    "DF",
    "R",
    "T",
    "P",
    "PHENO",
)

FULL_MAGIC = b"PANELGWAS-FULL\x00\x00"
FULL_VERSION = 1
_FULL_HEADER = struct.Struct("<16sIQQI")


def fmt_float(x) -> str:
    """Shortest decimal that round-trips to the same double."""
    return repr(float(x))


@dataclass(frozen=True)
class AssocRecord:
    """One (marker, phenotype) association result."""

    chrom: str
    id: str
    pos: int
    counted_allele: str
    other_allele: str
    af: float
    missing_count: int
    phenotype: str
    n: int
    r: float
    t: float
    p: float
    df: int


@dataclass
class BatchStats:
    """What one processed batch hands the writer (already in source order)."""

    markers: tuple[MarkerRecord, ...]
    allele_frequency: np.ndarray
    missing_count: np.ndarray
    skip_reason: np.ndarray
    clamp_count: int
    cand_rows: np.ndarray | None = None
    cand_cols: np.ndarray | None = None
    cand_r: np.ndarray | None = None
    cand_t: np.ndarray | None = None
    t_rows: np.ndarray | None = None


def _marker_alleles(marker: MarkerRecord, counts_allele1: bool) -> tuple[str, str]:
    if counts_allele1:
        return marker.allele1, marker.allele2
    return marker.allele2, marker.allele1


class _BaseWriter:
    def __init__(self, df: float, n: int, counts_allele1: bool,
                 phenotype_names: list[str]):
        self.df = df
        self.n = n
        self.counts_allele1 = counts_allele1
        self.phenotype_names = phenotype_names
        self.records_written = 0
        self.p_underflow_count = 0

    def _record_line(self, marker: MarkerRecord, af: float, n_miss: int,
                     pheno: str, r: float, t: float, p: float) -> str:
        a1, a2 = _marker_alleles(marker, self.counts_allele1)
        return (
            f"{marker.chrom}\t{marker.id}\t{marker.pos}\t{a1}\t{a2}\t"
            f"{fmt_float(af)}\t{n_miss}\t{self.n}\t{int(self.df)}\t"
            f"{fmt_float(r)}\t{fmt_float(t)}\t{fmt_float(p)}\t{pheno}\n"
        )


class ThresholdWriter(_BaseWriter):
    """Streams rows with p <= threshold in (marker, phenotype) order."""

    def __init__(self, path: Path, p_threshold: float, df: float, n: int,
                 counts_allele1: bool, phenotype_names: list[str]):
        super().__init__(df, n, counts_allele1, phenotype_names)
        self.p_threshold = p_threshold
        self._fh = open(path, "w")
        self._fh.write("\t".join(TSV_COLUMNS) + "\n")

    def emit(self, batch: BatchStats) -> int:
        if batch.cand_t is None or batch.cand_t.size == 0:
            return 0
        p = p_from_t(batch.cand_t, self.df)
        self.p_underflow_count += int(np.count_nonzero(p <= P_FLOOR))
        keep = p <= self.p_threshold
        lines = []
        for i in np.nonzero(keep)[0]:
            row = int(batch.cand_rows[i])
            col = int(batch.cand_cols[i])
            marker = batch.markers[row]
            lines.append(self._record_line(
                marker,
                batch.allele_frequency[row],
                int(batch.missing_count[row]),
                self.phenotype_names[col],
                batch.cand_r[i],
                batch.cand_t[i],
                p[i],
            ))
        self._fh.writelines(lines)
        self.records_written += len(lines)
        return len(lines)

    def finalize(self) -> int:
        self._fh.close()
        return self.records_written


class TopKWriter(_BaseWriter):
    """Keeps the k best records per phenotype across the whole scan.

    Per-phenotype bounded heaps ordered by (p, marker source index); the
    flush at scan end groups records by phenotype column order, ascending
    (p, source index) within each group. `worst_abs_t` exposes the current
    per-phenotype admission bar for engine-side premasking (monotone
    non-decreasing, so stale reads only widen the candidate set).
    """

    def __init__(self, path: Path, top_k: int, df: float, n: int,
                 counts_allele1: bool, phenotype_names: list[str]):
        super().__init__(df, n, counts_allele1, phenotype_names)
        self.path = Path(path)
        self.top_k = top_k
        self._heaps: list[list] = [[] for _ in phenotype_names]
        self.worst_abs_t = np.full(len(phenotype_names), -np.inf)

    def emit(self, batch: BatchStats) -> int:
        if batch.cand_t is None or batch.cand_t.size == 0:
            return 0
        p = p_from_t(batch.cand_t, self.df)
        self.p_underflow_count += int(np.count_nonzero(p <= P_FLOOR))
        for i in range(batch.cand_t.size):
            row = int(batch.cand_rows[i])
            col = int(batch.cand_cols[i])
            marker = batch.markers[row]
            src = marker.source_index
            key = (-p[i], -src)
            heap = self._heaps[col]
            if len(heap) < self.top_k:
                heapq.heappush(heap, (key, (marker, batch.allele_frequency[row],
                                            int(batch.missing_count[row]),
                                            float(batch.cand_r[i]),
                                            float(batch.cand_t[i]),
                                            float(p[i]))))
            elif key > heap[0][0]:
                heapq.heapreplace(heap, (key, (marker, batch.allele_frequency[row],
                                               int(batch.missing_count[row]),
                                               float(batch.cand_r[i]),
                                               float(batch.cand_t[i]),
                                               float(p[i]))))
            else:
                continue
            if len(heap) == self.top_k:
                self.worst_abs_t[col] = abs(heap[0][1][4])
        return 0

    def finalize(self) -> int:
        with open(self.path, "w") as fh:
            fh.write("\t".join(TSV_COLUMNS) + "\n")
            for col, heap in enumerate(self._heaps):
                items = sorted(heap, key=lambda kv: (-kv[0][0], -kv[0][1]))
                for _, (marker, af, n_miss, r, t, p) in items:
                    fh.write(self._record_line(
                        marker, af, n_miss, self.phenotype_names[col], r, t, p
                    ))
                    self.records_written += 1
        return self.records_written


class FullMatrixWriter(_BaseWriter):
    """Dense binary t-matrix over non-skipped markers and phenotypes."""

    def __init__(self, path: Path, dtype, df: float, n: int,
                 counts_allele1: bool, phenotype_names: list[str]):
        super().__init__(df, n, counts_allele1, phenotype_names)
        self.path = Path(path)
        self.dtype = np.dtype(dtype)
        if self.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            raise PanelGwasError("FULL output supports float32/float64 only")
        self._fh = open(self.path, "wb")
        self._fh.write(_FULL_HEADER.pack(
            FULL_MAGIC, FULL_VERSION, 0, len(phenotype_names),
            self.dtype.itemsize,
        ))
        self._rows_written = 0
        self._marker_lines: list[str] = []

    def emit(self, batch: BatchStats) -> int:
        if batch.t_rows is None:
            return 0
        rows = np.ascontiguousarray(
            batch.t_rows, dtype=self.dtype.newbyteorder("<")
        )
        self._fh.write(rows.tobytes())
        self._rows_written += rows.shape[0]
        keep = batch.skip_reason == 0
        for row in np.nonzero(keep)[0]:
            marker = batch.markers[int(row)]
            a1, a2 = _marker_alleles(marker, self.counts_allele1)
            self._marker_lines.append(
                f"{marker.source_index}\t{marker.chrom}\t{marker.id}\t"
                f"{marker.pos}\t{a1}\t{a2}\t"
                f"{fmt_float(batch.allele_frequency[int(row)])}\t"
                f"{int(batch.missing_count[int(row)])}\n"
            )
        return 0

    def finalize(self) -> int:
        # patch the row count now that skips are known
        self._fh.seek(len(FULL_MAGIC) + 4)
        self._fh.write(struct.pack("<Q", self._rows_written))
        self._fh.close()
        markers_path = self.path.with_name(self.path.name + ".markers.tsv")
        with open(markers_path, "w") as fh:
            fh.write("SOURCE_INDEX\tCHR\tID\tPOS\tA1\tA2\tAF\tN_MISS\n")
            fh.writelines(self._marker_lines)
        pheno_path = self.path.with_name(self.path.name + ".phenotypes.txt")
        with open(pheno_path, "w") as fh:
            for name in self.phenotype_names:
                fh.write(name + "\n")
        self.records_written = self._rows_written * len(self.phenotype_names)
        return self.records_written


def read_full_matrix(path: Path) -> tuple[np.ndarray, list[str], list[str]]:
    """Read a FULL-mode file back: (t matrix, marker sidecar lines, phenotypes)."""
    path = Path(path)
    blob = path.read_bytes()
    magic, version, m, p, code = _FULL_HEADER.unpack_from(blob)
    if magic != FULL_MAGIC:
        raise PanelGwasError(f"{path}: bad FULL-output magic")
    if version != FULL_VERSION:
        raise PanelGwasError(f"{path}: unknown FULL-output version {version}")
    dtype = {4: np.dtype("<f4"), 8: np.dtype("<f8")}.get(code)
    if dtype is None:
        raise PanelGwasError(f"{path}: unknown element-type code {code}")
    data = np.frombuffer(blob, dtype=dtype, offset=_FULL_HEADER.size)
    if data.size != m * p:
        raise PanelGwasError(
            f"{path}: payload holds {data.size} elements, header says {m}x{p}"
        )
    markers = (
        path.with_name(path.name + ".markers.tsv").read_text().splitlines()[1:]
    )
    phenos = (
        path.with_name(path.name + ".phenotypes.txt").read_text().splitlines()
    )
    return data.reshape(int(m), int(p)), markers, phenos


def load_association_records(path: Path) -> list[AssocRecord]:
    """Parse a THRESHOLD/TOPK TSV back into records."""
    path = Path(path)
    records: list[AssocRecord] = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header) != TSV_COLUMNS:
            raise PanelGwasError(f"{path}: unexpected header {header}")
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != len(TSV_COLUMNS):
                raise PanelGwasError(
                    f"{path}:{lineno}: expected {len(TSV_COLUMNS)} columns"
                )
            try:
                records.append(AssocRecord(
                    chrom=parts[0], id=parts[1], pos=int(parts[2]),
                    counted_allele=parts[3], other_allele=parts[4],
                    af=float(parts[5]), missing_count=int(parts[6]),
                    n=int(parts[7]), df=int(parts[8]), r=float(parts[9]),
                    t=float(parts[10]), p=float(parts[11]),
                    phenotype=parts[12],
                ))
            except ValueError as exc:
                raise PanelGwasError(f"{path}:{lineno}: bad record: {exc}")
    return records
