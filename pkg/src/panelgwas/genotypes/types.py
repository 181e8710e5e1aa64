"""Shared genotype-source types and the format dispatch.

All readers present the same surface: sample IDs and a marker catalog are
available after opening (cheap, metadata only), dosage data is pulled on
demand in marker batches. Dosages are real values in [0, 2]; missing is NaN.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError

MISSING = np.nan


class GenotypeFormat(enum.Enum):
    PLINK_BED = "plink-bed"
    BGEN = "bgen"
    DENSE = "dense"


class DenseOrientation(enum.Enum):
    MARKERS_BY_SAMPLES = "markers-by-samples"
    SAMPLES_BY_MARKERS = "samples-by-markers"


@dataclass(frozen=True)
class MarkerRecord:
    """Identity and alleles of one biallelic variant."""

    chrom: str
    id: str
    pos: int
    allele1: str
    allele2: str
    source_index: int


@dataclass(frozen=True)
class RawBatch:
    """A decoded block of markers: (M, N) dosages plus per-marker metadata."""

    markers: tuple[MarkerRecord, ...]
    dosages: np.ndarray
    missing_count: np.ndarray

    @property
    def n_markers(self) -> int:
        return self.dosages.shape[0]

    @property
    def n_samples(self) -> int:
        return self.dosages.shape[1]


@dataclass(frozen=True)
class SourceSpec:
    """Where and how to open a genotype source.

    For PLINK, either `bfile` (prefix) or the three explicit paths must be
    given. DENSE requires `sample_id_path` (the NPY array carries no IDs);
    for BGEN the sidecar is optional and overrides embedded sample IDs.
    """

    format: GenotypeFormat
    bed_path: Path | None = None
    bim_path: Path | None = None
    fam_path: Path | None = None
    bgen_path: Path | None = None
    dense_path: Path | None = None
    sample_id_path: Path | None = None
    dense_orientation: DenseOrientation = DenseOrientation.MARKERS_BY_SAMPLES


def read_sample_id_sidecar(path: Path) -> list[str]:
    """Read a newline-delimited sample-ID file, skipping blank lines."""
    ids = [ln.strip() for ln in Path(path).read_text().splitlines()]
    ids = [s for s in ids if s]
    if not ids:
        raise FormatError(f"sample-id sidecar is empty: {path}")
    return ids


def check_unique_sample_ids(sample_ids: list[str], origin: str) -> None:
    seen: set[str] = set()
    for sid in sample_ids:
        if sid in seen:
            raise FormatError(f"duplicate sample ID {sid!r} in {origin}")
        seen.add(sid)


def clamp_batch_count(start: int, count: int, n_markers: int) -> int:
    if not 0 <= start < n_markers:
        raise ValueError(f"batch start {start} outside [0, {n_markers})")
    if count < 1:
        raise ValueError("batch count must be >= 1")
    return min(count, n_markers - start)


def open_genotype_source(spec: SourceSpec):
    """Open a genotype source described by `spec`.

    Returns a reader with `n_samples`, `n_markers`, `sample_ids`,
    `marker_catalog`, `counts_allele1` and `read_marker_batch(start, count)`.
    Only metadata is read here; dosage decoding is deferred to batch reads.
    """
    from . import bgen, dense, plink

    if spec.format is GenotypeFormat.PLINK_BED:
        if not (spec.bed_path and spec.bim_path and spec.fam_path):
            raise FormatError("PLINK source needs .bed, .bim and .fam paths")
        return plink.PlinkSource(spec.bed_path, spec.bim_path, spec.fam_path)
    if spec.format is GenotypeFormat.BGEN:
        if not spec.bgen_path:
            raise FormatError("BGEN source needs a .bgen path")
        sidecar = (
            read_sample_id_sidecar(spec.sample_id_path)
            if spec.sample_id_path
            else None
        )
        return bgen.BgenSource(spec.bgen_path, sample_ids=sidecar)
    if spec.format is GenotypeFormat.DENSE:
        if not spec.dense_path:
            raise FormatError("dense source needs an .npy path")
        if not spec.sample_id_path:
            raise FormatError("dense source needs a sample-id sidecar")
        return dense.DenseSource(
            spec.dense_path,
            read_sample_id_sidecar(spec.sample_id_path),
            orientation=spec.dense_orientation,
        )
    raise FormatError(f"unknown genotype format {spec.format!r}")
