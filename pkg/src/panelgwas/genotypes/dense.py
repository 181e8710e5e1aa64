"""Dense NPY genotype source.

A 2-D float32/float64 array in NPY format, memory-mapped at open. The array
carries no identifiers, so sample IDs come from a sidecar and marker
metadata is synthesized (chrom "0", id "m<k>", pos k, alleles A/B; dosages
count the "A" allele). Orientation is declared by the caller; missing is NaN.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import FormatError
from .types import (
    DenseOrientation,
    GenotypeFormat,
    MarkerRecord,
    RawBatch,
    check_unique_sample_ids,
    clamp_batch_count,
)


class DenseSource:
    def __init__(
        self,
        path: Path,
        sample_ids: list[str],
        orientation: DenseOrientation = DenseOrientation.MARKERS_BY_SAMPLES,
    ):
        self.path = Path(path)
        if not self.path.exists():
            raise FormatError(f"missing file: {self.path}")
        try:
            arr = np.load(self.path, mmap_mode="r", allow_pickle=False)
        except ValueError as exc:
            raise FormatError(f"{self.path}: not a readable NPY array: {exc}")
        if arr.ndim != 2:
            raise FormatError(
                f"{self.path}: expected a 2-D array, got {arr.ndim}-D"
            )
        if arr.dtype not in (np.float32, np.float64):
            raise FormatError(
                f"{self.path}: expected float32/float64 elements, got "
                f"{arr.dtype}"
            )
        self._arr = arr
        self._markers_first = orientation is DenseOrientation.MARKERS_BY_SAMPLES
        n_markers, n_samples = (
            arr.shape if self._markers_first else arr.shape[::-1]
        )
        if len(sample_ids) != n_samples:
            raise FormatError(
                f"{self.path}: array implies {n_samples} samples but sidecar "
                f"lists {len(sample_ids)}"
            )
        check_unique_sample_ids(sample_ids, "sample-id sidecar")
        self.format = GenotypeFormat.DENSE
        self.counts_allele1 = True
        self.sample_ids = list(sample_ids)
        self.n_samples = n_samples
        self.n_markers = n_markers
        self.marker_catalog = [
            MarkerRecord("0", f"m{i + 1}", i + 1, "A", "B", i)
            for i in range(n_markers)
        ]

    def close(self) -> None:
        self._arr = None

    def __enter__(self) -> "DenseSource":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def read_marker_batch(
        self, start: int, count: int, dtype=np.float64
    ) -> RawBatch:
        count = clamp_batch_count(start, count, self.n_markers)
        if self._markers_first:
            block = self._arr[start : start + count, :]
        else:
            block = self._arr[:, start : start + count].T
        dosages = np.array(block, dtype=dtype)
        bad = ~np.isnan(dosages) & ((dosages < 0.0) | (dosages > 2.0))
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise FormatError(
                f"{self.path}: dosage {dosages[i, j]!r} at marker "
                f"{start + int(i)}, sample {int(j)} outside [0, 2]"
            )
        missing = np.isnan(dosages).sum(axis=1)
        markers = tuple(self.marker_catalog[start : start + count])
        return RawBatch(markers, dosages, missing)
