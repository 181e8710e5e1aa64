"""PLINK .bed/.bim/.fam reader.

SNP-major .bed layout: 3 header bytes (0x6C 0x1B, then mode 0x01), followed
by ceil(N/4) bytes per marker. Each byte packs four samples, low bit-pair
first. Two-bit codes: 00 -> 2.0 (hom allele1), 10 -> 1.0 (het),
11 -> 0.0 (hom allele2), 01 -> missing. Dosage counts allele1, the fifth
.bim column.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .types import (
    GenotypeFormat,
    MarkerRecord,
    RawBatch,
    check_unique_sample_ids,
    clamp_batch_count,
)

logger = logging.getLogger(__name__)

BED_MAGIC = b"\x6c\x1b"
BED_MODE_SNP_MAJOR = 0x01

_CODE_TO_DOSAGE = (2.0, np.nan, 1.0, 0.0)


def _build_decode_table(dtype) -> np.ndarray:
    # table[byte] -> dosages of the 4 samples packed in that byte
    table = np.empty((256, 4), dtype=dtype)
    for byte in range(256):
        for slot in range(4):
            table[byte, slot] = _CODE_TO_DOSAGE[(byte >> (2 * slot)) & 0b11]
    return table


_DECODE_F64 = _build_decode_table(np.float64)
_DECODE_F32 = _build_decode_table(np.float32)


def decode_bed_codes(packed: bytes | np.ndarray, n_samples: int) -> np.ndarray:
    """Decode one marker's packed 2-bit codes into a float64 dosage row.

    `packed` must hold exactly ceil(n_samples / 4) bytes; padding bits past
    n_samples are ignored.
    """
    raw = np.frombuffer(bytes(packed), dtype=np.uint8)
    expect = (n_samples + 3) // 4
    if raw.size != expect:
        raise FormatError(
            f"packed row has {raw.size} bytes, expected {expect} for "
            f"{n_samples} samples"
        )
    return _DECODE_F64[raw].reshape(-1)[:n_samples].copy()


def _parse_bim(path: Path) -> list[MarkerRecord]:
    markers: list[MarkerRecord] = []
    dup_allele = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise FormatError(
                    f"{path}:{lineno}: expected 6 columns, found {len(parts)}"
                )
            chrom, marker_id, _cm, pos_s, a1, a2 = parts
            try:
                pos = int(pos_s)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad position {pos_s!r}")
            if pos < 0:
                raise FormatError(f"{path}:{lineno}: negative position {pos}")
            if a1 == a2:
                dup_allele += 1
            markers.append(
                MarkerRecord(chrom, marker_id, pos, a1, a2, len(markers))
            )
    if dup_allele:
        logger.warning(
            "%s: %d markers with identical alleles", path, dup_allele
        )
    return markers


def _parse_fam(path: Path) -> list[str]:
    ids: list[str] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise FormatError(
                    f"{path}:{lineno}: expected 6 columns, found {len(parts)}"
                )
            ids.append(parts[1])
    return ids


@dataclass
class PlinkSource:
    """Sequential batch reader over a PLINK .bed/.bim/.fam trio."""

    bed_path: Path
    bim_path: Path
    fam_path: Path

    def __post_init__(self) -> None:
        self.bed_path = Path(self.bed_path)
        self.bim_path = Path(self.bim_path)
        self.fam_path = Path(self.fam_path)
        for p in (self.bed_path, self.bim_path, self.fam_path):
            if not p.exists():
                raise FormatError(f"missing file: {p}")
        self.format = GenotypeFormat.PLINK_BED
        self.counts_allele1 = True
        self.sample_ids = _parse_fam(self.fam_path)
        check_unique_sample_ids(self.sample_ids, str(self.fam_path))
        self.marker_catalog = _parse_bim(self.bim_path)
        self.n_samples = len(self.sample_ids)
        self.n_markers = len(self.marker_catalog)
        self._bytes_per_marker = (self.n_samples + 3) // 4

        with open(self.bed_path, "rb") as fh:
            header = fh.read(3)
        if len(header) < 3 or header[:2] != BED_MAGIC:
            raise FormatError(f"{self.bed_path}: bad .bed magic bytes")
        if header[2] == 0x00:
            raise FormatError(
                f"{self.bed_path}: unsupported sample-major layout"
            )
        if header[2] != BED_MODE_SNP_MAJOR:
            raise FormatError(
                f"{self.bed_path}: unknown .bed mode byte 0x{header[2]:02x}"
            )
        expected = 3 + self.n_markers * self._bytes_per_marker
        actual = self.bed_path.stat().st_size
        if actual != expected:
            raise FormatError(
                f"{self.bed_path}: file is {actual} bytes but .bim/.fam imply "
                f"{expected} (markers={self.n_markers}, "
                f"samples={self.n_samples})"
            )
        self._fh = open(self.bed_path, "rb")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "PlinkSource":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def read_marker_batch(
        self, start: int, count: int, dtype=np.float64
    ) -> RawBatch:
        """Decode markers [start, start + min(count, remaining)) in file order."""
        count = clamp_batch_count(start, count, self.n_markers)
        bpm = self._bytes_per_marker
        self._fh.seek(3 + start * bpm)
        payload = self._fh.read(count * bpm)
        if len(payload) != count * bpm:
            raise FormatError(
                f"{self.bed_path}: truncated read at marker {start}"
            )
        raw = np.frombuffer(payload, dtype=np.uint8).reshape(count, bpm)
        table = _DECODE_F32 if dtype == np.float32 else _DECODE_F64
        dosages = table[raw].reshape(count, -1)[:, : self.n_samples]
        dosages = np.ascontiguousarray(dosages)
        missing = np.isnan(dosages).sum(axis=1)
        markers = tuple(self.marker_catalog[start : start + count])
        return RawBatch(markers, dosages, missing)
