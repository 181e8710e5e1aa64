"""Scoped BGEN v1.2 reader.

Supported subset: layout 2, zlib-compressed genotype blocks, diploid
unphased biallelic variants, 8- or 16-bit probability precision. Anything
else raises UnsupportedFeatureError naming the feature. Stored probability
order per variant is (hom allele1, het); P(hom allele2) is inferred, and the
dosage is the expected count of allele2: d = p_het + 2 * p_hom2.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError, UnsupportedFeatureError
from .types import (
    GenotypeFormat,
    MarkerRecord,
    RawBatch,
    check_unique_sample_ids,
    clamp_batch_count,
)

BGEN_MAGIC = b"bgen"

_COMPRESSION_NAMES = {0: "uncompressed blocks", 2: "zstd compression"}


def bgen_expected_dosage(p0: float, p1: float, p2: float) -> float:
    """Expected allele2 count from genotype probabilities (hom1, het, hom2)."""
    return p1 + 2.0 * p2


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated BGEN file while reading {what}")
    return data


@dataclass
class _VariantEntry:
    record: MarkerRecord
    payload_offset: int
    compressed_size: int


class BgenSource:
    """Batch reader over the supported BGEN v1.2 subset.

    Variant metadata and payload offsets are indexed at open time (no
    decompression); genotype blocks are inflated per batch read.
    """

    def __init__(self, path: Path, sample_ids: list[str] | None = None):
        self.path = Path(path)
        if not self.path.exists():
            raise FormatError(f"missing file: {self.path}")
        self.format = GenotypeFormat.BGEN
        self.counts_allele1 = False
        self._fh = open(self.path, "rb")
        try:
            self._parse_header(sample_ids)
            self._index_variants()
        except Exception:
            self._fh.close()
            raise

    def _parse_header(self, sidecar_ids: list[str] | None) -> None:
        fh = self._fh
        offset, header_len = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if header_len < 20:
            raise FormatError(f"{self.path}: header block too short")
        # header_len counts from the length field itself (already consumed)
        body = _read_exact(fh, header_len - 4, "header body")
        n_variants, n_samples = struct.unpack("<II", body[:8])
        magic = body[8:12]
        if magic != BGEN_MAGIC:
            raise FormatError(f"{self.path}: bad BGEN magic {magic!r}")
        flags = struct.unpack("<I", body[-4:])[0]
        compression = flags & 0b11
        layout = (flags >> 2) & 0b1111
        has_sample_ids = (flags >> 31) & 1
        if layout != 2:
            raise UnsupportedFeatureError(
                f"unsupported BGEN feature: layout {layout}"
            )
        if compression != 1:
            name = _COMPRESSION_NAMES.get(compression, f"compression flag {compression}")
            raise UnsupportedFeatureError(f"unsupported BGEN feature: {name}")
        self.n_markers = n_variants
        self.n_samples = n_samples

        embedded: list[str] | None = None
        if has_sample_ids:
            block_len, n_ids = struct.unpack(
                "<II", _read_exact(fh, 8, "sample block")
            )
            if n_ids != n_samples:
                raise FormatError(
                    f"{self.path}: sample block lists {n_ids} IDs, header "
                    f"says {n_samples}"
                )
            embedded = []
            for _ in range(n_ids):
                (id_len,) = struct.unpack("<H", _read_exact(fh, 2, "sample id"))
                embedded.append(
                    _read_exact(fh, id_len, "sample id").decode("utf-8")
                )
        if sidecar_ids is not None:
            if len(sidecar_ids) != n_samples:
                raise FormatError(
                    f"sample-id sidecar has {len(sidecar_ids)} IDs, BGEN "
                    f"header says {n_samples}"
                )
            self.sample_ids = list(sidecar_ids)
        elif embedded is not None:
            self.sample_ids = embedded
        else:
            raise FormatError(
                f"{self.path} carries no sample identifiers; provide a "
                "sample-id sidecar"
            )
        check_unique_sample_ids(self.sample_ids, str(self.path))
        self._variants_start = offset + 4

    def _index_variants(self) -> None:
        fh = self._fh
        file_size = self.path.stat().st_size
        fh.seek(self._variants_start)
        index: list[_VariantEntry] = []
        for i in range(self.n_markers):
            (id_len,) = struct.unpack("<H", _read_exact(fh, 2, "variant id"))
            var_id = _read_exact(fh, id_len, "variant id").decode("utf-8")
            (rsid_len,) = struct.unpack("<H", _read_exact(fh, 2, "rsid"))
            rsid = _read_exact(fh, rsid_len, "rsid").decode("utf-8")
            (chr_len,) = struct.unpack("<H", _read_exact(fh, 2, "chrom"))
            chrom = _read_exact(fh, chr_len, "chrom").decode("utf-8")
            pos, n_alleles = struct.unpack(
                "<IH", _read_exact(fh, 6, "variant info")
            )
            if n_alleles != 2:
                raise UnsupportedFeatureError(
                    f"unsupported BGEN feature: {n_alleles} alleles at "
                    f"variant {rsid or var_id}"
                )
            alleles = []
            for _ in range(2):
                (a_len,) = struct.unpack("<I", _read_exact(fh, 4, "allele"))
                alleles.append(_read_exact(fh, a_len, "allele").decode("utf-8"))
            (comp_len,) = struct.unpack(
                "<I", _read_exact(fh, 4, "genotype block size")
            )
            payload_offset = fh.tell()
            if payload_offset + comp_len > file_size:
                raise FormatError(
                    f"truncated BGEN file: variant {rsid or var_id} promises "
                    f"{comp_len} payload bytes past end of file"
                )
            record = MarkerRecord(
                chrom, rsid or var_id, pos, alleles[0], alleles[1], i
            )
            index.append(_VariantEntry(record, payload_offset, comp_len))
            fh.seek(payload_offset + comp_len)
        self._index = index
        self.marker_catalog = [e.record for e in index]

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "BgenSource":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _decode_variant(self, entry: _VariantEntry, out: np.ndarray) -> None:
        fh = self._fh
        fh.seek(entry.payload_offset)
        payload = _read_exact(fh, entry.compressed_size, "genotype block")
        if entry.compressed_size < 4:
            raise FormatError(f"{self.path}: genotype block too short")
        (uncomp_len,) = struct.unpack("<I", payload[:4])
        try:
            data = zlib.decompress(payload[4:])
        except zlib.error as exc:
            raise FormatError(
                f"{self.path}: zlib decompression failed at variant "
                f"{entry.record.id}: {exc}"
            )
        if len(data) != uncomp_len:
            raise FormatError(
                f"{self.path}: genotype block inflated to {len(data)} bytes, "
                f"expected {uncomp_len}"
            )
        n, k, p_min, p_max = struct.unpack("<IHBB", data[:8])
        if n != self.n_samples:
            raise FormatError(
                f"{self.path}: genotype block sample count {n} != header "
                f"{self.n_samples}"
            )
        if k != 2:
            raise UnsupportedFeatureError(
                f"unsupported BGEN feature: {k} alleles in genotype block"
            )
        if p_min != 2 or p_max != 2:
            raise UnsupportedFeatureError(
                f"unsupported BGEN feature: ploidy range {p_min}..{p_max}"
            )
        ploidy = np.frombuffer(data, dtype=np.uint8, count=n, offset=8)
        if np.any((ploidy & 0x3F) != 2):
            raise UnsupportedFeatureError(
                "unsupported BGEN feature: non-diploid sample"
            )
        phased, bits = struct.unpack_from("<BB", data, 8 + n)
        if phased != 0:
            raise UnsupportedFeatureError(
                "unsupported BGEN feature: phased probabilities"
            )
        if bits not in (8, 16):
            raise UnsupportedFeatureError(
                f"unsupported BGEN feature: {bits}-bit probabilities"
            )
        prob_offset = 8 + n + 2
        n_values = 2 * n
        expected = prob_offset + n_values * (bits // 8)
        if len(data) != expected:
            raise FormatError(
                f"{self.path}: genotype block is {len(data)} bytes, expected "
                f"{expected}"
            )
        dtype = np.uint8 if bits == 8 else np.dtype("<u2")
        values = np.frombuffer(
            data, dtype=dtype, count=n_values, offset=prob_offset
        ).reshape(n, 2)
        denom = float((1 << bits) - 1)
        p_hom1 = values[:, 0] / denom
        p_het = values[:, 1] / denom
        p_hom2 = 1.0 - p_hom1 - p_het
        # stored pair may round a hair above 1; inferred mass is never negative
        np.clip(p_hom2, 0.0, None, out=p_hom2)
        out[:] = p_het + 2.0 * p_hom2
        out[(ploidy & 0x80) != 0] = np.nan

    def read_marker_batch(
        self, start: int, count: int, dtype=np.float64
    ) -> RawBatch:
        """Inflate and decode markers [start, start + min(count, remaining))."""
        count = clamp_batch_count(start, count, self.n_markers)
        dosages = np.empty((count, self.n_samples), dtype=np.float64)
        for j in range(count):
            self._decode_variant(self._index[start + j], dosages[j])
        dosages = dosages.astype(dtype, copy=False)
        missing = np.isnan(dosages).sum(axis=1)
        markers = tuple(self.marker_catalog[start : start + count])
        return RawBatch(markers, dosages, missing)
