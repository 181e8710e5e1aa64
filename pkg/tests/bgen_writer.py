"""Minimal BGEN v1.2 writer for round-trip tests (layout 2, zlib).

Takes an (M, N) matrix of expected allele2 counts in [0, 2] (NaN missing)
and emits one variant block per row with unphased diploid probabilities at
8- or 16-bit precision. Knobs exist to deliberately produce files outside
the supported subset for error-path tests.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np


def dosage_to_probs(d: float) -> tuple[float, float, float]:
    """(p_hom1, p_het, p_hom2) with expected allele2 count d."""
    if d <= 1.0:
        return 1.0 - d, d, 0.0
    return 0.0, 2.0 - d, d - 1.0


def _quantize(p_hom1: float, p_het: float, denom: int) -> tuple[int, int]:
    v0 = int(round(p_hom1 * denom))
    v1 = int(round(p_het * denom))
    if v0 + v1 > denom:
        if v1 > 0:
            v1 -= v0 + v1 - denom
        else:
            v0 -= v0 + v1 - denom
    return v0, v1


def write_bgen(
    path: Path,
    dosages: np.ndarray,
    sample_ids: list[str],
    bits: int = 8,
    compression: int = 1,
    layout: int = 2,
    include_sample_ids: bool = True,
    n_alleles: int = 2,
    ploidy: int = 2,
    phased: int = 0,
    marker_ids: list[str] | None = None,
) -> Path:
    path = Path(path)
    d = np.asarray(dosages, dtype=np.float64)
    m, n = d.shape
    assert len(sample_ids) == n
    if marker_ids is None:
        marker_ids = [f"rs{i + 1}" for i in range(m)]

    sample_block = b""
    if include_sample_ids:
        ids = b"".join(
            struct.pack("<H", len(s.encode())) + s.encode() for s in sample_ids
        )
        sample_block = struct.pack("<II", 8 + len(ids), n) + ids

    header_len = 20
    offset = header_len + len(sample_block)
    flags = compression | (layout << 2) | ((1 if include_sample_ids else 0) << 31)
    blob = struct.pack("<IIII", offset, header_len, m, n)
    blob += b"bgen" + struct.pack("<I", flags)
    blob += sample_block

    denom = (1 << bits) - 1
    for i in range(m):
        vid = marker_ids[i].encode()
        blob += struct.pack("<H", len(vid)) + vid          # variant id
        blob += struct.pack("<H", len(vid)) + vid          # rsid
        chrom = b"1"
        blob += struct.pack("<H", len(chrom)) + chrom
        blob += struct.pack("<IH", i + 1, n_alleles)
        for allele in ("A", "B", "C")[:n_alleles]:
            a = allele.encode()
            blob += struct.pack("<I", len(a)) + a

        probs = bytearray()
        ploidy_bytes = bytearray()
        for j in range(n):
            value = d[i, j]
            if np.isnan(value):
                ploidy_bytes.append(ploidy | 0x80)
                v0 = v1 = 0
            else:
                ploidy_bytes.append(ploidy)
                v0, v1 = _quantize(*dosage_to_probs(value)[:2], denom)
            if bits == 8:
                probs += struct.pack("<BB", v0, v1)
            elif bits == 16:
                probs += struct.pack("<HH", v0, v1)
            else:
                # byte-pack anyway so unsupported-precision files parse far
                # enough to hit the feature check
                probs += struct.pack("<BB", min(v0, 255), min(v1, 255))
        data = struct.pack("<IHBB", n, n_alleles, ploidy, ploidy)
        data += bytes(ploidy_bytes)
        data += struct.pack("<BB", phased, bits)
        data += bytes(probs)
        if compression == 1:
            comp = zlib.compress(data)
            blob += struct.pack("<I", len(comp) + 4)
            blob += struct.pack("<I", len(data))
            blob += comp
        else:
            blob += struct.pack("<I", len(data) + 4)
            blob += struct.pack("<I", len(data))
            blob += data
    path.write_bytes(blob)
    return path
