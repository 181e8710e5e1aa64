from .bgen import BgenSource, bgen_expected_dosage
from .dense import DenseSource
from .plink import PlinkSource, decode_bed_codes
from .types import (
    MISSING,
    DenseOrientation,
    GenotypeFormat,
    MarkerRecord,
    RawBatch,
    SourceSpec,
    open_genotype_source,
    read_sample_id_sidecar,
)

__all__ = [
    "MISSING",
    "BgenSource",
    "DenseOrientation",
    "DenseSource",
    "GenotypeFormat",
    "MarkerRecord",
    "PlinkSource",
    "RawBatch",
    "SourceSpec",
    "bgen_expected_dosage",
    "decode_bed_codes",
    "open_genotype_source",
    "read_sample_id_sidecar",
]
