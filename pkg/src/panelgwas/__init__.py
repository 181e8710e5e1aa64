"""panelgwas: batched linear association scans over phenotype panels.

Preprocess a phenotype panel once (covariate residualization +
standardization), then stream genotype batches through a correlation ->
t-statistic -> p-value kernel that scores every phenotype simultaneously.
"""

from .engine import (
    DfMode,
    OutputMode,
    Precision,
    ScanConfig,
    ScanSummary,
    plan_batches,
    run_scan,
)
from .errors import ConfigError, FormatError, PanelGwasError, UnsupportedFeatureError
from .genotypes import (
    BgenSource,
    DenseOrientation,
    DenseSource,
    GenotypeFormat,
    MarkerRecord,
    PlinkSource,
    RawBatch,
    SourceSpec,
    bgen_expected_dosage,
    decode_bed_codes,
    open_genotype_source,
)
from .kernel import (
    P_FLOOR,
    CovariateBasis,
    SkipReason,
    StandardizedBatch,
    StatBlock,
    build_covariate_basis,
    compute_stats,
    correlate,
    p_from_t,
    prepare_genotype_batch,
    reg_inc_beta,
    residualize,
    standardize_columns,
    t_from_r,
    t_threshold_for_p,
)
from .oracle import ConcordanceReport, OlsResult, concordance_report, ols_single
from .output import AssocRecord, load_association_records, read_full_matrix
from .phenotypes import (
    MissingPolicy,
    PanelState,
    PhenotypePanel,
    SampleAlignment,
    Table,
    align_samples,
    build_panel,
    covariate_matrix,
    load_table,
    read_id_list,
)
from .simulate import SimSpec, SimulatedCohort, simulate_cohort, write_bed_trio

__version__ = "0.1.0"

__all__ = [
    "AssocRecord",
    "BgenSource",
    "ConcordanceReport",
    "ConfigError",
    "CovariateBasis",
    "DenseOrientation",
    "DenseSource",
    "DfMode",
    "FormatError",
    "GenotypeFormat",
    "MarkerRecord",
    "MissingPolicy",
    "OlsResult",
    "OutputMode",
    "P_FLOOR",
    "PanelGwasError",
    "PanelState",
    "PhenotypePanel",
    "PlinkSource",
    "Precision",
    "RawBatch",
    "SampleAlignment",
    "ScanConfig",
    "ScanSummary",
    "SimSpec",
    "SimulatedCohort",
    "SkipReason",
    "SourceSpec",
    "StandardizedBatch",
    "StatBlock",
    "Table",
    "UnsupportedFeatureError",
    "align_samples",
    "bgen_expected_dosage",
    "build_covariate_basis",
    "build_panel",
    "compute_stats",
    "concordance_report",
    "correlate",
    "covariate_matrix",
    "decode_bed_codes",
    "load_association_records",
    "load_table",
    "ols_single",
    "open_genotype_source",
    "p_from_t",
    "plan_batches",
    "prepare_genotype_batch",
    "read_full_matrix",
    "read_id_list",
    "reg_inc_beta",
    "residualize",
    "run_scan",
    "simulate_cohort",
    "standardize_columns",
    "t_from_r",
    "t_threshold_for_p",
    "write_bed_trio",
]
