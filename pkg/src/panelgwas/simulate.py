"""Synthetic cohort generation and the PLINK trio writer.

Genotypes are drawn per marker as binomial(2, AF) with AF uniform over the
configured range; phenotypes are covariate effects plus sparse causal
marker effects plus Gaussian noise. Everything is deterministic for a
fixed seed, and the cohort is written through this module's own PLINK
writer, which doubles as the round-trip fixture for the .bed reader.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, PanelGwasError
from .genotypes.types import MarkerRecord
from .output import fmt_float

BED_HEADER = b"\x6c\x1b\x01"

# dosage -> 2-bit code (counted allele is allele1)
_DOSAGE_CODE = {2.0: 0b00, 1.0: 0b10, 0.0: 0b11}
_MISSING_CODE = 0b01


@dataclass(frozen=True)
class SimSpec:
    """Knobs for one synthetic cohort."""

    seed: int
    n_samples: int
    n_markers: int
    n_phenotypes: int
    n_covariates: int = 0
    causal_fraction: float = 0.0
    effect_sd: float = 0.1
    noise_sd: float = 1.0
    covariate_effect_sd: float = 0.1
    genotype_missing_rate: float = 0.0
    phenotype_missing_rate: float = 0.0
    af_range: tuple[float, float] = (0.05, 0.95)

    def __post_init__(self) -> None:
        if min(self.n_samples, self.n_markers, self.n_phenotypes) < 1:
            raise ConfigError("sample/marker/phenotype counts must be >= 1")
        if self.n_covariates < 0:
            raise ConfigError("n_covariates must be >= 0")
        for name, rate in (
            ("causal_fraction", self.causal_fraction),
            ("genotype_missing_rate", self.genotype_missing_rate),
            ("phenotype_missing_rate", self.phenotype_missing_rate),
        ):
            if not 0.0 <= rate < 1.0 and not (
                name == "causal_fraction" and rate == 1.0
            ):
                raise ConfigError(f"{name} must be in [0, 1)")
        lo, hi = self.af_range
        if not (0.0 < lo <= hi < 1.0):
            raise ConfigError("af_range must satisfy 0 < low <= high < 1")
        if min(self.effect_sd, self.noise_sd, self.covariate_effect_sd) < 0:
            raise ConfigError("effect/noise scales must be >= 0")


@dataclass(frozen=True)
class SimulatedCohort:
    """Paths of one written cohort."""

    prefix: Path
    bed_path: Path
    bim_path: Path
    fam_path: Path
    pheno_path: Path
    covar_path: Path | None
    truth_path: Path
    spec: SimSpec


def pack_bed_codes(dosages: np.ndarray) -> np.ndarray:
    """Pack an (M, N) hard-call dosage matrix into .bed marker rows.

    Accepts integer or float input; NaN (float input only) is the missing
    code. Kept allocation-lean so large simulated cohorts pack in place.
    """
    d = np.asarray(dosages)
    codes = np.full(d.shape, _MISSING_CODE, dtype=np.uint8)
    matched = np.isnan(d) if d.dtype.kind == "f" else np.zeros(d.shape, bool)
    for value, code in _DOSAGE_CODE.items():
        hit = d == value
        codes[hit] = code
        matched |= hit
    if not matched.all():
        i, j = np.argwhere(~matched)[0]
        raise PanelGwasError(
            f"dosage {d[i, j]!r} at ({int(i)}, {int(j)}) is not a hard call "
            "(0, 1, 2 or missing); cannot encode as .bed"
        )
    m, n = d.shape
    width = 4 * ((n + 3) // 4)
    if width != n:
        padded = np.zeros((m, width), dtype=np.uint8)
        padded[:, :n] = codes
        codes = padded
    quads = codes.reshape(m, -1, 4)
    return (
        quads[:, :, 0]
        | (quads[:, :, 1] << 2)
        | (quads[:, :, 2] << 4)
        | (quads[:, :, 3] << 6)
    ).astype(np.uint8)


def write_bed_trio(
    prefix: Path,
    dosages: np.ndarray,
    sample_ids: list[str],
    markers: list[MarkerRecord] | None = None,
) -> tuple[Path, Path, Path]:
    """Write dosages (allele1 counts, NaN = missing) as a .bed/.bim/.fam trio."""
    prefix = Path(prefix)
    d = np.asarray(dosages)
    m, n = d.shape
    if len(sample_ids) != n:
        raise PanelGwasError(
            f"{len(sample_ids)} sample IDs for {n} dosage columns"
        )
    if markers is None:
        markers = [
            MarkerRecord("1", f"snp{i + 1}", i + 1, "A", "B", i)
            for i in range(m)
        ]
    if len(markers) != m:
        raise PanelGwasError(f"{len(markers)} marker records for {m} rows")
    bed = prefix.with_suffix(".bed")
    bim = prefix.with_suffix(".bim")
    fam = prefix.with_suffix(".fam")
    with open(bed, "wb") as fh:
        fh.write(BED_HEADER)
        fh.write(pack_bed_codes(d).tobytes())
    with open(bim, "w") as fh:
        for rec in markers:
            fh.write(
                f"{rec.chrom}\t{rec.id}\t0\t{rec.pos}\t{rec.allele1}\t"
                f"{rec.allele2}\n"
            )
    with open(fam, "w") as fh:
        for sid in sample_ids:
            fh.write(f"{sid} {sid} 0 0 0 -9\n")
    return bed, bim, fam


def _write_table(
    path: Path, ids: list[str], names: list[str], values: np.ndarray
) -> None:
    with open(path, "w") as fh:
        fh.write("IID\t" + "\t".join(names) + "\n")
        for i, sid in enumerate(ids):
            cells = (
                "NA" if np.isnan(v) else fmt_float(v) for v in values[i]
            )
            fh.write(sid + "\t" + "\t".join(cells) + "\n")


def simulate_cohort(spec: SimSpec, out_dir: Path) -> SimulatedCohort:
    """Draw one cohort and write it to disk (PLINK trio, tables, truth).

    Draw order is fixed (allele frequencies, genotypes, covariates,
    covariate effects, per-phenotype causal sets, noise, then missingness
    masks) so a fixed seed reproduces byte-identical files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    m, n, p = spec.n_markers, spec.n_samples, spec.n_phenotypes

    af = rng.uniform(spec.af_range[0], spec.af_range[1], size=m)
    # drawn in fixed 4096-marker slabs to bound the int64 temporary
    genotypes = np.empty((m, n), dtype=np.int8)
    for s in range(0, m, 4096):
        e = min(s + 4096, m)
        genotypes[s:e] = rng.binomial(2, af[s:e, None], size=(e - s, n))

    covar = None
    gamma = None
    if spec.n_covariates:
        covar = rng.standard_normal((n, spec.n_covariates))
        gamma = (
            rng.standard_normal((spec.n_covariates, p))
            * spec.covariate_effect_sd
        )

    y = np.zeros((n, p))
    truth_rows: list[str] = []
    pheno_names = [f"ph{j + 1}" for j in range(p)]
    if spec.causal_fraction > 0.0:
        for j in range(p):
            causal = np.nonzero(rng.random(m) < spec.causal_fraction)[0]
            if causal.size == 0:
                continue
            betas = rng.standard_normal(causal.size) * spec.effect_sd
            y[:, j] += genotypes[causal].astype(np.float64).T @ betas
            for idx, beta in zip(causal, betas):
                truth_rows.append(
                    f"snp{int(idx) + 1}\t{pheno_names[j]}\t{fmt_float(beta)}\n"
                )
    if covar is not None:
        y += covar @ gamma
    y += rng.standard_normal((n, p)) * spec.noise_sd

    if spec.phenotype_missing_rate > 0.0:
        y[rng.random((n, p)) < spec.phenotype_missing_rate] = np.nan

    if spec.genotype_missing_rate > 0.0:
        dosages = genotypes.astype(np.float64)
        dosages[rng.random((m, n)) < spec.genotype_missing_rate] = np.nan
    else:
        dosages = genotypes

    sample_ids = [f"S{i + 1}" for i in range(n)]
    prefix = out_dir / "cohort"
    bed, bim, fam = write_bed_trio(prefix, dosages, sample_ids)
    pheno_path = out_dir / "pheno.tsv"
    _write_table(pheno_path, sample_ids, pheno_names, y)
    covar_path = None
    if covar is not None:
        covar_path = out_dir / "covar.tsv"
        covar_names = [f"cv{j + 1}" for j in range(spec.n_covariates)]
        _write_table(covar_path, sample_ids, covar_names, covar)
    truth_path = out_dir / "truth.tsv"
    with open(truth_path, "w") as fh:
        fh.write("MARKER\tPHENO\tBETA\n")
        fh.writelines(truth_rows)
    return SimulatedCohort(
        prefix, bed, bim, fam, pheno_path, covar_path, truth_path, spec
    )
