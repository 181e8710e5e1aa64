import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from panelgwas import GenotypeFormat, SourceSpec, write_bed_trio


def write_tsv(path, ids, names, values, missing_token="NA"):
    values = np.asarray(values, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write("IID\t" + "\t".join(names) + "\n")
        for i, sid in enumerate(ids):
            cells = [
                missing_token if np.isnan(v) else repr(float(v))
                for v in values[i]
            ]
            fh.write(sid + "\t" + "\t".join(cells) + "\n")
    return path


@pytest.fixture
def make_plink_dataset(tmp_path):
    """Factory: write dosages + phenotypes (+ covariates) as files."""

    def _make(dosages, phenotypes, covariates=None, sample_ids=None,
              markers=None, subdir="data"):
        d = np.asarray(dosages, dtype=np.float64)
        y = np.asarray(phenotypes, dtype=np.float64)
        n = d.shape[1]
        assert y.shape[0] == n
        root = tmp_path / subdir
        root.mkdir(parents=True, exist_ok=True)
        if sample_ids is None:
            sample_ids = [f"S{i + 1}" for i in range(n)]
        bed, bim, fam = write_bed_trio(root / "geno", d, sample_ids, markers)
        pheno = write_tsv(
            root / "pheno.tsv", sample_ids,
            [f"ph{j + 1}" for j in range(y.shape[1])], y,
        )
        covar = None
        if covariates is not None:
            c = np.asarray(covariates, dtype=np.float64)
            covar = write_tsv(
                root / "covar.tsv", sample_ids,
                [f"cv{j + 1}" for j in range(c.shape[1])], c,
            )
        spec = SourceSpec(
            GenotypeFormat.PLINK_BED, bed_path=bed, bim_path=bim, fam_path=fam
        )
        return spec, pheno, covar, root

    return _make
