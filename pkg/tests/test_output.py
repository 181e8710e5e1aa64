import numpy as np
import pytest

from panelgwas import MarkerRecord, P_FLOOR, load_association_records
from panelgwas.output import BatchStats, FullMatrixWriter, TopKWriter, fmt_float


def stats_for(markers, t_by_col):
    m = len(markers)
    p = len(t_by_col[0])
    t = np.array(t_by_col, dtype=np.float64).reshape(m, p)
    rows, cols = np.nonzero(np.ones((m, p), dtype=bool))
    r = np.tanh(t / 10.0)  # any sign-consistent placeholder
    return BatchStats(
        markers=tuple(markers),
        allele_frequency=np.full(m, 0.5),
        missing_count=np.zeros(m, dtype=np.int64),
        skip_reason=np.zeros(m, dtype=np.int8),
        clamp_count=0,
        cand_rows=rows,
        cand_cols=cols,
        cand_r=r[rows, cols],
        cand_t=t[rows, cols],
    )


def marker(i):
    return MarkerRecord("1", f"snp{i + 1}", i + 1, "A", "B", i)


class TestTopKWriter:
    def test_tie_break_prefers_smaller_source_index(self, tmp_path):
        out = tmp_path / "top.tsv"
        writer = TopKWriter(out, top_k=3, df=10.0, n=12, counts_allele1=True,
                            phenotype_names=["ph1"])
        # batch 1: three markers, two with identical |t| (identical p)
        writer.emit(stats_for([marker(0), marker(1), marker(2)],
                              [[5.0], [5.0], [1.0]]))
        # batch 2: another p-tie at |t|=5 (src 3) and a stronger hit (src 4)
        writer.emit(stats_for([marker(3), marker(4)], [[-5.0], [9.0]]))
        writer.finalize()
        records = load_association_records(out)
        assert [r.id for r in records] == ["snp5", "snp1", "snp2"]
        ps = [r.p for r in records]
        assert ps == sorted(ps)
        assert ps[1] == ps[2]  # the surviving tie pair

    def test_floored_p_ties_ordered_by_source_index(self, tmp_path):
        out = tmp_path / "top.tsv"
        writer = TopKWriter(out, top_k=2, df=10.0, n=12, counts_allele1=True,
                            phenotype_names=["ph1"])
        writer.emit(stats_for([marker(0), marker(1), marker(2)],
                              [[np.inf], [-np.inf], [3.0]]))
        writer.emit(stats_for([marker(3)], [[np.inf]]))
        assert writer.finalize() == 2
        records = load_association_records(out)
        assert [r.id for r in records] == ["snp1", "snp2"]
        assert all(r.p == P_FLOOR for r in records)
        assert writer.p_underflow_count == 3

    def test_admission_bar_rises_monotonically(self, tmp_path):
        writer = TopKWriter(tmp_path / "o.tsv", top_k=2, df=10.0, n=12,
                            counts_allele1=True, phenotype_names=["ph1"])
        assert writer.worst_abs_t[0] == -np.inf
        writer.emit(stats_for([marker(0), marker(1)], [[2.0], [4.0]]))
        first_bar = writer.worst_abs_t[0]
        assert first_bar == 2.0
        writer.emit(stats_for([marker(2)], [[6.0]]))
        assert writer.worst_abs_t[0] == 4.0
        writer.finalize()

    def test_per_phenotype_independence(self, tmp_path):
        out = tmp_path / "top.tsv"
        writer = TopKWriter(out, top_k=1, df=10.0, n=12, counts_allele1=True,
                            phenotype_names=["ph1", "ph2"])
        writer.emit(stats_for([marker(0), marker(1)],
                              [[9.0, 1.0], [2.0, 7.0]]))
        writer.finalize()
        records = load_association_records(out)
        assert [(r.phenotype, r.id) for r in records] == [
            ("ph1", "snp1"), ("ph2", "snp2"),
        ]


class TestFullWriter:
    def test_header_patched_with_row_count(self, tmp_path):
        out = tmp_path / "full.bin"
        writer = FullMatrixWriter(out, np.float64, df=8.0, n=10,
                                  counts_allele1=True,
                                  phenotype_names=["a", "b"])
        batch = BatchStats(
            markers=(marker(0), marker(1)),
            allele_frequency=np.array([0.5, np.nan]),
            missing_count=np.zeros(2, dtype=np.int64),
            skip_reason=np.array([0, 2], dtype=np.int8),
            clamp_count=0,
            t_rows=np.array([[1.0, -2.0]]),
        )
        writer.emit(batch)
        assert writer.finalize() == 2
        from panelgwas import read_full_matrix
        t_matrix, markers, phenos = read_full_matrix(out)
        assert t_matrix.shape == (1, 2)
        assert len(markers) == 1 and markers[0].split("\t")[2] == "snp1"
        assert phenos == ["a", "b"]


def test_fmt_float_round_trips():
    values = [0.1, 1e-300, P_FLOOR, 1.0, -0.0, float("inf"), 2.0 / 3.0]
    for v in values:
        assert float(fmt_float(v)) == v or (v != v)
