"""A walk through the numerical pipeline on a tiny hand-checkable example.

Four samples, one covariate, one marker, one phenotype; every intermediate
is small enough to verify on paper.
"""

import numpy as np

from panelgwas import (
    MarkerRecord,
    RawBatch,
    build_covariate_basis,
    compute_stats,
    prepare_genotype_batch,
    residualize,
    standardize_columns,
)

# one covariate on four samples
covariate = np.array([1.0, 2.0, 3.0, 4.0])
basis = build_covariate_basis(covariate[:, None], column_names=["age"])
print("covariate basis columns:", basis.source_columns)
print("Q^T Q =\n", np.round(basis.q.T @ basis.q, 12))

# a phenotype; residualizing removes everything the covariate explains
y = np.array([1.0, 3.0, 2.0, 4.0])[:, None]
y_res = residualize(y, basis)
print("\nresiduals after projecting off [1, age]:", y_res[:, 0])
print("(simple regression of y on age fits slope 0.8, intercept 0.5,")
print(" so the residuals are y - (1.3, 2.1, 2.9, 3.7))")

y_std, sd, zero_variance = standardize_columns(y_res)
print("\nstandardized phenotype (unit 1/N variance):", np.round(y_std[:, 0], 6))
print("column sd:", sd[0], " zero-variance flag:", bool(zero_variance[0]))

# one marker with a missing call; missing entries impute to the marker mean
dosages = np.array([[0.0, np.nan, 2.0, 1.0]])
marker = MarkerRecord("1", "snp1", 1, "A", "B", 0)
raw = RawBatch((marker,), dosages, np.isnan(dosages).sum(axis=1))
std = prepare_genotype_batch(raw)
print("\nmarker allele frequency:", std.allele_frequency[0])
print("standardized marker row:", np.round(std.matrix[0], 6))

# correlation -> t -> p for the (marker, phenotype) pair
stats = compute_stats(std.matrix, y_std, df=2.0)
print("\nr =", stats.r[0, 0])
print("t =", stats.t[0, 0], " (r * sqrt(df / (1 - r^2)))")
print("p =", stats.p[0, 0], " (two-sided)")
