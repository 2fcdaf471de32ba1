"""Monte Carlo experiment scaffolding shared by the sbm and bicluster studies.

A study standardizes per-replicate estimation errors against the theoretical
asymptotic covariance, then reports the empirical mean and covariance of the
standardized errors, per-coordinate 95% interval coverage, and scaled MSE
tallies.  Replicates whose clustering step is not exactly recovered (or that
fail outright) are counted and excluded from the normality statistics, which
condition on strong consistency.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["MonteCarloSummary", "sqrt_psd", "invsqrt_pd", "summarize_replicates", "Z_975"]

# two-sided 95% normal quantile
Z_975 = 1.959963984540054


def sqrt_psd(M):
    """Symmetric PSD square root via eigendecomposition."""
    lam, V = np.linalg.eigh(0.5 * (M + M.T))
    lam = np.clip(lam, 0.0, None)
    return (V * np.sqrt(lam)) @ V.T


def invsqrt_pd(M, floor=1e-12):
    """Symmetric inverse square root; eigenvalues floored relative to the top."""
    lam, V = np.linalg.eigh(0.5 * (M + M.T))
    lam = np.clip(lam, floor * max(lam[-1], 0.0) + 1e-300, None)
    return (V / np.sqrt(lam)) @ V.T


@dataclass(frozen=True)
class MonteCarloSummary:
    """Aggregates for one study size.

    z holds the standardized errors of the included replicates only, one row
    per replicate.  rows carries every replicate's CSV-ready record in
    replicate order (excluded ones included, flagged).
    """

    n: int
    m: int | None
    replicates: int
    excluded: int
    z: np.ndarray = field(repr=False)
    mean: np.ndarray = field(repr=False)
    cov: np.ndarray = field(repr=False)
    cov_opnorm_dev_from_I: float = np.nan
    coverage: np.ndarray = field(default=None, repr=False)
    mean_mse_main: float = np.nan
    mean_mse_naive: float = np.nan
    rows: list = field(default_factory=list, repr=False)


def summarize_replicates(n, d, rows, m=None):
    """Build a MonteCarloSummary from per-replicate records.

    Each row is a dict with at least keys 'excluded_flag', 'z' (length-d
    array or None), 'mse_main', 'mse_naive'.
    """
    included = [
        row for row in rows if not row["excluded_flag"] and row["z"] is not None
    ]
    excluded = len(rows) - len(included)
    if included:
        z = np.vstack([row["z"] for row in included])
        mean = z.mean(axis=0)
        if z.shape[0] > 1:
            zc = z - mean
            cov = zc.T @ zc / (z.shape[0] - 1)
            dev = float(np.linalg.norm(cov - np.eye(d), 2))
        else:
            cov = np.full((d, d), np.nan)
            dev = np.nan
        coverage = np.mean(np.abs(z) <= Z_975, axis=0)
        mse_main = float(np.mean([row["mse_main"] for row in included]))
        mse_naive = float(np.mean([row["mse_naive"] for row in included]))
    else:
        z = np.zeros((0, d))
        mean = np.full(d, np.nan)
        cov = np.full((d, d), np.nan)
        dev = np.nan
        coverage = np.full(d, np.nan)
        mse_main = np.nan
        mse_naive = np.nan
    return MonteCarloSummary(
        n=n,
        m=m,
        replicates=len(rows),
        excluded=excluded,
        z=z,
        mean=mean,
        cov=cov,
        cov_opnorm_dev_from_I=dev,
        coverage=coverage,
        mean_mse_main=mse_main,
        mean_mse_naive=mse_naive,
        rows=list(rows),
    )
