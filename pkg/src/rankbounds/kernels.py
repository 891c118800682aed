"""Pairwise moment kernels for censored duration comparisons.

Two kernels drive everything downstream:

- the rank kernel, which compares the exceedance pattern of two observations
  against the ordering of their indices x'beta and always takes the value
  -1/2 or +1/2;
- the exceedance kernel, which compares survival past a target duration y
  against survival past the anchor duration y_tilde on index-gap regions and
  takes integer values in {-2, ..., 2}.

Censoring enters only through the implied Y1 (equal to y0 when the event is
observed, infinite when censored): a censored observation i forces
I[Y1i >= c] = 1 for every finite c. The infinite value is never materialized;
all comparisons branch on the censoring indicator.
"""

from __future__ import annotations

import numpy as np

from .data import Beta, Observation, Sample


def _index(x: tuple[float, ...] | np.ndarray, beta_vec: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != beta_vec.shape:
        raise ValueError(
            f"covariate dimension {x.shape} does not match parameter {beta_vec.shape}"
        )
    return float(x @ beta_vec)


def m_kernel(wi: Observation, wj: Observation, beta: Beta | np.ndarray) -> float:
    """Rank kernel: -1/2 + I[Y1i >= Y0j] I[xi'b >= xj'b] + I[Y1j > Y0i] I[xj'b > xi'b].

    Returns exactly -0.5 or +0.5. The two index indicators are complementary,
    so exactly one of the two product terms can be active. Tie conventions are
    asymmetric on purpose: >= in the first duration comparison, > in the
    second.
    """
    beta_vec = beta.vector if isinstance(beta, Beta) else np.asarray(beta, np.float64)
    xb_i = _index(wi.x, beta_vec)
    xb_j = _index(wj.x, beta_vec)
    ind1 = 1.0 if (wi.d == 0 or wi.y0 >= wj.y0) else 0.0   # I[Y1i >= Y0j]
    ind2 = 1.0 if (wj.d == 0 or wj.y0 > wi.y0) else 0.0    # I[Y1j > Y0i]
    return -0.5 + ind1 * (xb_i >= xb_j) + ind2 * (xb_j > xb_i)


def mdagger_kernel(
    wi: Observation,
    wj: Observation,
    beta: Beta | np.ndarray,
    y: float,
    t: float,
    y_tilde: float,
) -> float:
    """Exceedance kernel for joint index/transformation inference.

    (I[Y1i >= y] - I[Y0j >= y_tilde]) I[xi'b - xj'b >= t]
    + (I[Y1j >= y] - I[Y0i >= y_tilde]) I[xj'b - xi'b >= t],
    an integer in {-2, -1, 0, 1, 2}.
    """
    beta_vec = beta.vector if isinstance(beta, Beta) else np.asarray(beta, np.float64)
    xb_i = _index(wi.x, beta_vec)
    xb_j = _index(wj.x, beta_vec)
    e_i = 1.0 if (wi.d == 0 or wi.y0 >= y) else 0.0
    e_j = 1.0 if (wj.d == 0 or wj.y0 >= y) else 0.0
    f_i = 1.0 if wi.y0 >= y_tilde else 0.0
    f_j = 1.0 if wj.y0 >= y_tilde else 0.0
    term1 = (e_i - f_j) * (xb_i - xb_j >= t)
    term2 = (e_j - f_i) * (xb_j - xb_i >= t)
    return term1 + term2


class KernelWorkspace:
    """Per-sample cache of the duration-comparison matrices.

    The comparison matrices do not depend on beta, so a grid search pays for
    them once. rank_matrix then only evaluates the index ordering.
    """

    def __init__(self, sample: Sample):
        self.sample = sample
        y0 = sample.y0
        cens = sample.d == 0
        # geq[i, j] = I[Y1i >= Y0j]; gt[i, j] = I[Y1i > Y0j]
        self.geq = np.where(cens[:, None], 1.0, (y0[:, None] >= y0[None, :]))
        self.gt = np.where(cens[:, None], 1.0, (y0[:, None] > y0[None, :]))

    def index_values(self, beta_vec: np.ndarray) -> np.ndarray:
        return self.sample.X @ np.asarray(beta_vec, dtype=np.float64)

    def rank_matrix(self, beta_vec: np.ndarray) -> np.ndarray:
        """(n, n) matrix of rank-kernel values, zero diagonal."""
        xb = self.index_values(beta_vec)
        x_ge = xb[:, None] >= xb[None, :]
        # exactly one of I[xi'b >= xj'b], I[xj'b > xi'b] holds
        M = np.where(x_ge, self.geq, self.gt.T) - 0.5
        np.fill_diagonal(M, 0.0)
        return M

    def exceedance_matrix(
        self, beta_vec: np.ndarray, y: float, t: float, y_tilde: float
    ) -> np.ndarray:
        """(n, n) matrix of exceedance-kernel values, zero diagonal (symmetric)."""
        sample = self.sample
        xb = self.index_values(beta_vec)
        e = np.where(sample.d == 0, 1.0, (sample.y0 >= y).astype(np.float64))
        f = (sample.y0 >= y_tilde).astype(np.float64)
        region = (xb[:, None] - xb[None, :]) >= t
        half = (e[:, None] - f[None, :]) * region
        M = half + half.T
        np.fill_diagonal(M, 0.0)
        return M


def rank_kernel_matrix(sample: Sample, beta_vec: np.ndarray) -> np.ndarray:
    """Convenience wrapper when no workspace reuse is needed."""
    return KernelWorkspace(sample).rank_matrix(beta_vec)


def exceedance_kernel_matrix(
    sample: Sample, beta_vec: np.ndarray, y: float, t: float, y_tilde: float
) -> np.ndarray:
    return KernelWorkspace(sample).exceedance_matrix(beta_vec, y, t, y_tilde)
