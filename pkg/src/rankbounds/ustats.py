"""Order-2 and order-3 U-statistics over instrumented pair kernels.

Given a pair kernel value matrix M (zero diagonal) and an instrument g, the
building blocks are

    mbar(g)  = [n(n-1)]^{-1} sum_{i != j} M[i,j] g(x_i, x_j)
    h2hat(g, g*) = [n(n-1)(n-2)]^{-1} sum_{i != j != k} m(i,j;g) m(i,k;g*)
                   - mbar(g) mbar(g*)

with m(i,j;g) = M[i,j] g(x_i,x_j). The order-3 sum collapses to an O(n^2)
expression through row sums:

    sum_{j != i, k != i, k != j} m(i,j;g) m(i,k;g*)
        = S_i(g) S_i(g*) - sum_{j != i} m(i,j;g) m(i,j;g*),
    S_i(g) = sum_{j != i} m(i,j;g).

Scalar entry points accept a single instrument (several spellings, see
_pair_weights); the batched helpers work on the one-hot cell membership
matrix Phi and evaluate whole instrument families at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import Beta, Sample
from .instruments import InstrumentCoordinates, InstrumentIndex, instrument_indicator
from .kernels import KernelWorkspace

# Kahan-compensated reductions kick in past this many observations; below it
# numpy's pairwise summation is already deterministic and accurate.
KAHAN_THRESHOLD = 10_000


def kahan_colsum(A: np.ndarray) -> np.ndarray:
    """Compensated column sums with a fixed ascending row order."""
    total = np.zeros(A.shape[1:], dtype=np.float64)
    comp = np.zeros_like(total)
    for i in range(A.shape[0]):
        y = A[i] - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def _colsum(A: np.ndarray) -> np.ndarray:
    if A.shape[0] > KAHAN_THRESHOLD:
        return kahan_colsum(A)
    return A.sum(axis=0)


def _beta_vector(beta: Beta | np.ndarray) -> np.ndarray:
    return beta.vector if isinstance(beta, Beta) else np.asarray(beta, np.float64)


def _pair_weights(
    sample: Sample,
    g: InstrumentIndex | Callable | np.ndarray | None,
    coords: InstrumentCoordinates | None,
) -> np.ndarray | None:
    """Resolve an instrument argument to an (n, n) weight matrix.

    None means g identically 1 (returned as None so callers can skip the
    multiply). An ndarray is used as-is. A callable is evaluated on raw
    covariate row pairs. An InstrumentIndex needs the transformed coordinates.
    """
    if g is None:
        return None
    if isinstance(g, np.ndarray):
        if g.shape != (sample.n, sample.n):
            raise ValueError(
                f"instrument weight matrix has shape {g.shape}, expected {(sample.n, sample.n)}"
            )
        return g.astype(np.float64, copy=False)
    if isinstance(g, InstrumentIndex):
        if coords is None:
            raise TypeError(
                "an InstrumentIndex instrument needs coords= (see instrument_coordinates)"
            )
        n = sample.n
        G = np.empty((n, n), dtype=np.float64)
        for i in range(n):
            for j in range(n):
                G[i, j] = instrument_indicator(g, coords.row(i), coords.row(j))
        return G
    if callable(g):
        n = sample.n
        G = np.empty((n, n), dtype=np.float64)
        for i in range(n):
            for j in range(n):
                G[i, j] = g(sample.X[i], sample.X[j])
        return G
    raise TypeError(f"unsupported instrument spelling: {type(g).__name__}")


def _kernel_matrix(
    sample: Sample,
    beta: Beta | np.ndarray,
    kernel_matrix: np.ndarray | None,
    workspace: KernelWorkspace | None,
) -> np.ndarray:
    if kernel_matrix is not None:
        if kernel_matrix.shape != (sample.n, sample.n):
            raise ValueError("kernel matrix shape does not match the sample")
        return kernel_matrix
    ws = workspace if workspace is not None else KernelWorkspace(sample)
    return ws.rank_matrix(_beta_vector(beta))


def mbar(
    sample: Sample,
    beta: Beta | np.ndarray,
    g: InstrumentIndex | Callable | np.ndarray | None = None,
    *,
    coords: InstrumentCoordinates | None = None,
    kernel_matrix: np.ndarray | None = None,
    workspace: KernelWorkspace | None = None,
) -> float:
    """Mean of the instrumented kernel over all ordered pairs i != j."""
    n = sample.n
    if n < 2:
        raise ValueError(f"mbar needs at least 2 observations, got {n}")
    M = _kernel_matrix(sample, beta, kernel_matrix, workspace)
    G = _pair_weights(sample, g, coords)
    MG = M if G is None else M * G
    # fixed row-major order; fsum keeps the reduction compensated
    total = math.fsum(_colsum(MG))
    return total / (n * (n - 1))


def h2hat(
    sample: Sample,
    beta: Beta | np.ndarray,
    g: InstrumentIndex | Callable | np.ndarray | None = None,
    g_star: InstrumentIndex | Callable | np.ndarray | None = None,
    *,
    coords: InstrumentCoordinates | None = None,
    kernel_matrix: np.ndarray | None = None,
    kernel_matrix_star: np.ndarray | None = None,
    workspace: KernelWorkspace | None = None,
) -> float:
    """Order-3 covariance kernel between instruments g and g_star.

    Computed through the row-sum identity in O(n^2). The triple sum is over
    ordered (i, j, k) with j != i, k != i, k != j. A second kernel matrix can
    be supplied for cross-kernel covariances (beta block vs duration blocks).
    """
    n = sample.n
    if n < 3:
        raise ValueError(f"h2hat needs at least 3 observations, got {n}")
    M_a = _kernel_matrix(sample, beta, kernel_matrix, workspace)
    M_b = M_a if kernel_matrix_star is None else _kernel_matrix(
        sample, beta, kernel_matrix_star, workspace
    )
    G_a = _pair_weights(sample, g, coords)
    G_b = _pair_weights(sample, g_star, coords)
    A = M_a if G_a is None else M_a * G_a
    B = M_b if G_b is None else M_b * G_b
    S_a = A.sum(axis=1)
    S_b = B.sum(axis=1)
    t1 = math.fsum(S_a * S_b)
    t2 = math.fsum(_colsum(A * B))
    mbar_a = math.fsum(_colsum(A)) / (n * (n - 1))
    mbar_b = math.fsum(_colsum(B)) / (n * (n - 1))
    return (t1 - t2) / (n * (n - 1) * (n - 2)) - mbar_a * mbar_b


def modified_variance(sigma2, epsilon: float, overall):
    """Floor the raw variance estimate at zero, then add the epsilon term.

    The order-3 variance U-statistic dips below zero on sparse instruments
    (a cell pair carried by a single observation pair gives exactly -mbar^2),
    so the raw estimate is clipped before regularizing. This keeps the
    modified variance at or above epsilon times the overall variance, which
    is what makes every informative moment usable in the standardization.
    """
    return np.maximum(sigma2, 0.0) + epsilon * np.maximum(overall, 0.0)


def sigma_bar2(
    sample: Sample,
    beta: Beta | np.ndarray,
    g: InstrumentIndex | Callable | np.ndarray | None,
    epsilon: float,
    *,
    coords: InstrumentCoordinates | None = None,
    kernel_matrix: np.ndarray | None = None,
    workspace: KernelWorkspace | None = None,
) -> float:
    """Regularized variance: max(h2hat(g, g), 0) + epsilon * h2hat(1, 1)."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    own = h2hat(
        sample, beta, g, g,
        coords=coords, kernel_matrix=kernel_matrix, workspace=workspace,
    )
    overall = h2hat(
        sample, beta, None, None,
        kernel_matrix=kernel_matrix, workspace=workspace,
    )
    return float(modified_variance(own, epsilon, overall))


@dataclass
class MomentStats:
    """Per-instrument U-statistic summaries for one kernel block.

    mbar, sigma2 and sigma_bar2 are (G,) arrays; row_sums is the (n, G)
    matrix of S_i(g) kept for covariance-kernel evaluation; the overall
    entries are the g == 1 statistics that seed the regularization.
    """

    mbar: np.ndarray
    sigma2: np.ndarray
    sigma_bar2: np.ndarray
    row_sums: np.ndarray
    mbar_overall: float
    sigma2_overall: float


# ---------------------------------------------------------------------------
# Batched family evaluation.
#
# Phi is the (n, C) one-hot marginal-cell membership matrix; an instrument g
# is the ordered cell pair (first[g], second[g]). Everything reduces to dense
# products with Phi.
# ---------------------------------------------------------------------------


def row_stat_matrix(
    M: np.ndarray, Phi: np.ndarray, first: np.ndarray, second: np.ndarray
) -> np.ndarray:
    """(n, G) matrix of row sums S_i(g) = Phi[i, c_g] * (M Phi)[i, ct_g]."""
    S = M @ Phi
    return Phi[:, first] * S[:, second]


def mbar_vector(A: np.ndarray, n: int) -> np.ndarray:
    return _colsum(A) / (n * (n - 1))


def t2_rank(
    N: np.ndarray, BtB: np.ndarray, first: np.ndarray, second: np.ndarray
) -> np.ndarray:
    """T2 block for the rank kernel, whose squared entries are 1/4 off-diagonal.

    T2[g,g*] = sum_{i != j} M[i,j]^2 Phi[i,c_g] Phi[i,c_g*] Phi[j,ct_g] Phi[j,ct_g*]
             = 0.25 * (N[c_g,c_g*] N[ct_g,ct_g*] - (B^T B)[g,g*])

    with N = Phi^T Phi and B[:,g] = Phi[:,c_g] * Phi[:,ct_g]. Depends only on
    the membership matrix, never on beta.
    """
    return 0.25 * (N[np.ix_(first, first)] * N[np.ix_(second, second)] - BtB)


def t2_generic(
    P: np.ndarray,
    Phi: np.ndarray,
    first: np.ndarray,
    second: np.ndarray,
    N: np.ndarray,
) -> np.ndarray:
    """T2 block for a general entrywise kernel product P = M_a * M_b.

    T2[g,g*] = sum_{i,j} Phi[i,c_g] Phi[i,c_g*] P[i,j] Phi[j,ct_g] Phi[j,ct_g*].

    Cell pairs (c, c') with no common member contribute a zero column, so the
    Khatri-Rao style product V[:, (c,c')] = Phi[:,c] * Phi[:,c'] is built only
    on pairs with N[c,c'] > 0, keeping V^T P V small.
    """
    n, C = Phi.shape
    nz_rows, nz_cols = np.nonzero(N)
    pair_to_slot = np.full(C * C, -1, dtype=np.int64)
    pair_to_slot[nz_rows * C + nz_cols] = np.arange(nz_rows.size)
    V = Phi[:, nz_rows] * Phi[:, nz_cols]
    T4 = V.T @ P @ V
    row_pairs = pair_to_slot[first[:, None] * C + first[None, :]]
    col_pairs = pair_to_slot[second[:, None] * C + second[None, :]]
    out = np.zeros((first.size, first.size), dtype=np.float64)
    valid = (row_pairs >= 0) & (col_pairs >= 0)
    out[valid] = T4[row_pairs[valid], col_pairs[valid]]
    return out


def h2_block(
    A_a: np.ndarray,
    A_b: np.ndarray,
    T2: np.ndarray,
    mbar_a: np.ndarray,
    mbar_b: np.ndarray,
    n: int,
) -> np.ndarray:
    """(G, G) covariance kernel block from row sums and the T2 correction."""
    T1 = A_a.T @ A_b
    return (T1 - T2) / (n * (n - 1) * (n - 2)) - np.outer(mbar_a, mbar_b)


def overall_moments(M: np.ndarray, exact_quarter: bool = False) -> tuple[float, float]:
    """(mbar, h2hat) of a kernel matrix with g identically 1.

    exact_quarter short-circuits sum of squared entries to n(n-1)/4 for the
    rank kernel, whose off-diagonal entries are exactly +-1/2.
    """
    n = M.shape[0]
    S = M.sum(axis=1)
    total = math.fsum(S)
    mb = total / (n * (n - 1))
    t1 = math.fsum(S * S)
    if exact_quarter:
        t2 = 0.25 * n * (n - 1)
    else:
        t2 = math.fsum(_colsum(M * M))
    h2 = (t1 - t2) / (n * (n - 1) * (n - 2)) - mb * mb
    return mb, h2


def family_moments(
    M: np.ndarray,
    Phi: np.ndarray,
    first: np.ndarray,
    second: np.ndarray,
    epsilon: float,
    *,
    rank_kernel: bool = False,
    N: np.ndarray | None = None,
    T2: np.ndarray | None = None,
) -> tuple[MomentStats, np.ndarray]:
    """Full per-family statistics plus the (G, G) own-kernel h2 block.

    Returns (stats, H) where H[g,g*] = h2hat(g,g*) for this kernel. T2 can be
    passed in when precomputed (it is beta-free for the rank kernel).
    """
    n = M.shape[0]
    if n < 3:
        raise ValueError(f"family moments need at least 3 observations, got {n}")
    if N is None:
        N = Phi.T @ Phi
    A = row_stat_matrix(M, Phi, first, second)
    mb = mbar_vector(A, n)
    if T2 is None:
        if rank_kernel:
            B = Phi[:, first] * Phi[:, second]
            T2 = t2_rank(N, B.T @ B, first, second)
        else:
            T2 = t2_generic(M * M, Phi, first, second, N)
    H = h2_block(A, A, T2, mb, mb, n)
    mb_overall, s2_overall = overall_moments(M, exact_quarter=rank_kernel)
    sigma2 = np.diag(H).copy()
    stats = MomentStats(
        mbar=mb,
        sigma2=sigma2,
        sigma_bar2=modified_variance(sigma2, epsilon, s2_overall),
        row_sums=A,
        mbar_overall=mb_overall,
        sigma2_overall=s2_overall,
    )
    return stats, H
