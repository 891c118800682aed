"""Instrumental-function families: enumeration, weights, and cell membership.

Each instrument is an indicator on covariate pairs that factors as
g(x_i, x_j) = phi_c(x_i) * phi_ct(x_j), where phi_c is a "marginal cell"
indicator. In mixed mode a marginal cell is a hypercube cell on the
transformed continuous coordinates crossed with an exact discrete tuple;
in finite-support mode it is an exact match on the full covariate tuple;
in all-cube mode it is a hypercube cell on all coordinates (transformed).

Cube cells at level r partition (0,1]^p into (2r)^p half-open boxes
((a-1)/(2r), a/(2r)], lower-exclusive and upper-inclusive, so a transformed
coordinate exactly equal to 0.0 falls in no cell.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Sample, TransformedSample, fit_gaussian_standardization

MODES = ("mixed", "finite_support", "all_cube")


@dataclass(frozen=True)
class MarginalCell:
    """One side of an instrument: cube cell indices plus a discrete key."""

    r: int                      # cube refinement level; 0 in finite-support mode
    a: tuple[int, ...]          # per-coordinate cell index in {1, ..., 2r}
    b: tuple[str, ...]          # canonical discrete key ("" tuple when unused)


@dataclass(frozen=True)
class InstrumentIndex:
    """A single instrumental function g(x_i, x_j) = phi_cell(x_i) phi_cell_j(x_j)."""

    mode: str
    r: int
    a: tuple[int, ...]
    a_tilde: tuple[int, ...]
    b: tuple[str, ...]
    b_tilde: tuple[str, ...]


@dataclass
class InstrumentFamily:
    """Full enumeration of instruments for levels r = 1..R with weights.

    cells lists the distinct marginal cells in column order of the membership
    matrix; first_cell/second_cell map each instrument to its (i-side, j-side)
    cell columns.
    """

    mode: str
    R: int
    indices: list[InstrumentIndex]
    weights: np.ndarray           # (G,)
    cells: list[MarginalCell]
    first_cell: np.ndarray        # (G,) int
    second_cell: np.ndarray       # (G,) int

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)


def enumerate_instruments(
    mode: str,
    R: int,
    p: int,
    X2: Sequence[tuple[str, ...]] | None,
) -> InstrumentFamily:
    """Enumerate an instrument family.

    mixed: cube cells on the p transformed continuous coordinates crossed with
      discrete tuples from X2; count per level r is ((2r)^p |X2|)^2 and the
      weight is (r^2+100)^{-1} ((2r)^p |X2|)^{-2}.
    finite_support: exact-match indicators on the tuples in X2 (here the full
      covariate support); weight |X2|^{-2}; R is ignored.
    all_cube: cube cells on all p coordinates (pass p = k); weight
      (r^2+100)^{-1} (2r)^{-2p}.
    """
    if mode not in MODES:
        raise ValueError(f"unknown instrument mode {mode!r}")

    cells: list[MarginalCell] = []
    blocks: list[tuple[range, float]] = []  # (cell index range, weight) per level

    if mode == "finite_support":
        if not X2:
            raise ValueError("finite_support mode needs a nonempty covariate support")
        support = list(X2)
        cells = [MarginalCell(0, (), tuple(b)) for b in support]
        blocks.append((range(0, len(cells)), 1.0 / len(support) ** 2))
    else:
        if R < 1:
            raise ValueError("R must be >= 1")
        if p < 1:
            raise ValueError(f"{mode} mode needs at least one cube coordinate")
        if mode == "mixed":
            if not X2:
                raise ValueError("mixed mode needs a nonempty discrete support")
            discrete = [tuple(b) for b in X2]
        else:
            discrete = [()]
        for r in range(1, R + 1):
            start = len(cells)
            for a in itertools.product(range(1, 2 * r + 1), repeat=p):
                for b in discrete:
                    cells.append(MarginalCell(r, a, b))
            per_side = (2 * r) ** p * len(discrete)
            weight = 1.0 / ((r * r + 100) * per_side * per_side)
            blocks.append((range(start, len(cells)), weight))

    indices: list[InstrumentIndex] = []
    weights: list[float] = []
    first: list[int] = []
    second: list[int] = []
    for cell_range, weight in blocks:
        for ci in cell_range:
            for cj in cell_range:
                ci_cell, cj_cell = cells[ci], cells[cj]
                indices.append(
                    InstrumentIndex(
                        mode=mode,
                        r=ci_cell.r,
                        a=ci_cell.a,
                        a_tilde=cj_cell.a,
                        b=ci_cell.b,
                        b_tilde=cj_cell.b,
                    )
                )
                weights.append(weight)
                first.append(ci)
                second.append(cj)

    return InstrumentFamily(
        mode=mode,
        R=int(R) if mode != "finite_support" else 0,
        indices=indices,
        weights=np.asarray(weights, dtype=np.float64),
        cells=cells,
        first_cell=np.asarray(first, dtype=np.intp),
        second_cell=np.asarray(second, dtype=np.intp),
    )


def family_for_sample(tsample: TransformedSample, R: int, mode: str | None = None) -> InstrumentFamily:
    """Pick the natural family for a sample.

    Samples with continuous covariates get the mixed family; all-discrete
    samples get the finite-support family on the full covariate support.
    """
    sample = tsample.sample if isinstance(tsample, TransformedSample) else tsample
    if mode is None:
        mode = "mixed" if sample.p > 0 else "finite_support"
    if mode == "mixed":
        if sample.p == 0:
            raise ValueError("mixed mode needs continuous covariates")
        return enumerate_instruments("mixed", R, sample.p, sample.discrete_keys)
    if mode == "finite_support":
        if sample.p != 0:
            raise ValueError(
                "finite_support mode applies when all covariates are discrete"
            )
        return enumerate_instruments("finite_support", 0, 0, sample.discrete_keys)
    if mode == "all_cube":
        return enumerate_instruments("all_cube", R, sample.k, None)
    raise ValueError(f"unknown instrument mode {mode!r}")


class InstrumentCoordinates:
    """Per-observation coordinates used for cell membership.

    cube: (n, p) transformed coordinates in (0,1) (or the full-matrix
    transform in all-cube mode); keys: canonical discrete tuple per row.
    """

    def __init__(self, cube: np.ndarray, keys: list[tuple[str, ...]]):
        self.cube = cube
        self.keys = keys

    def row(self, i: int) -> tuple[np.ndarray, tuple[str, ...]]:
        return self.cube[i], self.keys[i]


def instrument_coordinates(
    tsample: TransformedSample | Sample, mode: str
) -> InstrumentCoordinates:
    """Build the coordinates an instrument family consumes."""
    if mode == "all_cube":
        sample = tsample.sample if isinstance(tsample, TransformedSample) else tsample
        fitted = fit_gaussian_standardization(sample.X)
        return InstrumentCoordinates(fitted(sample.X), [()] * sample.n)
    if isinstance(tsample, Sample):
        if tsample.p != 0:
            raise TypeError("transform the sample before building instruments")
        tsample = TransformedSample(tsample, None)
    sample = tsample.sample
    keys = [sample.row_discrete_key(i) for i in range(sample.n)]
    if mode == "finite_support":
        return InstrumentCoordinates(np.empty((sample.n, 0)), keys)
    return InstrumentCoordinates(tsample.xt, keys)


def _cell_contains(cell: MarginalCell, cube_row: np.ndarray, key: tuple[str, ...]) -> bool:
    if cell.b and key != cell.b:
        return False
    for u, a_u in enumerate(cell.a):
        x = cube_row[u]
        # half-open cell ((a-1)/(2r), a/(2r)]
        if not ((a_u - 1) < 2 * cell.r * x <= a_u):
            return False
    return True


def instrument_indicator(
    g: InstrumentIndex,
    xi: tuple[np.ndarray, tuple[str, ...]],
    xj: tuple[np.ndarray, tuple[str, ...]],
) -> int:
    """Evaluate one instrument on a covariate pair (scalar reference path).

    xi and xj are (cube coordinates, discrete key) pairs as produced by
    InstrumentCoordinates.row. Total function: never raises on valid shapes.
    """
    ci = MarginalCell(g.r, g.a, g.b)
    cj = MarginalCell(g.r, g.a_tilde, g.b_tilde)
    return int(
        _cell_contains(ci, xi[0], xi[1]) and _cell_contains(cj, xj[0], xj[1])
    )


def cell_membership_matrix(
    family: InstrumentFamily, coords: InstrumentCoordinates
) -> np.ndarray:
    """(n, n_cells) 0/1 matrix of marginal-cell membership.

    Built by index arithmetic: a coordinate x lands in cell index
    ceil(2r x) at level r, and exactly 0.0 lands in no cell.
    """
    n = len(coords.keys)
    Phi = np.zeros((n, family.n_cells), dtype=np.float64)

    if family.mode == "finite_support":
        key_to_col = {cell.b: col for col, cell in enumerate(family.cells)}
        for i, key in enumerate(coords.keys):
            col = key_to_col.get(key)
            if col is not None:
                Phi[i, col] = 1.0
        return Phi

    cube = coords.cube
    p = cube.shape[1]
    if family.mode == "mixed":
        # preserve the enumeration order of discrete tuples within each level
        discrete = list(dict.fromkeys(cell.b for cell in family.cells))
        key_to_idx = {b: idx for idx, b in enumerate(discrete)}
        disc_idx = np.array(
            [key_to_idx.get(key, -1) for key in coords.keys], dtype=np.intp
        )
        n_disc = len(discrete)
    else:
        disc_idx = np.zeros(n, dtype=np.intp)
        n_disc = 1

    col = 0
    levels = sorted({cell.r for cell in family.cells})
    for r in levels:
        two_r = 2 * r
        # ceil maps (0,1] onto {1,...,2r}; 0.0 maps to 0 which is invalid
        aidx = np.ceil(two_r * cube).astype(np.intp)
        valid = np.all((aidx >= 1) & (aidx <= two_r), axis=1) & (disc_idx >= 0)
        flat = np.zeros(n, dtype=np.intp)
        for u in range(p):  # C-order ravel matching the enumeration order
            flat = flat * two_r + (aidx[:, u] - 1)
        flat = flat * n_disc + disc_idx
        block = (two_r ** p) * n_disc
        rows = np.nonzero(valid)[0]
        Phi[rows, col + flat[rows]] = 1.0
        col += block
    assert col == family.n_cells
    return Phi


def pair_support_counts(Phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell counts and per-cell-pair joint counts used for pruning.

    An instrument (c, ct) has ordered-pair support iff
    n_c * n_ct - n_{c and ct} > 0.
    """
    counts = Phi.sum(axis=0)
    joint = Phi.T @ Phi
    return counts, joint


def instrument_pair_support(family: InstrumentFamily, Phi: np.ndarray) -> np.ndarray:
    """(G,) number of in-sample ordered pairs each instrument can see."""
    counts, joint = pair_support_counts(Phi)
    c, ct = family.first_cell, family.second_cell
    return counts[c] * counts[ct] - joint[c, ct]
