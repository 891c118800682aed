"""Grid-search confidence sets for index directions and transformation values.

The search space is a finite grid: sign choices for the normalized first
coefficient, evenly stepped ranges for the free index coefficients, and
(for joint hypotheses) one stepped range of candidate transformation values
per evaluation duration. Every grid point gets a full test; the accepted
cloud is then projected to per-coordinate intervals. Acceptance that touches
a grid edge is reported as unbounded on that side, never as a finite
endpoint.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Sample, TransformedSample
from .inference import TestEngine, TuningParams

log = logging.getLogger(__name__)


def _range_values(lo: float, hi: float, step: float) -> np.ndarray:
    if step <= 0 or not math.isfinite(step):
        raise ValueError(f"grid step must be positive and finite, got {step}")
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
        raise ValueError(f"bad grid range [{lo}, {hi}]")
    count = int(round((hi - lo) / step)) + 1
    while lo + step * (count - 1) > hi + step * 1e-9:
        count -= 1
    return lo + step * np.arange(count)


@dataclass(frozen=True)
class ParamGrid:
    """Search grid: sign branch x free index coefficients x optional t ranges."""

    coord_ranges: tuple[tuple[float, float, float], ...]
    sign1_values: tuple[int, ...] = (-1, 1)
    t_ranges: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        if not self.sign1_values:
            raise ValueError("at least one sign branch is required")
        for s in self.sign1_values:
            if s not in (-1, 1):
                raise ValueError(f"sign values must be -1 or +1, got {s}")
        for rng in tuple(self.coord_ranges) + tuple(self.t_ranges):
            _range_values(*rng)  # validates

    def coord_values(self, i: int) -> np.ndarray:
        return _range_values(*self.coord_ranges[i])

    def t_values(self, j: int) -> np.ndarray:
        return _range_values(*self.t_ranges[j])

    @property
    def n_free(self) -> int:
        return len(self.coord_ranges)

    @property
    def n_t(self) -> int:
        return len(self.t_ranges)

    @property
    def size(self) -> int:
        total = len(self.sign1_values)
        for i in range(self.n_free):
            total *= self.coord_values(i).size
        for j in range(self.n_t):
            total *= self.t_values(j).size
        return total

    def points(self):
        """Yield (index, sign1, coords, ts) in a fixed deterministic order."""
        coord_axes = [self.coord_values(i) for i in range(self.n_free)]
        t_axes = [self.t_values(j) for j in range(self.n_t)]
        idx = 0
        for sign1 in self.sign1_values:
            for combo in itertools.product(*coord_axes, *t_axes):
                coords = combo[: self.n_free]
                ts = combo[self.n_free:]
                yield idx, sign1, coords, ts
                idx += 1


@dataclass(frozen=True)
class Projection:
    """One coordinate's summary of the accepted cloud."""

    coord: int
    empty: bool
    lower: float
    upper: float
    unbounded_below: bool
    unbounded_above: bool
    runs: tuple[tuple[float, float], ...]

    def as_dict(self) -> dict:
        return {
            "coord": self.coord,
            "empty": self.empty,
            "lower": None if self.empty or self.unbounded_below else self.lower,
            "upper": None if self.empty or self.unbounded_above else self.upper,
            "unbounded_below": self.unbounded_below,
            "unbounded_above": self.unbounded_above,
            "runs": [list(r) for r in self.runs],
        }


@dataclass
class ConfidenceSet:
    """All evaluated grid points with their test results.

    Point columns: sign1, the free coefficients, then any t coordinates.
    """

    grid: ParamGrid
    alpha: float
    epsilon: float
    seed: int
    points: np.ndarray
    accepted: np.ndarray
    statistics: np.ndarray
    critical_values: np.ndarray

    @property
    def n_accepted(self) -> int:
        return int(self.accepted.sum())

    @property
    def accepted_points(self) -> np.ndarray:
        return self.points[self.accepted]

    @property
    def empty(self) -> bool:
        return self.n_accepted == 0


def _coordinate_axis(cs: ConfidenceSet, coord: int) -> tuple[np.ndarray, float] | None:
    """Grid values and step backing one coordinate; None for the sign column."""
    grid = cs.grid
    if coord == 0:
        return None
    if coord <= grid.n_free:
        lo, hi, step = grid.coord_ranges[coord - 1]
        return _range_values(lo, hi, step), step
    j = coord - 1 - grid.n_free
    if j < grid.n_t:
        lo, hi, step = grid.t_ranges[j]
        return _range_values(lo, hi, step), step
    raise IndexError(f"coordinate {coord} outside the grid (k={1 + grid.n_free + grid.n_t})")


def project(cs: ConfidenceSet, coord: int) -> Projection:
    """Interval summary of the accepted points along one coordinate.

    coord indexes the point columns (0 is the sign branch). Runs list the
    maximal contiguous accepted stretches at the grid resolution; the hull
    is their envelope. Edge-touching acceptance flips the unbounded flag on
    that side.
    """
    axis = _coordinate_axis(cs, coord)
    if cs.empty:
        return Projection(coord, True, math.nan, math.nan, False, False, ())
    values = np.unique(cs.accepted_points[:, coord])
    lower = float(values.min())
    upper = float(values.max())
    if axis is None:
        # sign branch: discrete, no unboundedness notion
        return Projection(coord, False, lower, upper, False, False, ((lower, upper),))
    grid_values, step = axis
    unbounded_below = bool(abs(lower - grid_values[0]) < step / 2)
    unbounded_above = bool(abs(upper - grid_values[-1]) < step / 2)
    runs = []
    run_start = values[0]
    prev = values[0]
    for v in values[1:]:
        if v - prev > 1.5 * step:
            runs.append((float(run_start), float(prev)))
            run_start = v
        prev = v
    runs.append((float(run_start), float(prev)))
    return Projection(
        coord=coord,
        empty=False,
        lower=-math.inf if unbounded_below else lower,
        upper=math.inf if unbounded_above else upper,
        unbounded_below=unbounded_below,
        unbounded_above=unbounded_above,
        runs=tuple(runs),
    )


def beta_confidence_set(
    sample: Sample | TransformedSample,
    grid: ParamGrid,
    tuning: TuningParams,
    *,
    family=None,
    engine: TestEngine | None = None,
    epsilons: Sequence[float] | None = None,
) -> ConfidenceSet | dict[float, ConfidenceSet]:
    """Accepted set of index directions over the grid.

    With several epsilons the expensive per-point work (kernel matrices,
    covariance assembly, eigenfactorization, Gaussian draws) is shared and
    one ConfidenceSet per epsilon comes back in a dict.
    """
    if grid.n_t:
        raise ValueError("index-only search cannot carry t ranges; use joint_confidence_set")
    return _grid_search(sample, grid, tuning, family, engine, epsilons,
                        y_grid=(), y_tilde=None)


def joint_confidence_set(
    sample: Sample | TransformedSample,
    grid: ParamGrid,
    y_grid: Sequence[float],
    y_tilde: float,
    tuning: TuningParams,
    *,
    family=None,
    engine: TestEngine | None = None,
    epsilons: Sequence[float] | None = None,
) -> ConfidenceSet | dict[float, ConfidenceSet]:
    """Accepted set for (direction, transformation values at each y)."""
    if len(y_grid) != grid.n_t:
        raise ValueError(
            f"grid carries {grid.n_t} t ranges but {len(y_grid)} durations were given"
        )
    if grid.n_t == 0:
        raise ValueError("joint search needs at least one t range")
    return _grid_search(sample, grid, tuning, family, engine, epsilons,
                        y_grid=tuple(float(y) for y in y_grid), y_tilde=y_tilde)


def _grid_search(sample, grid, tuning, family, engine, epsilons, *, y_grid, y_tilde):
    if engine is None:
        engine = TestEngine(sample, tuning, family=family, y_tilde=y_tilde)
    eps_list = tuple(float(e) for e in (epsilons if epsilons is not None else (tuning.epsilon,)))
    n_points = grid.size
    k_cols = 1 + grid.n_free + grid.n_t
    log.info("grid search over %d points (%d instruments kept)", n_points, engine.n_kept)
    points = np.empty((n_points, k_cols))
    stats = {e: np.empty(n_points) for e in eps_list}
    cvs = {e: np.empty(n_points) for e in eps_list}
    acc = {e: np.empty(n_points, dtype=bool) for e in eps_list}
    for idx, sign1, coords, ts in grid.points():
        beta_vec = np.array([float(sign1), *coords])
        outcomes = engine.evaluate(
            beta_vec,
            y_grid=y_grid,
            t_vector=ts,
            epsilons=eps_list,
            point_index=idx,
        )
        points[idx] = [sign1, *coords, *ts]
        for eps, out in zip(eps_list, outcomes):
            stats[eps][idx] = out.statistic
            cvs[eps][idx] = out.critical_value
            acc[eps][idx] = not out.reject
    results = {
        eps: ConfidenceSet(
            grid=grid,
            alpha=tuning.alpha,
            epsilon=eps,
            seed=tuning.seed,
            points=points,
            accepted=acc[eps],
            statistics=stats[eps],
            critical_values=cvs[eps],
        )
        for eps in eps_list
    }
    if epsilons is None:
        return results[eps_list[0]]
    return results
