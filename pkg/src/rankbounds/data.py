"""Core data types, CSV ingestion, covariate transformation, and normalization.

A sample holds censored duration records (y0, d, x): y0 is the observed
duration (the smaller of the latent duration and the censoring time), d flags
whether the event was observed (1) or censored (0), and x is a covariate
vector whose first p entries are continuous and whose remaining entries are
discrete. The latent exceedance value Y1 (equal to y0 when d=1 and infinite
when d=0) is never stored; downstream kernels branch on d instead.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr

log = logging.getLogger(__name__)

EIGENVALUE_CLIP_RATIO = 1e-12


class IngestionError(ValueError):
    """Raised when a CSV row or column cannot be ingested."""


class NormalizationError(ValueError):
    """Raised when a parameter vector violates the scale normalization."""


class SingularCovarianceError(ValueError):
    """Raised when the continuous-covariate covariance is not positive definite."""


def canonical_key(value: float) -> str:
    """Canonical string form of a discrete covariate value.

    Discrete values are compared by exact equality of these keys, so "1",
    "1.0", and "1.00" in a CSV all canonicalize to the same key.
    """
    return repr(float(value))


@dataclass(frozen=True)
class Observation:
    """One censored duration record."""

    y0: float
    d: int
    x: tuple[float, ...]

    def __post_init__(self):
        if not (math.isfinite(self.y0) and self.y0 > 0):
            raise IngestionError(f"duration must be finite and positive, got {self.y0}")
        if self.d not in (0, 1):
            raise IngestionError(f"censoring indicator must be 0 or 1, got {self.d}")


class Sample:
    """An i.i.d. sample of censored duration records.

    Arrays are read-only after construction so instances can be shared across
    worker processes without synchronization.
    """

    def __init__(
        self,
        y0: np.ndarray,
        d: np.ndarray,
        X: np.ndarray,
        p: int,
        discrete_support: Sequence[tuple[float, ...]] | None = None,
        column_names: Sequence[str] | None = None,
    ):
        y0 = np.asarray(y0, dtype=np.float64)
        d = np.asarray(d, dtype=np.int8)
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or y0.ndim != 1 or d.ndim != 1:
            raise ValueError("y0 and d must be 1-d, X must be 2-d")
        n, k = X.shape
        if not (len(y0) == len(d) == n):
            raise ValueError("y0, d, and X must have matching lengths")
        if not 0 <= p <= k:
            raise ValueError(f"continuous count p={p} out of range for k={k}")
        if np.any(~np.isfinite(y0)) or np.any(y0 <= 0):
            bad = int(np.argmax(~(np.isfinite(y0) & (y0 > 0))))
            raise IngestionError(f"duration must be finite and positive (row {bad + 1})")
        if np.any((d != 0) & (d != 1)):
            bad = int(np.argmax((d != 0) & (d != 1)))
            raise IngestionError(f"censoring indicator outside {{0,1}} (row {bad + 1})")

        self.y0 = y0
        self.d = d
        self.X = X
        self.p = int(p)
        self.column_names = tuple(column_names) if column_names else None

        if k > p:
            present = sorted({tuple(float(v) for v in row) for row in X[:, p:]})
        else:
            present = [()]
        if discrete_support is None:
            support = present
        else:
            support = sorted({tuple(float(v) for v in t) for t in discrete_support})
            missing = [t for t in present if t not in set(support)]
            if missing:
                raise ValueError(
                    f"declared discrete support does not cover observed tuple {missing[0]}"
                )
        self.discrete_support = tuple(support)
        self.discrete_keys = tuple(
            tuple(canonical_key(v) for v in t) for t in self.discrete_support
        )

        for a in (self.y0, self.d, self.X):
            a.setflags(write=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @property
    def observations(self) -> list[Observation]:
        return [
            Observation(float(self.y0[i]), int(self.d[i]), tuple(self.X[i]))
            for i in range(self.n)
        ]

    def row_discrete_key(self, i: int) -> tuple[str, ...]:
        return tuple(canonical_key(v) for v in self.X[i, self.p:])

    def censoring_summary(self) -> dict:
        """Counts of censored/uncensored rows plus per-discrete-group rates."""
        total = self.n
        censored = int(np.sum(self.d == 0))
        groups = {}
        if self.k > self.p:
            for t, key in zip(self.discrete_support, self.discrete_keys):
                mask = np.all(self.X[:, self.p:] == np.asarray(t), axis=1)
                cnt = int(mask.sum())
                if cnt:
                    groups[key] = {
                        "count": cnt,
                        "censored": int(np.sum(self.d[mask] == 0)),
                        "rate": float(np.mean(self.d[mask] == 0)),
                    }
        return {
            "n": total,
            "censored": censored,
            "uncensored": total - censored,
            "censoring_rate": censored / total,
            "by_group": groups,
        }


@dataclass(frozen=True)
class Beta:
    """Normalized index parameter: first coordinate is exactly +1 or -1."""

    sign1: int
    rest: tuple[float, ...]

    def __post_init__(self):
        if self.sign1 not in (-1, 1):
            raise NormalizationError("first coordinate must be +1 or -1")

    @property
    def vector(self) -> np.ndarray:
        return np.array((float(self.sign1),) + self.rest, dtype=np.float64)

    @property
    def k(self) -> int:
        return 1 + len(self.rest)


@dataclass(frozen=True)
class NormalizationSpec:
    """Anchor duration at which the transformation function is pinned to zero."""

    y_tilde: float

    def __post_init__(self):
        if not (math.isfinite(self.y_tilde) and self.y_tilde > 0):
            raise ValueError(f"y_tilde must be finite and positive, got {self.y_tilde}")


def validate_beta(v: Sequence[float]) -> Beta:
    """Check the scale normalization and build a Beta.

    Vectors violating |v1| = 1 are rejected rather than rescaled.
    """
    v = [float(x) for x in v]
    if len(v) < 2:
        raise NormalizationError("parameter vector must have length >= 2")
    if v[0] not in (-1.0, 1.0):
        raise NormalizationError(f"first coordinate must be +1 or -1, got {v[0]}")
    return Beta(int(v[0]), tuple(v[1:]))


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for duration CSV ingestion."""

    duration: str
    event: str
    continuous: tuple[str, ...] = ()
    discrete: tuple[str, ...] = ()

    def covariate_columns(self) -> tuple[str, ...]:
        return tuple(self.continuous) + tuple(self.discrete)


def _parse_cell(raw: str, line_no: int, column: str) -> float:
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise IngestionError(
            f"non-numeric cell in column '{column}' at line {line_no}: {raw!r}"
        ) from None


def load_csv(path: str, schema: CsvSchema) -> Sample:
    """Load a censored duration sample from a headed CSV file.

    Rows are kept in file order. Errors name the offending line and column.
    A summary of censored/uncensored counts and per-group censoring rates is
    logged at INFO level and available via Sample.censoring_summary().
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: no data rows") from None
        header = [h.strip() for h in header]
        needed = [schema.duration, schema.event, *schema.covariate_columns()]
        for colname in needed:
            if colname not in header:
                raise IngestionError(f"{path}: missing column '{colname}'")
        pos = {name: header.index(name) for name in needed}

        y0_list, d_list, x_rows = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise IngestionError(f"{path}: line {line_no} has too few cells")
            y = _parse_cell(row[pos[schema.duration]], line_no, schema.duration)
            if not (math.isfinite(y) and y > 0):
                raise IngestionError(
                    f"nonpositive duration in column '{schema.duration}' at line {line_no}: {y}"
                )
            dval = _parse_cell(row[pos[schema.event]], line_no, schema.event)
            if dval not in (0.0, 1.0):
                raise IngestionError(
                    f"event indicator outside {{0,1}} in column '{schema.event}'"
                    f" at line {line_no}: {dval}"
                )
            xs = [
                _parse_cell(row[pos[c]], line_no, c) for c in schema.covariate_columns()
            ]
            y0_list.append(y)
            d_list.append(int(dval))
            x_rows.append(xs)

    if not y0_list:
        raise IngestionError(f"{path}: no data rows")

    sample = Sample(
        np.array(y0_list),
        np.array(d_list),
        np.array(x_rows, dtype=np.float64).reshape(len(y0_list), -1),
        p=len(schema.continuous),
        column_names=schema.covariate_columns(),
    )
    summary = sample.censoring_summary()
    log.info(
        "loaded %d rows from %s: %d censored (%.1f%%), %d uncensored",
        summary["n"], path, summary["censored"],
        100.0 * summary["censoring_rate"], summary["uncensored"],
    )
    for key, grp in summary["by_group"].items():
        log.info(
            "  group %s: %d rows, censoring rate %.1f%%",
            key, grp["count"], 100.0 * grp["rate"],
        )
    return sample


def save_csv(sample: Sample, path: str, schema: CsvSchema) -> None:
    """Write a sample back to CSV. Floats use repr so a reload is bit-identical."""
    cols = [schema.duration, schema.event, *schema.covariate_columns()]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i in range(sample.n):
            writer.writerow(
                [repr(float(sample.y0[i])), int(sample.d[i])]
                + [repr(float(v)) for v in sample.X[i]]
            )


@dataclass(frozen=True)
class FittedTransform:
    """Gaussian standardization fitted on a continuous covariate block."""

    mean: np.ndarray            # (p,)
    cov_sqrt_inv: np.ndarray    # (p, p), symmetric inverse square root

    def __call__(self, X_cont: np.ndarray) -> np.ndarray:
        Z = (np.atleast_2d(X_cont) - self.mean) @ self.cov_sqrt_inv
        return ndtr(Z)


def fit_gaussian_standardization(X: np.ndarray) -> FittedTransform:
    """Fit x -> ndtr(cov^{-1/2} (x - mean)) on the columns of X.

    The covariance uses the 1/(n-1) convention. Eigenvalues at or below
    1e-12 times the largest eigenvalue indicate collinearity and raise.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, p = X.shape
    if n < 2:
        raise ValueError("need at least 2 rows to fit the standardization")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    lam_max = float(evals[-1])
    if lam_max <= 0 or evals[0] <= EIGENVALUE_CLIP_RATIO * lam_max:
        raise SingularCovarianceError(
            "continuous covariate covariance is singular or nearly singular; "
            "remove collinear covariates"
        )
    inv_sqrt = (evecs * (evals ** -0.5)) @ evecs.T
    return FittedTransform(mean=mean, cov_sqrt_inv=inv_sqrt)


class TransformedSample:
    """A sample plus its continuous block mapped into (0,1).

    The map is ndtr applied coordinate-wise after whitening, so it is strictly
    increasing in each whitened coordinate and preserves within-coordinate
    orderings. The fitted mean and covariance square root are stored for reuse
    on new points.
    """

    def __init__(self, sample: Sample, transform: FittedTransform | None):
        self.sample = sample
        self.transform = transform
        if sample.p > 0:
            assert transform is not None
            self.xt = transform(sample.X[:, : sample.p])
            self.xt.setflags(write=False)
        else:
            self.xt = np.empty((sample.n, 0))

    @property
    def n(self) -> int:
        return self.sample.n

    @property
    def p(self) -> int:
        return self.sample.p

    def __getattr__(self, name):
        # delegate y0, d, X, discrete_support, ... to the underlying sample
        return getattr(self.sample, name)


def transform_continuous(sample: Sample) -> TransformedSample:
    """Map the continuous covariate block into (0,1) via Gaussian standardization."""
    if sample.p == 0:
        return TransformedSample(sample, None)
    if sample.n < 2:
        raise ValueError("need at least 2 observations to transform covariates")
    fitted = fit_gaussian_standardization(sample.X[:, : sample.p])
    return TransformedSample(sample, fitted)
