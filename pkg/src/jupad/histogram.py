"""Datasets, grids from data, and empirical 1-D / pairwise histograms."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .atoms import DEFAULT_COVERAGE, Dictionary, Grid, dictionary_support
from .errors import DataError, DegenerateColumnError, DomainError, OutOfRangeError, ShapeError

DEFAULT_BINS = 16
_WIDEN = 1e-9


@dataclass
class Dataset:
    """Sample matrix with per-column metadata.

    ``num_states[n]`` is ``None`` for a continuous column and the number of
    states for a discrete one; discrete columns hold state indices.
    """

    values: np.ndarray
    names: list = None
    num_states: list = None
    label: int | None = None
    state_labels: dict = field(default_factory=dict)
    transforms: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ShapeError(f"dataset needs at least one row, got shape {self.values.shape}")
        N = self.values.shape[1]
        if self.names is None:
            self.names = [f"x{n}" for n in range(N)]
        if self.num_states is None:
            self.num_states = [None] * N
        if len(self.names) != N or len(self.num_states) != N:
            raise ShapeError("column metadata does not match the number of columns")
        for n, C in enumerate(self.num_states):
            if C is None:
                continue
            col = self.values[:, n]
            if np.any(col != np.round(col)) or col.min() < 0 or col.max() >= C:
                raise DomainError(f"discrete column {self.names[n]!r} must hold integers in [0, {C})")
        if self.label is not None and self.num_states[self.label] is None:
            raise DataError(f"label column {self.names[self.label]!r} must be discrete")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def ndim(self) -> int:
        return self.values.shape[1]

    def is_discrete(self, n: int) -> bool:
        return self.num_states[n] is not None

    def subset(self, rows) -> "Dataset":
        return Dataset(self.values[rows], list(self.names), list(self.num_states), self.label,
                       dict(self.state_labels), dict(self.transforms))


@dataclass(frozen=True)
class PairwiseHistogram:
    pair: tuple
    counts: np.ndarray = field(repr=False)
    estimate: np.ndarray = field(repr=False)
    n_samples: int


def propose_grid(dataset: Dataset, n: int, bins: int = DEFAULT_BINS,
                 dictionary: Dictionary | None = None, coverage: float = DEFAULT_COVERAGE) -> Grid:
    """Equal-width grid over the observed range of column ``n``.

    With a continuous ``dictionary``, the range is widened to also hold
    ``coverage`` of every atom so the dictionary can be discretized on it.
    Discrete columns get one bin per state.
    """
    if dataset.is_discrete(n):
        return Grid.for_states(dataset.num_states[n])
    if bins < 2:
        raise DataError(f"continuous columns need at least 2 bins, got {bins}")
    col = dataset.values[:, n]
    lo, hi = float(col.min()), float(col.max())
    if lo == hi and dictionary is None:
        raise DegenerateColumnError(f"column {dataset.names[n]!r} is constant; cannot split into {bins} bins")
    pad = _WIDEN * max(1.0, hi - lo)
    lo, hi = lo - pad, hi + pad
    if dictionary is not None and not dictionary.discrete:
        s_lo, s_hi = dictionary_support(dictionary, coverage)
        lo, hi = min(lo, s_lo), max(hi, s_hi)
    return Grid.uniform(lo, hi, bins)


def _bin_column(dataset: Dataset, grids: Sequence[Grid], n: int) -> np.ndarray:
    idx = grids[n].bin_index(dataset.values[:, n])
    bad = np.flatnonzero(idx < 0)
    if bad.size:
        row = int(bad[0])
        raise OutOfRangeError(f"value {dataset.values[row, n]!r} in row {row} of column "
                              f"{dataset.names[n]!r} lies outside its grid")
    return idx


def histogram_1d(dataset: Dataset, grids: Sequence[Grid], n: int) -> np.ndarray:
    idx = _bin_column(dataset, grids, n)
    return np.bincount(idx, minlength=grids[n].num_bins) / dataset.n_samples


def estimate_pairwise(dataset: Dataset, grids: Sequence[Grid], j: int, k: int,
                      _bins: dict | None = None) -> PairwiseHistogram:
    """Normalized co-occurrence counts of columns ``j`` and ``k``."""
    if j == k:
        raise DataError(f"pair needs two distinct columns, got ({j}, {k})")
    bj = _bins[j] if _bins else _bin_column(dataset, grids, j)
    bk = _bins[k] if _bins else _bin_column(dataset, grids, k)
    Ij, Ik = grids[j].num_bins, grids[k].num_bins
    counts = np.bincount(bj * Ik + bk, minlength=Ij * Ik).reshape(Ij, Ik)
    return PairwiseHistogram((j, k), counts, counts / dataset.n_samples, dataset.n_samples)


def estimate_all_pairs(dataset: Dataset, grids: Sequence[Grid]) -> dict:
    """Pairwise histograms for every ``j < k``, keyed by ``(j, k)``."""
    if len(grids) != dataset.ndim:
        raise ShapeError(f"{len(grids)} grids for {dataset.ndim} columns")
    bins = {n: _bin_column(dataset, grids, n) for n in range(dataset.ndim)}
    return {(j, k): estimate_pairwise(dataset, grids, j, k, _bins=bins)
            for j, k in combinations(range(dataset.ndim), 2)}
