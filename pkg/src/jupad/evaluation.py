"""Train/validation/test splits, rank selection and MAP classification scores."""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DataError, JupadError, StratificationError
from .histogram import Dataset
from .model import JointModel, classify_batch
from .solver import FitConfig, fit

log = logging.getLogger(__name__)


def _sizes(total: int, fractions: Sequence[float]) -> list:
    raw = np.asarray(fractions, dtype=float) * total
    sizes = np.floor(raw).astype(int)
    # largest remainders get the leftover rows, earlier splits first on ties
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in order[: total - sizes.sum()]:
        sizes[i] += 1
    return sizes.tolist()


def _class_counts(class_sizes: Sequence[int], fractions: np.ndarray, totals: Sequence[int]) -> np.ndarray:
    """Rows of each class per part: every entry within one row of its exact
    share, columns summing to ``totals`` (controlled rounding)."""
    exact = np.outer(class_sizes, fractions)
    counts = np.floor(exact).astype(int)
    need = np.asarray(totals) - counts.sum(axis=0)
    extra = np.asarray(class_sizes) - counts.sum(axis=1)
    # classes with the most leftover rows first; each gives at most one row per part
    for c in sorted(range(len(class_sizes)), key=lambda c: (-extra[c], c)):
        parts = sorted(range(len(fractions)), key=lambda s: (-need[s], -(exact[c, s] - counts[c, s]), s))
        for s in parts[: extra[c]]:
            counts[c, s] += 1
            need[s] -= 1
    return counts


def split(dataset: Dataset, fractions=(0.6, 0.2, 0.2), seed=0) -> tuple:
    """Disjoint, exhaustive random split of the rows.

    Part sizes follow the fractions with largest-remainder rounding. With a
    label column the split is stratified: every class keeps its proportion
    in every part to within one row.
    """
    fractions = np.asarray(fractions, dtype=float)
    if np.any(fractions <= 0) or abs(fractions.sum() - 1.0) > 1e-9:
        raise DataError(f"split fractions must be positive and sum to 1, got {fractions.tolist()}")
    rng = np.random.default_rng(seed)
    n = dataset.n_samples
    totals = _sizes(n, fractions)
    if dataset.label is None:
        order = rng.permutation(n)
        bounds = np.cumsum([0] + totals)
        return tuple(dataset.subset(np.sort(order[a:b])) for a, b in zip(bounds[:-1], bounds[1:]))
    labels = dataset.values[:, dataset.label].astype(int)
    classes = np.unique(labels)
    members = [np.flatnonzero(labels == c) for c in classes]
    for c, rows in zip(classes, members):
        if rows.size < len(fractions):
            raise StratificationError(f"class {c} has {rows.size} rows, fewer than the {len(fractions)} splits")
    counts = _class_counts([m.size for m in members], fractions, totals)
    parts = [[] for _ in fractions]
    for rows, row_counts in zip(members, counts):
        rows = rng.permutation(rows)
        bounds = np.cumsum(np.concatenate([[0], row_counts]))
        for s in range(len(fractions)):
            parts[s].append(rows[bounds[s]:bounds[s + 1]])
    return tuple(dataset.subset(np.sort(np.concatenate(p))) for p in parts)


class ClassificationScore(NamedTuple):
    accuracy: float
    error_fraction: float
    zero_density_fraction: float
    predictions: np.ndarray


def classification_accuracy(model: JointModel, test: Dataset, label_dim: int) -> ClassificationScore:
    """Fraction of rows whose MAP label matches. Rows with zero density under
    every label count as errors and are also reported separately."""
    labels, _, zero = classify_batch(model, label_dim, test.values)
    truth = test.values[:, label_dim].astype(int)
    m = test.n_samples
    correct = int(np.sum((labels == truth) & ~zero))
    zeros = int(zero.sum())
    return ClassificationScore(correct / m, (m - correct - zeros) / m, zeros / m, labels)


def rank_scores(train: Dataset, validation: Dataset, dictionaries, candidates: Sequence[int],
                config: FitConfig) -> dict:
    """Validation accuracy per candidate rank; candidates whose fit fails are left out."""
    if train.label is None:
        raise DataError("rank selection needs a labelled dataset")
    scores = {}
    for F in candidates:
        try:
            model = fit(train, dictionaries, replace(config, rank=int(F)))
        except JupadError as exc:
            log.warning("rank %d failed: %s", F, exc)
            continue
        scores[int(F)] = classification_accuracy(model, validation, train.label).accuracy
    return scores


def select_rank(train: Dataset, validation: Dataset, dictionaries, candidates: Sequence[int],
                config: FitConfig) -> int:
    """Candidate rank with the best validation accuracy (smallest on ties)."""
    candidates = list(candidates)
    if len(candidates) == 1:
        return int(candidates[0])
    scores = rank_scores(train, validation, dictionaries, candidates, config)
    if not scores:
        raise DataError(f"every candidate rank {candidates} failed to fit")
    best = max(scores.values())
    return min(F for F, s in scores.items() if s == best)


class GaussianNaiveBayes:
    """Per-class independent Gaussians with empirical class priors; a baseline
    classifier for labelled datasets."""

    def __init__(self, var_smoothing: float = 1e-9):
        self.var_smoothing = var_smoothing

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y).astype(int)
        self.classes_ = np.unique(y)
        eps = self.var_smoothing * X.var(axis=0).max()
        self.mean_ = np.stack([X[y == c].mean(axis=0) for c in self.classes_])
        self.var_ = np.stack([X[y == c].var(axis=0) for c in self.classes_]) + eps
        self.log_prior_ = np.log(np.array([np.mean(y == c) for c in self.classes_]))
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        ll = -0.5 * (np.log(2 * np.pi * self.var_)[None].sum(axis=2)
                     + (((X[:, None, :] - self.mean_[None]) ** 2) / self.var_[None]).sum(axis=2))
        return self.classes_[np.argmax(ll + self.log_prior_, axis=1)]

    def score(self, X, y) -> float:
        return float(np.mean(self.predict(X) == np.asarray(y).astype(int)))


def naive_bayes_accuracy(train: Dataset, test: Dataset) -> float:
    """Test accuracy of :class:`GaussianNaiveBayes` on the non-label columns."""
    feats = [n for n in range(train.ndim) if n != train.label]
    nb = GaussianNaiveBayes().fit(train.values[:, feats], train.values[:, train.label])
    return nb.score(test.values[:, feats], test.values[:, test.label])
