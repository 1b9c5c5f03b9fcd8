"""Low-rank mixture-of-products model with dictionary-factored components.

Component ``r`` draws coordinate ``n`` from the atom mixture
``dictionaries[n] @ factors[n][:, r]`` and components are mixed by
``weights``. Coordinates are conditionally independent given the component.
"""

from __future__ import annotations

from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .atoms import Dictionary, DiscretizedDictionary, Grid, discretize, DEFAULT_COVERAGE
from .errors import DataError, InvalidPairError, ShapeError, ZeroDensityError

SIMPLEX_TOL = 1e-9
# columns closer than this to the simplex are kept bit for bit, so that
# rebuilding a model from its own arrays is exact
EXACT_TOL = 1e-12


def _to_simplex(v: np.ndarray, tol: float, what: str, axis: int = 0) -> np.ndarray:
    v = np.array(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise DataError(f"{what} has non-finite entries")
    if v.min(initial=0.0) < -tol:
        raise DataError(f"{what} has negative entries (min {v.min():.3g})")
    v = np.clip(v, 0.0, None)
    sums = v.sum(axis=axis, keepdims=True)
    if np.any(np.abs(sums - 1.0) > tol):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise DataError(f"{what} is off the simplex by {worst:.3g} (tolerance {tol:g})")
    return np.where(np.abs(sums - 1.0) > EXACT_TOL, v / sums, v)


class JointModel:
    """Mixture of ``F`` product distributions over ``N`` coordinates.

    Parameters
    ----------
    dictionaries : sequence of Dictionary
        One atom dictionary per coordinate.
    factors : sequence of array_like
        ``factors[n]`` has shape ``(len(dictionaries[n]), F)``; each column is
        a convex weight vector over the atoms.
    weights : array_like
        Mixing weights of the ``F`` components.
    grids : sequence of Grid, optional
        Discretization used for pairwise marginals. Required by
        :func:`pairwise_marginal` and by fitting.
    tol : float
        Allowed simplex violation before construction fails. Accepted inputs
        are renormalized exactly.
    metadata : dict, optional
        Free-form information carried through persistence (column names,
        state labels, transforms, provenance).
    """

    def __init__(self, dictionaries: Sequence[Dictionary], factors, weights, grids=None,
                 tol: float = SIMPLEX_TOL, metadata: dict | None = None,
                 coverage: float = DEFAULT_COVERAGE):
        self.dictionaries = tuple(dictionaries)
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 1 or weights.size < 1:
            raise ShapeError("weights must be a non-empty vector")
        if len(factors) != len(self.dictionaries):
            raise ShapeError(f"{len(factors)} factor matrices for {len(self.dictionaries)} dictionaries")
        F = weights.size
        self.weights = _to_simplex(weights, tol, "weights")
        self.weights.setflags(write=False)
        fs = []
        for n, (d, B) in enumerate(zip(self.dictionaries, factors)):
            B = np.asarray(B, dtype=float)
            if B.shape != (len(d), F):
                raise ShapeError(f"factor {n} has shape {B.shape}, expected {(len(d), F)}")
            B = _to_simplex(B, tol, f"factor {n}")
            B.setflags(write=False)
            fs.append(B)
        self.factors = tuple(fs)
        if grids is not None:
            grids = tuple(grids)
            if len(grids) != self.ndim:
                raise ShapeError(f"{len(grids)} grids for {self.ndim} dimensions")
        self.grids = grids
        self.coverage = coverage
        self.metadata = dict(metadata or {})

    @property
    def rank(self) -> int:
        return self.weights.size

    @property
    def ndim(self) -> int:
        return len(self.dictionaries)

    def with_grids(self, grids, coverage: float | None = None) -> "JointModel":
        return JointModel(self.dictionaries, self.factors, self.weights, grids,
                          metadata=self.metadata, coverage=self.coverage if coverage is None else coverage)

    @cached_property
    def discretized(self) -> tuple[DiscretizedDictionary, ...]:
        if self.grids is None:
            raise DataError("model has no grids; attach them with with_grids()")
        return tuple(discretize(d, g, self.coverage) for d, g in zip(self.dictionaries, self.grids))

    def mode_factor(self, n: int) -> np.ndarray:
        """Discretized conditional masses of coordinate ``n``, shape ``(I_n, F)``."""
        return self.discretized[n].matrix @ self.factors[n]

    def component_densities(self, X) -> np.ndarray:
        """Per-coordinate, per-component densities, shape ``(M, N, F)``."""
        X = self._points(X)
        return np.stack([d.pdf_matrix(X[:, n]) @ B
                         for n, (d, B) in enumerate(zip(self.dictionaries, self.factors))], axis=1)

    def pdf(self, X) -> np.ndarray:
        """Joint density at each row of ``X`` (masses on discrete coordinates)."""
        return self.component_densities(X).prod(axis=1) @ self.weights

    def _points(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.ndim:
            raise ShapeError(f"points must have {self.ndim} coordinates, got shape {X.shape}")
        return X

    def __repr__(self):
        sizes = [len(d) for d in self.dictionaries]
        return f"JointModel(N={self.ndim}, F={self.rank}, atoms={sizes})"


def pdf_eval(model: JointModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeError("pdf_eval takes a single point; use JointModel.pdf for batches")
    return float(model.pdf(x)[0])


def pairwise_marginal(model: JointModel, j: int, k: int) -> np.ndarray:
    """Discretized joint masses of coordinates ``j`` and ``k``, shape ``(I_j, I_k)``."""
    if j == k:
        raise InvalidPairError(f"pair needs two distinct coordinates, got ({j}, {k})")
    for n in (j, k):
        if not 0 <= n < model.ndim:
            raise InvalidPairError(f"coordinate {n} out of range for N={model.ndim}")
    if j > k:
        # computed in canonical order so the two views are exact transposes
        return pairwise_marginal(model, k, j).T
    return (model.mode_factor(j) * model.weights) @ model.mode_factor(k).T


def marginal_1d(model: JointModel, n: int):
    """Marginal of coordinate ``n``.

    Returns the pmf vector over states for a discrete coordinate, otherwise a
    vectorized density callable.
    """
    if not 0 <= n < model.ndim:
        raise DataError(f"coordinate {n} out of range for N={model.ndim}")
    d = model.dictionaries[n]
    mix = model.factors[n] @ model.weights
    if d.discrete:
        return d.pdf_matrix(np.arange(d.num_states)) @ mix

    def density(x):
        return d.pdf_matrix(x) @ mix

    return density


def marginal_masses(model: JointModel, n: int) -> np.ndarray:
    """Discretized 1-D marginal of coordinate ``n`` on its grid."""
    return model.mode_factor(n) @ model.weights


def sample(model: JointModel, count: int, seed=None) -> np.ndarray:
    """Ancestral samples: component, then atom per coordinate, then value."""
    if count < 1:
        raise DataError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    comp = rng.choice(model.rank, size=count, p=model.weights)
    out = np.empty((count, model.ndim))
    for n, (d, B) in enumerate(zip(model.dictionaries, model.factors)):
        atom_idx = np.empty(count, dtype=int)
        for r in range(model.rank):
            rows = np.flatnonzero(comp == r)
            if rows.size:
                atom_idx[rows] = rng.choice(len(d), size=rows.size, p=B[:, r])
        for l, atom in enumerate(d.atoms):
            rows = np.flatnonzero(atom_idx == l)
            if rows.size:
                out[rows, n] = atom.sample(rng, rows.size)
    return out


def classify_batch(model: JointModel, label_dim: int, X):
    """MAP labels for every row of ``X``.

    ``X`` holds either all ``N`` coordinates (the label column is ignored) or
    only the ``N - 1`` feature coordinates in model order. Returns
    ``(labels, posteriors, zero_density)`` where rows with zero density for
    every label get label -1 and a NaN posterior.
    """
    d_label = model.dictionaries[label_dim]
    if not d_label.discrete:
        raise DataError(f"coordinate {label_dim} is not discrete and cannot be a label")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] == model.ndim - 1:
        X = np.insert(X, label_dim, 0.0, axis=1)
    X = model._points(X)
    with np.errstate(divide="ignore"):
        logg = np.log(model.weights)[None, :].repeat(X.shape[0], axis=0)
        for n, (d, B) in enumerate(zip(model.dictionaries, model.factors)):
            if n != label_dim:
                logg = logg + np.log(d.pdf_matrix(X[:, n]) @ B)
        states = np.arange(d_label.num_states)
        log_label = np.log(d_label.pdf_matrix(states) @ model.factors[label_dim])  # (C, F)
    logjoint = logsumexp(logg[:, None, :] + log_label[None, :, :], axis=2)  # (M, C)
    zero = ~np.isfinite(logjoint.max(axis=1))
    labels = np.full(X.shape[0], -1, dtype=int)
    post = np.full(logjoint.shape, np.nan)
    ok = ~zero
    if ok.any():
        lj = logjoint[ok]
        post[ok] = np.exp(lj - logsumexp(lj, axis=1, keepdims=True))
        # argmax returns the first maximum, i.e. the lowest label on ties
        labels[ok] = np.argmax(lj, axis=1)
    return labels, post, zero


def map_classify(model: JointModel, label_dim: int, x):
    labels, post, zero = classify_batch(model, label_dim, x)
    if zero[0]:
        raise ZeroDensityError("features have zero density under every label")
    return int(labels[0]), post[0]
