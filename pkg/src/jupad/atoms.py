"""One-dimensional density atoms, dictionaries and their discretization.

Every atom exposes a closed-form ``pdf``/``cdf`` so interval masses are exact
cdf differences. A :class:`Dictionary` is an ordered collection of atoms for a
single coordinate; :func:`discretize` turns it into a column-stochastic
interval-mass matrix on a :class:`Grid`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ConfigError, CoverageError, InvalidAtomError, InvalidIntervalError, ShapeError

DEFAULT_COVERAGE = 0.99


@dataclass(frozen=True)
class Gaussian:
    mean: float
    variance: float

    family = "gaussian"

    def __post_init__(self):
        if not (math.isfinite(self.mean) and self.variance > 0 and math.isfinite(self.variance)):
            raise InvalidAtomError(f"Gaussian needs finite mean and variance > 0, got {self}")

    @property
    def std(self):
        return math.sqrt(self.variance)

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.std
        return np.exp(-0.5 * z * z) / (self.std * math.sqrt(2.0 * math.pi))

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mean) / self.std)

    def quantile(self, q):
        return self.mean + self.std * float(ndtri(q))

    def sample(self, rng, size):
        return rng.normal(self.mean, self.std, size)

    def params(self):
        return {"mean": self.mean, "variance": self.variance}


@dataclass(frozen=True)
class Laplacian:
    """Laplace density ``exp(-|x - mean| / scale) / (2 scale)``."""

    mean: float
    scale: float

    family = "laplacian"

    def __post_init__(self):
        if not (math.isfinite(self.mean) and self.scale > 0 and math.isfinite(self.scale)):
            raise InvalidAtomError(f"Laplacian needs finite mean and scale > 0, got {self}")

    def pdf(self, x):
        return np.exp(-np.abs(np.asarray(x, dtype=float) - self.mean) / self.scale) / (2.0 * self.scale)

    def cdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.scale
        # -|z| keeps both branches of exp bounded
        half = 0.5 * np.exp(-np.abs(z))
        return np.where(z < 0, half, 1.0 - half)

    def quantile(self, q):
        if q < 0.5:
            return self.mean + self.scale * math.log(2.0 * q)
        return self.mean - self.scale * math.log(2.0 * (1.0 - q))

    def sample(self, rng, size):
        return rng.laplace(self.mean, self.scale, size)

    def params(self):
        return {"mean": self.mean, "scale": self.scale}


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    family = "uniform"

    def __post_init__(self):
        if not (math.isfinite(self.low) and math.isfinite(self.high) and self.low < self.high):
            raise InvalidAtomError(f"Uniform needs finite low < high, got {self}")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.low) & (x <= self.high)
        return np.where(inside, 1.0 / (self.high - self.low), 0.0)

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.low) / (self.high - self.low), 0.0, 1.0)

    def quantile(self, q):
        return self.low + q * (self.high - self.low)

    def sample(self, rng, size):
        return rng.uniform(self.low, self.high, size)

    def params(self):
        return {"low": self.low, "high": self.high}


@dataclass(frozen=True)
class DiscreteIndicator:
    """Point mass on one state of a variable with ``num_states`` states."""

    state: int
    num_states: int

    family = "indicator"

    def __post_init__(self):
        if not (self.num_states >= 1 and 0 <= self.state < self.num_states):
            raise InvalidAtomError(f"indicator needs 0 <= state < num_states, got {self}")

    def pdf(self, x):
        return np.where(np.asarray(x, dtype=float) == self.state, 1.0, 0.0)

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.state, 1.0, 0.0)

    def quantile(self, q):
        return float(self.state)

    def sample(self, rng, size):
        return np.full(size, float(self.state))

    def params(self):
        return {"state": self.state, "num_states": self.num_states}


Atom = Gaussian | Laplacian | Uniform | DiscreteIndicator

_FAMILIES = {cls.family: cls for cls in (Gaussian, Laplacian, Uniform, DiscreteIndicator)}


def atom_from_dict(d: Mapping) -> Atom:
    d = dict(d)
    family = d.pop("family", None)
    if family not in _FAMILIES:
        raise InvalidAtomError(f"unknown atom family {family!r}")
    try:
        if family == "indicator":
            return DiscreteIndicator(int(d["state"]), int(d["num_states"]))
        return _FAMILIES[family](**{k: float(v) for k, v in d.items()})
    except (KeyError, TypeError) as exc:
        raise InvalidAtomError(f"bad parameters for {family}: {exc}") from None


def atom_to_dict(atom: Atom) -> dict:
    return {"family": atom.family, **atom.params()}


def pdf_at(atom: Atom, x) -> float:
    """Density (or mass, for indicators) of ``atom`` at ``x``."""
    return float(atom.pdf(x))


def interval_mass(atom: Atom, interval) -> float:
    """Probability that ``atom`` assigns to ``[lo, hi]``, from cdf differences."""
    lo, hi = interval
    if lo > hi:
        raise InvalidIntervalError(f"interval [{lo}, {hi}] has lo > hi")
    return float(min(1.0, max(0.0, atom.cdf(hi) - atom.cdf(lo))))


@dataclass(frozen=True)
class Dictionary:
    """Ordered atoms for one coordinate.

    Continuous dictionaries carry a nominal ``[low, high]`` range; discrete
    ones carry ``num_states`` and hold only indicator atoms.
    """

    atoms: tuple
    low: float | None = None
    high: float | None = None
    num_states: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(self.atoms))
        if not self.atoms:
            raise ConfigError("dictionary needs at least one atom")
        if self.discrete:
            for a in self.atoms:
                if not isinstance(a, DiscreteIndicator) or a.num_states != self.num_states:
                    raise InvalidAtomError(
                        f"discrete dictionary with {self.num_states} states holds incompatible atom {a}")
        else:
            if self.low is None or self.high is None or not self.low < self.high:
                raise ConfigError(f"continuous dictionary needs low < high, got [{self.low}, {self.high}]")
            if any(isinstance(a, DiscreteIndicator) for a in self.atoms):
                raise InvalidAtomError("continuous dictionary cannot hold indicator atoms")

    @property
    def discrete(self) -> bool:
        return self.num_states is not None

    def __len__(self):
        return len(self.atoms)

    def pdf_matrix(self, x) -> np.ndarray:
        """Atom densities at each point, shape ``(len(x), L)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.stack([a.pdf(x) for a in self.atoms], axis=-1)

    def to_dict(self) -> dict:
        d = {"atoms": [atom_to_dict(a) for a in self.atoms]}
        if self.discrete:
            d["num_states"] = self.num_states
        else:
            d["range"] = [self.low, self.high]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Dictionary":
        atoms = [atom_from_dict(a) for a in d["atoms"]]
        if "num_states" in d:
            return cls(atoms, num_states=int(d["num_states"]))
        low, high = d["range"]
        return cls(atoms, low=float(low), high=float(high))


def identity_dictionary(num_states: int) -> Dictionary:
    """One indicator atom per state; discretizes to the identity matrix."""
    return Dictionary([DiscreteIndicator(s, num_states) for s in range(num_states)], num_states=num_states)


@dataclass(frozen=True)
class Grid:
    """Bin edges for one coordinate. Discrete grids put one bin around each state."""

    edges: np.ndarray = field(repr=False)
    discrete: bool = False

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or not np.all(np.diff(edges) > 0):
            raise ShapeError("grid edges must be a strictly increasing 1-D array with at least 2 entries")
        if not self.discrete and edges.size < 3:
            raise ShapeError("continuous grids need at least 2 intervals")
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)

    @classmethod
    def for_states(cls, num_states: int) -> "Grid":
        return cls(np.arange(num_states + 1, dtype=float) - 0.5, discrete=True)

    @classmethod
    def uniform(cls, low: float, high: float, bins: int) -> "Grid":
        return cls(np.linspace(low, high, bins + 1))

    @property
    def num_bins(self) -> int:
        return self.edges.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def bin_index(self, values) -> np.ndarray:
        """Bin of each value (closed on both outer edges); -1 marks out-of-range values."""
        values = np.asarray(values, dtype=float)
        idx = np.searchsorted(self.edges, values, side="right") - 1
        idx = np.where(values == self.edges[-1], self.num_bins - 1, idx)
        bad = (values < self.edges[0]) | (values > self.edges[-1]) | ~np.isfinite(values)
        return np.where(bad, -1, idx)

    def __eq__(self, other):
        return (isinstance(other, Grid) and self.discrete == other.discrete
                and np.array_equal(self.edges, other.edges))

    def __hash__(self):
        return hash((self.discrete, self.edges.tobytes()))


@dataclass(frozen=True)
class DiscretizedDictionary:
    matrix: np.ndarray = field(repr=False)
    dictionary: Dictionary
    grid: Grid
    coverage: np.ndarray = field(repr=False)


def discretize(dictionary: Dictionary, grid: Grid, coverage: float = DEFAULT_COVERAGE) -> DiscretizedDictionary:
    """Interval-mass matrix of ``dictionary`` on ``grid``.

    Each column is divided by the mass its atom places inside the grid so the
    columns are exactly stochastic. Atoms with less than ``coverage`` of their
    mass on the grid are rejected.
    """
    if dictionary.discrete and (not grid.discrete or grid.num_bins != dictionary.num_states):
        raise ShapeError(f"discrete dictionary with {dictionary.num_states} states needs a "
                         f"{dictionary.num_states}-bin state grid")
    edges = grid.edges
    cols = []
    for atom in dictionary.atoms:
        cdf = np.asarray(atom.cdf(edges), dtype=float)
        cols.append(np.clip(np.diff(cdf), 0.0, None))
    mat = np.stack(cols, axis=1)
    covered = mat.sum(axis=0)
    for atom, c in zip(dictionary.atoms, covered):
        if c < coverage:
            raise CoverageError(
                f"grid [{edges[0]:g}, {edges[-1]:g}] captures only {c:.4f} of atom {atom} "
                f"(threshold {coverage})", atom=atom, coverage=float(c))
    mat = mat / covered
    mat.setflags(write=False)
    return DiscretizedDictionary(mat, dictionary, grid, covered)


def dictionary_support(dictionary: Dictionary, coverage: float = DEFAULT_COVERAGE) -> tuple[float, float]:
    """Smallest interval holding at least ``coverage`` of every atom's mass."""
    tail = (1.0 - coverage) / 4.0
    lows = [a.quantile(tail) for a in dictionary.atoms]
    highs = [a.quantile(1.0 - tail) for a in dictionary.atoms]
    return min(lows), max(highs)


def build_dictionary_grid_preset(range_: Sequence[float], spacing: float,
                                 families: Mapping[str, Mapping[str, float]],
                                 uniforms: int = 0) -> Dictionary:
    """Place atoms of each family at evenly spaced means across ``range_``.

    ``families`` maps a family name (``"gaussian"`` or ``"laplacian"``) to its
    fixed shape parameter (``{"variance": v}`` or ``{"scale": s}``). Means run
    from ``a`` in steps of ``spacing`` up to and including ``b`` when it lands
    on the lattice. ``uniforms`` equal-width uniform atoms partitioning
    ``[a, b]`` are appended after the family atoms.
    """
    a, b = float(range_[0]), float(range_[1])
    if not spacing > 0:
        raise ConfigError(f"spacing must be positive, got {spacing}")
    if not b > a:
        raise ConfigError(f"range needs b > a, got [{a}, {b}]")
    if not families:
        raise ConfigError("dictionary preset needs at least one atom family")
    count = int(math.floor((b - a) / spacing + 1e-9)) + 1
    means = [a + k * spacing for k in range(count)]
    atoms: list = []
    for name, params in families.items():
        params = dict(params or {})
        if name == "gaussian":
            atoms += [Gaussian(m, float(params.get("variance", spacing ** 2))) for m in means]
        elif name == "laplacian":
            atoms += [Laplacian(m, float(params.get("scale", spacing))) for m in means]
        else:
            raise ConfigError(f"unknown preset family {name!r}")
    if uniforms:
        cuts = np.linspace(a, b, int(uniforms) + 1)
        atoms += [Uniform(float(lo), float(hi)) for lo, hi in zip(cuts[:-1], cuts[1:])]
    return Dictionary(atoms, low=a, high=b)


# Dictionaries used for the Seeds, Wifi and KTH-TIPS real-data experiments.
PRESETS = {
    "seeds": {"range": (10.0, 22.0), "spacing": 2.0, "families": {"gaussian": {"variance": 1.0}}, "uniforms": 2},
    "wifi": {"range": (-90.0, -36.0), "spacing": 4.0, "families": {"gaussian": {"variance": 4.0}}},
    "kth": {"range": (0.0, 1.0), "spacing": 0.04, "families": {"gaussian": {"variance": 4e-4}}},
}


def preset_dictionary(name: str, **overrides) -> Dictionary:
    if name not in PRESETS:
        raise ConfigError(f"unknown dictionary preset {name!r}; known: {sorted(PRESETS)}")
    params = {**PRESETS[name], **overrides}
    return build_dictionary_grid_preset(params["range"], params["spacing"], params["families"],
                                        params.get("uniforms", 0))
