"""Ground-truth generators, the log-likelihood-ratio error metric, and the
sample-size benchmark protocol."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .atoms import Dictionary, Gaussian, Laplacian, build_dictionary_grid_preset, identity_dictionary
from .errors import ConfigError, DataError
from .histogram import Dataset
from .model import JointModel, sample
from .solver import FitConfig, fit

log = logging.getLogger(__name__)

FAMILIES = ("laplacian", "gaussian")


@dataclass
class SynthSpec:
    """Recipe for a random ground-truth model.

    ``dims`` lists one recipe per coordinate: ``"laplacian"`` or
    ``"gaussian"`` (a mixture of ``atoms_per_component`` atoms per component),
    or ``"discrete:C"`` (a random pmf over ``C`` states per component).
    """

    dims: list
    rank: int
    atoms_per_component: int = 5
    mean_range: tuple = (-5.0, 5.0)
    shape_range: tuple = (1.0, 2.0)
    seed: int = 0

    def __post_init__(self):
        self.dims = list(self.dims)
        if not self.dims:
            raise ConfigError("synthetic spec needs at least one dimension")
        if self.rank < 1 or self.atoms_per_component < 1:
            raise ConfigError("rank and atoms_per_component must be positive")
        if not (self.mean_range[0] < self.mean_range[1] and 0 < self.shape_range[0] <= self.shape_range[1]):
            raise ConfigError(f"invalid parameter ranges {self.mean_range}, {self.shape_range}")
        for d in self.dims:
            _parse_recipe(d)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def discrete_states(self) -> list:
        return [_parse_recipe(d)[1] for d in self.dims]


def _parse_recipe(recipe: str):
    if recipe in FAMILIES:
        return recipe, None
    if isinstance(recipe, str) and recipe.startswith("discrete:"):
        C = int(recipe.split(":", 1)[1])
        if C < 1:
            raise ConfigError(f"discrete recipe needs at least one state: {recipe!r}")
        return "discrete", C
    raise ConfigError(f"unknown dimension recipe {recipe!r}")


def experiment_spec(number: int, desk: bool = True, seed: int = 0) -> SynthSpec:
    """Configurations of the four synthetic experiments.

    ``desk=True`` shrinks every experiment to ``N=4`` and ``F=5`` so a full
    sweep runs in minutes.
    """
    full = {
        1: (["laplacian"] * 5, 10),
        2: (["gaussian"] * 6, 8),
        3: (["laplacian"] * 5 + ["gaussian"] * 2, 10),
        4: (["gaussian"] * 3 + ["discrete:10"], 8),
    }
    small = {
        1: (["laplacian"] * 4, 5),
        2: (["gaussian"] * 4, 5),
        3: (["laplacian"] * 2 + ["gaussian"] * 2, 5),
        4: (["gaussian"] * 3 + ["discrete:10"], 5),
    }
    if number not in full:
        raise ConfigError(f"experiment must be 1-4, got {number}")
    dims, rank = (small if desk else full)[number]
    return SynthSpec(dims, rank, seed=seed)


def generate_ground_truth(spec: SynthSpec) -> JointModel:
    """Random model: each continuous coordinate's dictionary is exactly the
    ``atoms_per_component * rank`` atoms drawn for it, and component ``r``
    mixes its own block of atoms."""
    rng = np.random.default_rng(spec.seed)
    F, K = spec.rank, spec.atoms_per_component
    lam = rng.uniform(0.0, 1.0, F)
    lam /= lam.sum()
    dictionaries, factors = [], []
    for recipe in spec.dims:
        kind, C = _parse_recipe(recipe)
        if kind == "discrete":
            dictionaries.append(identity_dictionary(C))
            B = rng.uniform(0.0, 1.0, (C, F))
            factors.append(B / B.sum(axis=0))
            continue
        means = rng.uniform(*spec.mean_range, (F, K))
        shapes = rng.uniform(*spec.shape_range, (F, K))
        w = rng.uniform(0.0, 1.0, (F, K))
        w /= w.sum(axis=1, keepdims=True)
        atom = Laplacian if kind == "laplacian" else Gaussian
        atoms = [atom(float(m), float(s)) for m, s in zip(means.ravel(), shapes.ravel())]
        B = np.zeros((F * K, F))
        for r in range(F):
            B[r * K:(r + 1) * K, r] = w[r]
        dictionaries.append(Dictionary(atoms, low=spec.mean_range[0], high=spec.mean_range[1]))
        factors.append(B)
    return JointModel(dictionaries, factors, lam)


class DMetric(float):
    """Float value of the metric, carrying the number of test points where the
    estimate had zero density (the value is then ``inf``)."""

    zero_count: int = 0

    def __new__(cls, value, zero_count=0):
        obj = super().__new__(cls, value)
        obj.zero_count = zero_count
        return obj


def d_metric(f_hat: JointModel, f_true: JointModel, points, M: int | None = None) -> DMetric:
    """Mean absolute log-ratio of the two densities over the first ``M`` points."""
    points = np.asarray(points, dtype=float)
    if M is not None:
        points = points[:M]
    p_true = f_true.pdf(points)
    if np.any(p_true <= 0):
        raise DataError("reference density is zero at some test points")
    p_hat = f_hat.pdf(points)
    zeros = int(np.sum(p_hat <= 0))
    if zeros:
        return DMetric(math.inf, zeros)
    return DMetric(float(np.mean(np.abs(np.log(p_hat) - np.log(p_true)))))


@dataclass
class FitDictionary:
    """How the benchmark builds dictionaries for the fitted model.

    ``mode="oracle"`` reuses the generator's atoms; ``mode="preset"`` places
    atoms of the named families every ``spacing`` units across the range of
    the training samples, trimmed to the ``trim`` and ``1 - trim`` quantiles.
    """

    mode: str = "preset"
    spacing: float = 1.0
    families: dict = field(default_factory=lambda: {"gaussian": {"variance": 1.0}})
    uniforms: int = 0
    trim: float = 0.001

    def build(self, truth: JointModel, data: np.ndarray) -> list:
        if self.mode == "oracle":
            return list(truth.dictionaries)
        if self.mode != "preset":
            raise ConfigError(f"unknown dictionary mode {self.mode!r}")
        out = []
        for n, d in enumerate(truth.dictionaries):
            if d.discrete:
                out.append(identity_dictionary(d.num_states))
                continue
            lo, hi = np.quantile(data[:, n], [self.trim, 1.0 - self.trim])
            lo = math.floor(lo / self.spacing) * self.spacing
            hi = math.ceil(hi / self.spacing) * self.spacing
            out.append(build_dictionary_grid_preset((lo, hi), self.spacing, self.families, self.uniforms))
        return out


def _dataset_for(truth: JointModel, values: np.ndarray) -> Dataset:
    states = [d.num_states if d.discrete else None for d in truth.dictionaries]
    return Dataset(values, num_states=states)


def run_trial(truth: JointModel, n_samples: int, config: FitConfig, dictionary: FitDictionary,
              test_points: np.ndarray, seed) -> float:
    train = sample(truth, n_samples, seed)
    model = fit(_dataset_for(truth, train), dictionary.build(truth, train), config)
    return d_metric(model, truth, test_points)


def run_experiment(spec: SynthSpec, sample_sizes: Sequence[int], config: FitConfig | None = None,
                   trials: int = 5, dictionary: FitDictionary | None = None, test_size: int = 1000) -> list:
    """D versus training-set size.

    Trial ``t`` draws its own ground truth and test set, shared across all
    sample sizes. Returns one row per sample size with the mean and standard
    deviation of D over trials and the total wall time.
    """
    config = config or FitConfig(rank=spec.rank)
    dictionary = dictionary or FitDictionary()
    per_size = {n: [] for n in sample_sizes}
    seconds = {n: 0.0 for n in sample_sizes}
    for t in range(trials):
        seq = np.random.SeedSequence([spec.seed, t])
        truth_seed, test_seed, fit_seed, *sample_seeds = seq.generate_state(3 + len(sample_sizes))
        truth = generate_ground_truth(replace(spec, seed=int(truth_seed)))
        test = sample(truth, test_size, int(test_seed))
        cfg = replace(config, seed=int(fit_seed))
        for n, s in zip(sample_sizes, sample_seeds):
            start = time.perf_counter()
            d = run_trial(truth, int(n), cfg, dictionary, test, int(s))
            seconds[n] += time.perf_counter() - start
            log.info("trial %d  N_s=%d  D=%.4f", t, n, d)
            per_size[n].append(float(d))
    rows = []
    for n in sorted(sample_sizes):
        vals = np.asarray(per_size[n])
        rows.append({"n_samples": int(n), "mean_d": float(vals.mean()), "std_d": float(vals.std()),
                     "wall_time": seconds[n], "trials": trials})
    return rows
