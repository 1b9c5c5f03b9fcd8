"""Joint density estimation from pairwise marginals with dictionary-factored
low-rank mixtures."""

__version__ = "0.1.0"

from .atoms import (Dictionary, DiscreteIndicator, Gaussian, Grid, Laplacian, Uniform,
                    build_dictionary_grid_preset, discretize, identity_dictionary, interval_mass, pdf_at,
                    preset_dictionary)
from .histogram import Dataset, estimate_all_pairs, estimate_pairwise, propose_grid
from .model import JointModel, map_classify, marginal_1d, pairwise_marginal, pdf_eval, sample
from .solver import FitConfig, fit
from .synth import SynthSpec, d_metric, generate_ground_truth, run_experiment

__all__ = [
    "Dataset", "Dictionary", "DiscreteIndicator", "FitConfig", "Gaussian", "Grid", "JointModel",
    "Laplacian", "SynthSpec", "Uniform", "build_dictionary_grid_preset", "d_metric", "discretize",
    "estimate_all_pairs", "estimate_pairwise", "fit", "generate_ground_truth", "identity_dictionary",
    "interval_mass", "map_classify", "marginal_1d", "pairwise_marginal", "pdf_at", "pdf_eval",
    "preset_dictionary", "propose_grid", "run_experiment", "sample",
]
