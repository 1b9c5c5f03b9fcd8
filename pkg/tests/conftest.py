import numpy as np
import pytest

from jupad.atoms import Dictionary, Gaussian, Grid, Laplacian, Uniform, identity_dictionary
from jupad.model import JointModel


def random_simplex(rng, shape):
    x = rng.uniform(0.05, 1.0, shape)
    return x / x.sum(axis=0)


def random_dictionary(rng, L, low=-3.0, high=3.0):
    atoms = []
    for l in range(L):
        kind = l % 3
        m = float(rng.uniform(low, high))
        if kind == 0:
            atoms.append(Gaussian(m, float(rng.uniform(0.3, 1.5))))
        elif kind == 1:
            atoms.append(Laplacian(m, float(rng.uniform(0.3, 1.2))))
        else:
            atoms.append(Uniform(m - 1.0, m + float(rng.uniform(0.5, 2.0))))
    return Dictionary(atoms, low=low, high=high)


def make_random_model(rng, N=3, F=2, L=4, bins=8, discrete=()):
    """Random model with grids wide enough for every atom."""
    dicts, grids, factors = [], [], []
    for n in range(N):
        if n in discrete:
            C = discrete[n] if isinstance(discrete, dict) else L
            d = identity_dictionary(C)
            g = Grid.for_states(C)
        else:
            d = random_dictionary(rng, L)
            g = Grid.uniform(-12.0, 12.0, bins)
        dicts.append(d)
        grids.append(g)
        factors.append(random_simplex(rng, (len(d), F)))
    return JointModel(dicts, factors, random_simplex(rng, F), grids)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
