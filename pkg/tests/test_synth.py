import math

import numpy as np
import pytest

from jupad.errors import ConfigError, DataError
from jupad.model import sample
from jupad.solver import FitConfig
from jupad.synth import (DMetric, FitDictionary, SynthSpec, d_metric, experiment_spec, generate_ground_truth,
                         run_experiment)


class Scaled:
    """Density stub: a fixed multiple of another model's density."""

    def __init__(self, model, factor):
        self.model, self.factor = model, factor

    def pdf(self, X):
        return self.factor * self.model.pdf(X)


@pytest.mark.parametrize("number,N,F", [(1, 5, 10), (2, 6, 8), (3, 7, 10), (4, 4, 8)])
def test_full_scale_experiments(number, N, F):
    truth = generate_ground_truth(experiment_spec(number, desk=False, seed=3))
    assert truth.ndim == N and truth.rank == F
    assert truth.weights.sum() == pytest.approx(1.0, abs=1e-12)
    for d, B in zip(truth.dictionaries, truth.factors):
        np.testing.assert_allclose(B.sum(axis=0), 1.0, atol=1e-12)
        if not d.discrete:
            assert len(d) == 5 * F
            # component r uses only its own block of five atoms
            assert np.count_nonzero(B, axis=0).max() == 5


def test_mixed_experiment_has_discrete_label():
    truth = generate_ground_truth(experiment_spec(4, desk=False))
    assert truth.dictionaries[3].discrete and truth.dictionaries[3].num_states == 10
    assert [d.discrete for d in truth.dictionaries] == [False, False, False, True]


def test_atom_parameters_lie_in_ranges():
    spec = SynthSpec(["laplacian", "gaussian"], rank=3, seed=1)
    truth = generate_ground_truth(spec)
    for d in truth.dictionaries:
        for a in d.atoms:
            p = a.params()
            assert -5 <= p["mean"] <= 5
            shape = p.get("scale", p.get("variance"))
            assert 1 <= shape <= 2


def test_spec_validation():
    with pytest.raises(ConfigError):
        SynthSpec(["weibull"], rank=2)
    with pytest.raises(ConfigError):
        SynthSpec(["gaussian"], rank=0)
    with pytest.raises(ConfigError):
        experiment_spec(5)


def test_d_metric_properties(rng):
    truth = generate_ground_truth(SynthSpec(["gaussian", "laplacian", "discrete:3"], rank=2, seed=2))
    other = generate_ground_truth(SynthSpec(["gaussian", "laplacian", "discrete:3"], rank=2, seed=5))
    pts = sample(truth, 500, 4)
    assert d_metric(truth, truth, pts) == 0.0
    assert d_metric(Scaled(truth, math.e), truth, pts) == pytest.approx(1.0, abs=1e-12)
    ab, ba = d_metric(other, truth, pts), d_metric(truth, other, pts)
    assert ab == pytest.approx(ba, rel=1e-12) and ab > 0
    assert d_metric(truth, truth, pts, M=10) == 0.0


def test_d_metric_zero_density_reports_count(rng):
    truth = generate_ground_truth(SynthSpec(["gaussian"], rank=1, seed=0))
    pts = sample(truth, 20, 0)
    d = d_metric(Scaled(truth, 0.0), truth, pts)
    assert isinstance(d, DMetric) and math.isinf(d) and d.zero_count == 20
    with pytest.raises(DataError):
        d_metric(truth, Scaled(truth, 0.0), pts)


def test_preset_fit_dictionary_covers_samples():
    truth = generate_ground_truth(SynthSpec(["gaussian", "discrete:4"], rank=2, seed=1))
    data = sample(truth, 2000, 1)
    dicts = FitDictionary(spacing=1.0).build(truth, data)
    assert dicts[1].discrete and dicts[1].num_states == 4
    means = [a.mean for a in dicts[0].atoms]
    assert np.allclose(np.diff(means), 1.0)
    assert means[0] <= np.quantile(data[:, 0], 0.001) and means[-1] >= np.quantile(data[:, 0], 0.999)
    assert FitDictionary(mode="oracle").build(truth, data) == list(truth.dictionaries)
    with pytest.raises(ConfigError):
        FitDictionary(mode="learned").build(truth, data)


def test_run_experiment_rows_and_determinism():
    spec = SynthSpec(["gaussian"] * 3, rank=2, atoms_per_component=2, seed=7)
    cfg = FitConfig(rank=2, bins=8, stage1_max_iter=200, stage3_max_sweeps=10)
    kw = dict(config=cfg, trials=2, dictionary=FitDictionary(mode="oracle"), test_size=200)
    rows = run_experiment(spec, [2000, 500], **kw)
    assert [r["n_samples"] for r in rows] == [500, 2000]
    assert set(rows[0]) == {"n_samples", "mean_d", "std_d", "wall_time", "trials"}
    assert all(np.isfinite(r["mean_d"]) and r["std_d"] >= 0 and r["trials"] == 2 for r in rows)
    again = run_experiment(spec, [2000, 500], **kw)
    assert [(r["mean_d"], r["std_d"]) for r in rows] == [(r["mean_d"], r["std_d"]) for r in again]


def test_desk_scale_experiments():
    for number in (1, 2, 3, 4):
        spec = experiment_spec(number)
        assert (spec.ndim, spec.rank) == (4, 5)
    assert experiment_spec(4).dims[-1] == "discrete:10"
