import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from jupad.atoms import (Dictionary, DiscreteIndicator, Gaussian, Grid, Laplacian, Uniform, PRESETS,
                         build_dictionary_grid_preset, discretize, identity_dictionary, interval_mass,
                         pdf_at, preset_dictionary, atom_from_dict, atom_to_dict)
from jupad.errors import ConfigError, CoverageError, InvalidAtomError, InvalidIntervalError


def test_pdf_examples():
    assert pdf_at(Uniform(0, 1), 0.5) == 1.0
    assert pdf_at(Gaussian(0, 1), 0.0) == pytest.approx(0.3989422804014327, abs=1e-15)
    assert pdf_at(Laplacian(0, 1), 0.0) == 0.5
    assert pdf_at(DiscreteIndicator(2, 4), 2) == 1.0
    assert pdf_at(DiscreteIndicator(2, 4), 1) == 0.0


@pytest.mark.parametrize("atom", [Gaussian(0, 1), Laplacian(0, 1), Gaussian(3, 0.25), Laplacian(-2, 1.7)])
def test_pdf_integrates_to_one(atom):
    total, _ = quad(lambda x: pdf_at(atom, x), -np.inf, np.inf, points=None)
    assert total == pytest.approx(1.0, abs=1e-8)


def test_quadrature_oracle_for_gaussian_peak():
    # unit-variance normal density at its mean, recomputed from the quadrature-normalized kernel
    z, _ = quad(lambda x: math.exp(-x * x / 2), -np.inf, np.inf)
    assert pdf_at(Gaussian(0, 1), 0.0) == pytest.approx(1.0 / z, abs=1e-12)


def test_interval_mass_examples():
    assert interval_mass(Uniform(0, 1), (0, 0.5)) == 0.5
    assert interval_mass(Gaussian(0, 1), (-np.inf, 0)) == 0.5
    oracle, _ = quad(lambda x: 0.5 * math.exp(-abs(x)), 0, 1)
    assert oracle == pytest.approx(0.31606027941427883, abs=1e-12)
    assert interval_mass(Laplacian(0, 1), (0, 1)) == pytest.approx(oracle, abs=1e-12)


def test_interval_mass_rejects_reversed_interval():
    with pytest.raises(InvalidIntervalError):
        interval_mass(Gaussian(0, 1), (1, 0))


@pytest.mark.parametrize("bad", [lambda: Gaussian(0, 0), lambda: Gaussian(0, -1), lambda: Laplacian(0, 0),
                                 lambda: Uniform(1, 1), lambda: DiscreteIndicator(3, 3),
                                 lambda: DiscreteIndicator(-1, 3), lambda: Gaussian(float("nan"), 1)])
def test_invalid_atoms(bad):
    with pytest.raises(InvalidAtomError):
        bad()


atoms_st = st.one_of(
    st.builds(Gaussian, st.floats(-10, 10), st.floats(0.05, 5)),
    st.builds(Laplacian, st.floats(-10, 10), st.floats(0.05, 5)),
    st.builds(lambda lo, w: Uniform(lo, lo + w), st.floats(-10, 10), st.floats(0.1, 10)),
)


@settings(max_examples=60, deadline=None)
@given(atoms_st, st.lists(st.floats(-30, 30), min_size=1, max_size=8))
def test_partition_masses_sum_to_one(atom, cuts):
    edges = np.concatenate([[-np.inf], np.sort(cuts), [np.inf]])
    total = sum(interval_mass(atom, (lo, hi)) for lo, hi in zip(edges[:-1], edges[1:]))
    assert total == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(atoms_st, st.floats(-15, 15), st.floats(0, 10))
def test_interval_mass_matches_quadrature(atom, lo, width):
    hi = lo + width
    breaks = [p for p in _kinks(atom) if lo < p < hi]
    oracle, _ = quad(lambda x: pdf_at(atom, x), lo, hi, points=breaks or None, epsabs=1e-12, epsrel=1e-12,
                     limit=200)
    assert interval_mass(atom, (lo, hi)) == pytest.approx(oracle, abs=1e-8)


def _kinks(atom):
    if isinstance(atom, Uniform):
        return [atom.low, atom.high]
    return [atom.mean]


def test_discretize_identity_preset():
    dd = discretize(identity_dictionary(3), Grid.for_states(3))
    np.testing.assert_array_equal(dd.matrix, np.eye(3))


def test_discretize_uniform_column():
    d = Dictionary([Uniform(0, 1)], low=0, high=1)
    dd = discretize(d, Grid(np.array([0.0, 0.5, 1.0])))
    np.testing.assert_allclose(dd.matrix[:, 0], [0.5, 0.5], atol=1e-15)


def test_discretize_gaussian_renormalized_by_covered_mass():
    d = Dictionary([Gaussian(0, 1)], low=-4, high=4)
    edges = [-4.0, -1.0, 1.0, 4.0]
    masses = [quad(lambda x: pdf_at(Gaussian(0, 1), x), a, b, epsabs=1e-14)[0] for a, b in zip(edges[:-1], edges[1:])]
    covered = sum(masses)
    assert covered == pytest.approx(0.99994, abs=1e-5)
    dd = discretize(d, Grid(np.array(edges)))
    np.testing.assert_allclose(dd.matrix[:, 0], np.array(masses) / covered, atol=1e-10)
    # frozen from the quadrature oracle above
    np.testing.assert_allclose(dd.matrix[:, 0], [0.1586337, 0.6827326, 0.1586337], atol=1e-7)
    assert dd.coverage[0] == pytest.approx(covered, abs=1e-10)


def test_discretize_rejects_poor_coverage():
    d = Dictionary([Gaussian(0, 1), Gaussian(3.5, 1)], low=-4, high=4)
    with pytest.raises(CoverageError) as info:
        discretize(d, Grid(np.linspace(-4, 4, 9)))
    assert info.value.atom == Gaussian(3.5, 1)
    assert "3.5" in str(info.value)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(0.05, 1.0)), min_size=1, max_size=6),
       st.integers(2, 30))
def test_discretize_columns_are_stochastic(params, bins):
    atoms = [Gaussian(m, v) for m, v in params]
    d = Dictionary(atoms, low=-2, high=2)
    dd = discretize(d, Grid.uniform(-8, 8, bins))
    assert np.all(dd.matrix >= 0)
    np.testing.assert_allclose(dd.matrix.sum(axis=0), 1.0, atol=1e-12)


def test_appendix_presets():
    seeds = preset_dictionary("seeds")
    assert len(seeds) == 9
    assert [a.mean for a in seeds.atoms[:7]] == [10, 12, 14, 16, 18, 20, 22]
    assert all(a.variance == 1.0 for a in seeds.atoms[:7])
    assert seeds.atoms[7:] == (Uniform(10, 16), Uniform(16, 22))

    wifi = preset_dictionary("wifi")
    assert len(wifi) == 14 and all(isinstance(a, Gaussian) and a.variance == 4 for a in wifi.atoms)
    assert wifi.atoms[0].mean == -90 and wifi.atoms[-1].mean == -38

    kth = preset_dictionary("kth")
    assert len(kth) == 26
    assert kth.atoms[-1].mean == pytest.approx(1.0)
    assert all(a.variance == 4e-4 for a in kth.atoms)


def test_grid_preset_families_and_errors():
    d = build_dictionary_grid_preset((0, 4), 1, {"gaussian": {"variance": 0.5}, "laplacian": {"scale": 0.3}})
    assert len(d) == 10
    assert sum(isinstance(a, Laplacian) for a in d.atoms) == 5
    with pytest.raises(ConfigError):
        build_dictionary_grid_preset((0, 4), 1, {})
    with pytest.raises(ConfigError):
        build_dictionary_grid_preset((0, 4), 0, {"gaussian": {}})
    with pytest.raises(ConfigError):
        build_dictionary_grid_preset((4, 0), 1, {"gaussian": {}})
    assert set(PRESETS) == {"seeds", "wifi", "kth"}


def test_dictionary_domain_rules():
    with pytest.raises(InvalidAtomError):
        Dictionary([DiscreteIndicator(0, 3)], num_states=4)
    with pytest.raises(InvalidAtomError):
        Dictionary([DiscreteIndicator(0, 3)], low=0, high=1)
    with pytest.raises(ConfigError):
        Dictionary([], low=0, high=1)


def test_atom_serialization_round_trip():
    for atom in [Gaussian(0.1, 2.5), Laplacian(-3, 0.7), Uniform(1, 2), DiscreteIndicator(1, 5)]:
        assert atom_from_dict(atom_to_dict(atom)) == atom
    d = preset_dictionary("seeds")
    assert Dictionary.from_dict(d.to_dict()) == d


def test_grid_bin_index():
    g = Grid(np.array([0.0, 0.5, 1.0]))
    np.testing.assert_array_equal(g.bin_index([0.0, 0.25, 0.5, 1.0, 1.5, -0.1]), [0, 0, 1, 1, -1, -1])
