import numpy as np
import pytest

from palatini_pca.lattice import Grid
from palatini_pca.palatini import topological as tp


@pytest.fixture(scope="module")
def g():
    return Grid((4, 4, 4, 4), 0.5)


def test_zero_P_has_no_gap(g):
    a, P = tp.random_configuration(g, seed=0)
    P = np.zeros_like(P)
    r = tp.topological_limit_gap(a, P, [1.0, 10.0], g)
    assert r["gap"] == [0.0, 0.0] and r["S0"] == 0.0


def test_gap_equals_quadratic_term(g):
    a, P = tp.random_configuration(g, seed=1)
    iu = np.triu_indices(4, 1)
    quad = np.sum(P[..., iu[0], iu[1]] ** 2) * g.cell_volume
    for G in (0.5, 3.0, 40.0):
        gap = abs(tp.ym_action_with_G(a, P, G, g) - tp.bf_action(a, P, g))
        assert gap == pytest.approx(quad / (4 * G), rel=1e-12)


def test_gap_halves_when_G_doubles(g):
    a, P = tp.random_configuration(g, seed=2)
    r = tp.topological_limit_gap(a, P, [2.0, 4.0], g)
    assert r["gap"][1] == pytest.approx(r["gap"][0] / 2, rel=1e-12)


def test_exponent_is_minus_one(g):
    a, P = tp.random_configuration(g, seed=3)
    r = tp.topological_limit_gap(a, P, [1, 10, 100, 1000], g)
    assert abs(r["exponent"] + 1) < 0.01


def test_bf_action_linear_in_P(g):
    a, P = tp.random_configuration(g, seed=4)
    assert tp.bf_action(a, 2 * P, g) == pytest.approx(2 * tp.bf_action(a, P, g), rel=1e-12)
    assert tp.bf_action(np.zeros_like(a), P, g) == 0.0


def test_configuration_symmetries(g):
    _, P = tp.random_configuration(g, seed=5)
    assert np.allclose(P, -np.swapaxes(P, -1, -2))
    assert np.allclose(P, -np.swapaxes(P, -4, -3))


def test_errors(g):
    a, P = tp.random_configuration(g, seed=6)
    with pytest.raises(ValueError):
        tp.ym_action_with_G(a, P, 0.0, g)
    with pytest.raises(ValueError):
        tp.bf_action(a[..., :3, :, :], P, g)
    with pytest.raises(ValueError):
        tp.bf_action(a[0], P[0], Grid((4, 4, 4), 0.5))
