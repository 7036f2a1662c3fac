import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from palatini_pca import algebra, geometry, lattice
from palatini_pca.analytic import de_sitter_flat
from palatini_pca.geometry import MetricField, SingularTetradError, TetradField
from palatini_pca.lattice import Grid

ETA = algebra.ETA


def _random_tetrad(seed, shape=(3,)):
    r = np.random.default_rng(seed)
    return TetradField.from_inverse_frame(np.eye(4) + 0.3 * r.standard_normal(shape + (4, 4)))


def test_identity_tetrad_gives_minkowski():
    tet = TetradField.from_inverse_frame(np.eye(4)[None])
    m = geometry.metric_from_tetrad(tet)
    np.testing.assert_array_equal(m.g[0], ETA)
    np.testing.assert_array_equal(m.g_inv[0], ETA)
    assert float(geometry.epsilon(tet)[0]) == 1.0


def test_diagonal_tetrad():
    N, b = 1.7, 0.6
    tet = TetradField.from_inverse_frame(np.diag([1 / N, 1 / b, 1 / b, 1 / b])[None])
    m = geometry.metric_from_tetrad(tet)
    np.testing.assert_allclose(m.g_inv[0], np.diag([-1 / N**2, 1 / b**2, 1 / b**2, 1 / b**2]), rtol=1e-14)
    np.testing.assert_allclose(geometry.epsilon(tet)[0], N * b**3, rtol=1e-14)


@given(st.integers(0, 10_000))
def test_tetrad_conditions_hold_identically(seed):
    tet = _random_tetrad(seed)
    m = geometry.metric_from_tetrad(tet)
    cond = np.einsum("...mn,...mI,...nJ->...IJ", m.g, tet.E, tet.E)
    np.testing.assert_allclose(cond, np.broadcast_to(ETA, cond.shape), atol=1e-12)
    dual = np.einsum("...mn,...Im,...Jn->...IJ", m.g_inv, tet.frame, tet.frame)
    np.testing.assert_allclose(dual, np.broadcast_to(ETA, dual.shape), atol=1e-12)
    assert m.inverse_defect() < 1e-12 and m.is_lorentzian()
    np.testing.assert_allclose(geometry.epsilon_from_metric(m), geometry.epsilon(tet), rtol=1e-12)


def test_epsilon_scaling_and_lorentz_invariance(rng):
    tet = _random_tetrad(3)
    scaled = TetradField.from_frame(2.0 * tet.frame)
    np.testing.assert_allclose(geometry.epsilon(scaled), 16.0 * geometry.epsilon(tet), rtol=1e-14)
    lam = np.asarray(algebra.lorentz_exp(algebra.from_components(rng.standard_normal(6))))
    rot = tet.rotated(lam)
    rel = np.abs(np.asarray(geometry.epsilon(rot)) / np.asarray(geometry.epsilon(tet)) - 1)
    assert rel.max() < 1e-12


def test_singular_tetrad_reports_site():
    E = np.broadcast_to(np.eye(4), (2, 3, 4, 4)).copy()
    E[1, 2] = 0.0
    with pytest.raises(SingularTetradError) as exc:
        TetradField.from_inverse_frame(E)
    assert tuple(exc.value.site) == (1, 2)


def test_non_lorentzian_metric_rejected():
    m = MetricField(np.eye(4)[None], np.eye(4)[None])
    with pytest.raises(ValueError):
        geometry.epsilon_from_metric(m)


def test_palatini_map_identity_value_and_symmetries():
    tet = TetradField.from_inverse_frame(np.eye(4)[None])
    a = np.zeros((1, 4, 4, 4))
    a_out, P = geometry.palatini_map(a, tet)
    assert a_out is a
    assert float(P[0, 0, 1, 0, 1]) == 0.5
    _, P = geometry.palatini_map(a, _random_tetrad(5, (1,)))
    P = np.asarray(P)
    np.testing.assert_array_equal(P, -np.swapaxes(P, -4, -3))
    np.testing.assert_array_equal(P, -np.swapaxes(P, -1, -2))


def test_palatini_map_has_injective_differential():
    import jax

    E0 = np.eye(4) + 0.2 * np.random.default_rng(2).standard_normal((4, 4))

    def P_of(E):
        return geometry.palatini_map(None, TetradField.from_inverse_frame(E[None], check=False))[1].ravel()

    J = np.asarray(jax.jacfwd(P_of)(E0)).reshape(-1, 16)
    s = np.linalg.svd(J, compute_uv=False)
    assert s.min() / s.max() > 1e-6 and J.shape[1] == 16


def test_palatini_map_equivariance(rng):
    tet = _random_tetrad(7, (2,))
    lam = np.asarray(algebra.lorentz_exp(algebra.from_components(rng.standard_normal(6))))
    _, P = geometry.palatini_map(None, tet)
    _, Pr = geometry.palatini_map(None, tet.rotated(lam))
    # e^mu_I → e^mu_K (Λ⁻¹)^K_I, so lower indices pick up Λ⁻¹ on each slot
    inv = np.linalg.inv(lam)
    ref = np.einsum("...mnKL,KI,LJ->...mnIJ", np.asarray(P), inv, inv)
    np.testing.assert_allclose(Pr, ref, atol=1e-12)


def test_scalar_curvature_flat_and_sign():
    g = Grid((4, 4, 4, 4), 0.5)
    tet = TetradField.from_inverse_frame(np.broadcast_to(np.eye(4), g.dims + (4, 4)))
    F0 = lattice.field_strength(np.zeros(g.dims + (4, 4, 4)), g)
    assert np.max(np.abs(geometry.scalar_curvature(tet, F0))) == 0.0
    r = np.random.default_rng(0)
    F = r.standard_normal(g.dims + (4, 4, 4, 4))
    np.testing.assert_array_equal(geometry.scalar_curvature(tet, -F), -geometry.scalar_curvature(tet, F))
    with pytest.raises(ValueError):
        geometry.scalar_curvature(tet, F[:2])


def test_scalar_curvature_de_sitter_converges():
    # the contraction -e e F is the negative of the standard scalar curvature 12 H²
    sol = de_sitter_flat(0.5)
    errs = []
    for n in (4, 8, 16):
        g = Grid((n,) * 4, 1.0 / n)
        E, a = sol.sample(g)
        R = np.asarray(geometry.scalar_curvature(TetradField.from_inverse_frame(E), lattice.field_strength(a, g)))
        m = lattice.interior_mask(g)
        errs.append(np.max(np.abs(R[m] + 3.0)))
    assert errs[-1] < 1e-3
    assert all(3.2 < errs[i] / errs[i + 1] < 4.8 for i in range(2)), errs


def test_ricci_trace_matches_scalar_curvature(rng):
    tet = _random_tetrad(11, (2,))
    F = algebra.antisymmetrize(rng.standard_normal((2, 4, 4, 4, 4)))
    F = 0.5 * (F - np.swapaxes(F, 1, 2))
    Ric = geometry.ricci(tet, F)
    m = geometry.metric_from_tetrad(tet)
    np.testing.assert_allclose(np.einsum("...mn,...mn->...", m.g_inv, Ric), geometry.scalar_curvature(tet, F), atol=1e-12)


# -- DeWitt condition ------------------------------------------------------------------------


def _flat(n):
    g = Grid((n,) * 4, 2 * np.pi / n)
    eta = np.broadcast_to(ETA, g.dims + (4, 4))
    return g, MetricField(eta, eta)


def _tt_wave(g):
    t, x, y, z = g.coords()
    dg = np.zeros(g.dims + (4, 4))
    phase = np.cos(t - z)  # null wave vector along z
    dg[..., 1, 1] = phase
    dg[..., 2, 2] = -phase
    dg[..., 1, 2] = dg[..., 2, 1] = 0.5 * phase
    return dg


def _gauge_mode(g, seed=0):
    r = np.random.default_rng(seed)
    t, x, y, z = g.coords()
    c = r.standard_normal((4, 3))
    xi = np.stack([c[m, 0] * np.sin(x + t) + c[m, 1] * np.cos(y - z) + c[m, 2] * np.sin(z + 2 * t) for m in range(4)], -1)
    D = lambda f, k: np.asarray(lattice.partial(f, k, g))  # noqa: E731
    dg = np.zeros(g.dims + (4, 4))
    for r_ in range(4):
        for s in range(4):
            dg[..., r_, s] = D(xi[..., s], r_) + D(xi[..., r_], s)
    return xi, dg


def test_dewitt_zero_and_asymmetric_input():
    g, m = _flat(4)
    assert np.max(np.abs(geometry.dewitt_residual(m, np.zeros(g.dims + (4, 4)), g))) == 0.0
    bad = np.zeros(g.dims + (4, 4))
    bad[..., 0, 1] = 1.0
    with pytest.raises(ValueError):
        geometry.dewitt_residual(m, bad, g)


def test_dewitt_vanishes_on_tt_wave():
    for n in (8, 16):
        g, m = _flat(n)
        assert np.max(np.abs(geometry.dewitt_residual(m, _tt_wave(g), g))) < 1e-12


def test_dewitt_gauge_mode_matches_hand_oracle():
    # flat background: R^mu = (3/2) ∂^mu (∂·ξ) - ½ □ξ^mu with the same central differences
    g, m = _flat(8)
    xi, dg = _gauge_mode(g)
    D = lambda f, k: np.asarray(lattice.partial(f, k, g))  # noqa: E731
    div = sum(ETA[r, r] * D(xi[..., r], r) for r in range(4))
    oracle = np.stack(
        [ETA[mu, mu] * (1.5 * D(div, mu) - 0.5 * sum(ETA[n, n] * D(D(xi[..., mu], n), n) for n in range(4))) for mu in range(4)],
        axis=-1,
    )
    res = np.asarray(geometry.dewitt_residual(m, dg, g))
    assert np.max(np.abs(res)) > 0.1
    np.testing.assert_allclose(res, oracle, atol=1e-8)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_dewitt_is_linear(a, b):
    g, m = _flat(4)
    _, d1 = _gauge_mode(g, 1)
    _, d2 = _gauge_mode(g, 2)
    lhs = geometry.dewitt_residual(m, a * d1 + b * d2, g)
    rhs = a * geometry.dewitt_residual(m, d1, g) + b * geometry.dewitt_residual(m, d2, g)
    assert np.max(np.abs(np.asarray(lhs - rhs))) < 1e-12 * max(1.0, abs(a) + abs(b)) * 10
