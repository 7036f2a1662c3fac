"""Acceptance criteria, each checked at its stated tolerance.

Every test prints one ``CRITERION k: PASS|FAIL`` line with the measured numbers
before asserting, so ``pytest -v`` shows the outcome of every criterion.
"""

import time

import jax.numpy as jnp
import numpy as np

from palatini_pca import algebra, cli, geometry, lattice
from palatini_pca import multipliers as mu
from palatini_pca import palatini as pl
from palatini_pca import presymplectic as ps
from palatini_pca.analytic import schwarzschild_isotropic
from palatini_pca.geometry import MetricField
from palatini_pca.lattice import Grid
from palatini_pca.palatini import builders
from palatini_pca.palatini import dynamics as dy
from palatini_pca.palatini import generators as ge
from palatini_pca.palatini import state as st
from palatini_pca.palatini import system as sy


def report(capsys, k: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} - {detail}")


# -- 1 --------------------------------------------------------------------------------------


def test_criterion_1_flat_vacuum_exactness(capsys):
    t0 = time.perf_counter()
    g3 = Grid((8, 8, 8), 0.5)
    x = pl.minkowski(g3)
    res = sy.residual_norms(x)
    H = abs(float(sy.extended_hamiltonian(x)))
    g4 = Grid((8, 8, 8, 8), 0.5)
    E = jnp.broadcast_to(jnp.eye(4), g4.dims + (4, 4))
    torsion, einstein = dy.einstein_residual(E, jnp.zeros(g4.dims + (4, 4, 4)), g4)
    worst = max(*res.values(), H, float(jnp.max(jnp.abs(torsion))), float(jnp.max(jnp.abs(einstein))))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-13 and dt < 10
    report(capsys, 1, ok, f"max residual {worst:.1e} (C1-C6, H, torsion, Einstein), {dt:.1f} s")
    assert ok


# -- 2 --------------------------------------------------------------------------------------


def test_criterion_2_pca_stabilizes_at_step_two(capsys):
    t0 = time.perf_counter()
    rep = cli.run("pca", {"grid": {"dims": [6, 6, 6], "h": 0.5}, "options": {"system": "palatini"}})
    dt = time.perf_counter() - t0
    steps = rep.tables["steps"]
    step2_new = steps[1]["new_constraints"] if len(steps) > 1 else None
    ok = (
        rep.values["stabilized_at"] == 2
        and step2_new == []
        and rep.values["relative_hamiltonian"] <= 1e-10
        and dt < 60
    )
    report(
        capsys, 2, ok,
        f"stabilized at {rep.values['stabilized_at']}, step-2 new {step2_new}, "
        f"relative H {rep.values['relative_hamiltonian']:.1e}, {dt:.0f} s",
    )
    assert ok


# -- 3 --------------------------------------------------------------------------------------


def test_criterion_3_kernel_structure(capsys):
    g = Grid((4, 4, 4), 0.5)
    W = sy.build_omega(g)
    K = ps.kernel(W).basis
    labels = np.array(st.coordinate_labels(g))
    free = np.isin(labels, ["a0", "beta", "E0", "Ek", "lam0", "lam"])
    dim_ok = K.shape[1] == int(free.sum())
    cross = float(np.max(np.abs(K[~free]), initial=0.0))
    # the coordinate directions lie in the span of the basis
    span = float(np.max(np.abs(K @ (K[free].T) - np.eye(W.shape[0])[:, free])))
    worst = {"gauge": 0.0, "diffeo": 0.0, "evolution": 0.0}
    for seed in range(10):
        x = pl.homogeneous_vacuum(g, seed=seed)
        J = sy.constraint_jacobian(x)
        rng = np.random.default_rng(100 + seed)
        psi = algebra.antisymmetrize(builders.smooth_field(g, rng, (4, 4), 1))
        xi = ge.divergence_free(g, seed=200 + seed)
        worst["gauge"] = max(worst["gauge"], sy.kernel_membership(x, pl.lift_gauge(psi, x).vector, J))
        worst["diffeo"] = max(worst["diffeo"], sy.kernel_membership(x, pl.lift_diffeo(xi, x).vector, J))
        worst["evolution"] = max(worst["evolution"], sy.kernel_membership(x, dy.evolution_vector(x), J))
    ok = dim_ok and cross <= 1e-12 and span <= 1e-12 and max(worst.values()) <= 1e-10
    report(
        capsys, 3, ok,
        f"kernel dim {K.shape[1]} vs {int(free.sum())}, cross-terms {cross:.1e}, span defect {span:.1e}, "
        + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()),
    )
    assert ok


# -- 4 --------------------------------------------------------------------------------------


def test_criterion_4_generator_algebra_closure(capsys):
    g8 = Grid((8, 8, 8), 2 * np.pi / 8)
    x = pl.random_smooth(g8, seed=42)
    rng = np.random.default_rng(42)
    gauge = []
    for _ in range(20):
        psi, phi = (algebra.antisymmetrize(builders.smooth_field(g8, rng, (4, 4), 1)) for _ in range(2))
        gauge.append(ge.gauge_commutator_residual(psi, phi, x))
    gauge_ok = max(gauge) <= 1e-10

    literal, corrected = [], []
    for n in (8, 16, 32):
        g = Grid((n,) * 3, 2 * np.pi / n)
        y = pl.random_smooth(g, seed=0, amplitude=0.3, modes=1)
        xi, zeta = ge.divergence_free(g, 1), ge.divergence_free(g, 2)
        literal.append(ge.diffeo_commutator_residual(xi, zeta, y))
        corrected.append(ge.diffeo_commutator_residual(xi, zeta, y, gauge_corrected=True))
    order = lambda r: np.log2(np.array(r[:-1]) / np.array(r[1:]))  # noqa: E731
    lit_orders, cor_orders = order(literal), order(corrected)
    diffeo_ok = bool(np.all((lit_orders >= 1.6) & (lit_orders <= 2.4)))
    ok = gauge_ok and diffeo_ok
    report(
        capsys, 4, ok,
        f"gauge closure max {max(gauge):.2e} over 20 field pairs (tol 1e-10); "
        f"diffeo residual {', '.join(f'{r:.3f}' for r in literal)} orders {np.round(lit_orders, 2).tolist()}; "
        f"diagnostic with gauge term: {', '.join(f'{r:.3f}' for r in corrected)} orders {np.round(cor_orders, 2).tolist()}",
    )
    assert ok


# -- 5 --------------------------------------------------------------------------------------


def test_criterion_5_curved_solution_convergence(capsys):
    sol = schwarzschild_isotropic(1.0)
    rows = []
    for n in (4, 8, 16):
        g = Grid((n,) * 4, 1.0 / n, (0.0, 3.0, 3.0, 3.0))
        E, a = sol.sample(g)
        torsion, einstein = dy.einstein_residual(E, a, g)
        m = lattice.interior_mask(g)
        rows.append((float(np.max(np.abs(np.asarray(torsion)[m]))), float(np.max(np.abs(np.asarray(einstein)[m])))))
    r = np.array(rows)
    orders = np.log2(r[:-1] / r[1:])
    ok = bool(np.all(np.abs(orders - 2) <= 0.4)) and r[-1].max() < 1e-2
    report(
        capsys, 5, ok,
        f"torsion {r[:, 0].tolist()}, Einstein {r[:, 1].tolist()}, orders {np.round(orders, 2).tolist()}",
    )
    assert ok


# -- 6 --------------------------------------------------------------------------------------


def test_criterion_6_multiplier_equivalence(capsys):
    worst_m, worst_grad, missing, unmatched = 0.0, 0.0, [], []
    names = ["circle", "shifted_circle", "sphere", "ellipse", "identity"]
    for name in names:
        p = mu.load_problem({"name": name})
        ext = mu.brute_force_extrema(p, samples=10_000)
        # every brute-force extremum is recovered from a nearby seed
        for e in ext:
            sol = mu.solve_critical(p, mu.seed_from_n(p, e.n + 1e-2))
            d = float(np.linalg.norm(sol.m - e.m))
            worst_m = max(worst_m, d)
            worst_grad = max(worst_grad, max(float(np.max(np.abs(b))) for b in mu.extended_gradient(p, sol)))
            if d > 1e-6:
                missing.append((name, e.m.tolist()))
        # every solver critical point from scattered seeds is a brute-force extremum
        rng = np.random.default_rng(7)
        for _ in range(8):
            n0 = np.array([rng.uniform(lo + 0.1, hi - 0.1) for lo, hi, _ in p.domain])
            try:
                sol = mu.solve_critical(p, mu.seed_from_n(p, n0))
            except (mu.ConvergenceError, mu.RankDeficientError):
                continue
            if not mu.is_local_extremum(p, sol.n):
                continue  # saddle of F∘Φ: not an extremum, so nothing to match
            d = min(float(np.linalg.norm(sol.m - e.m)) for e in ext)
            if d > 1e-6:
                unmatched.append((name, sol.m.tolist()))
    ok = not missing and not unmatched and worst_m <= 1e-6 and worst_grad <= 1e-8
    report(
        capsys, 6, ok,
        f"{len(names)} problems, max |m - m_bf| {worst_m:.1e}, max gradient block {worst_grad:.1e}, "
        f"missing {missing}, unmatched {unmatched}",
    )
    assert ok


# -- 7 --------------------------------------------------------------------------------------


def test_criterion_7_topological_limit(capsys):
    g = Grid((4, 4, 4, 4), 0.5)
    a, P = pl.random_configuration(g, seed=11)
    r = pl.topological_limit_gap(a, P, [1.0, 10.0, 100.0, 1000.0], g)
    ok = abs(r["exponent"] + 1) <= 0.01
    report(capsys, 7, ok, f"exponent {r['exponent']:.6f}, gaps {[f'{v:.3e}' for v in r['gap']]}")
    assert ok


# -- 8 --------------------------------------------------------------------------------------


def test_criterion_8_covariant_bracket(capsys):
    rng = np.random.default_rng(8)
    sysc = ps.canonical_system(2, potential=lambda q: float(np.sum(q**4)))
    Pc = ps.Connection.orthogonal(sysc)
    oracle_err = anti_err = leib_err = 0.0
    for _ in range(10):
        c = rng.uniform(-1, 1, 6)
        x = rng.uniform(-1, 1, 4)
        F = lambda y, c=c: float(np.sin(c[0] * y[0] + c[1] * y[1]) + c[2] * y[2] * y[3])  # noqa: E731
        G = lambda y, c=c: float(np.exp(c[3] * y[1]) * y[2] + c[4] * y[0] ** 2 * y[3])  # noqa: E731
        K = lambda y, c=c: float(c[5] * y[0] * y[3] + np.cos(y[1]))  # noqa: E731
        b = lambda A, B, x=x: ps.covariant_bracket(sysc, Pc, A, B, x)  # noqa: E731
        gF, gG = ps.fd_gradient(F, x), ps.fd_gradient(G, x)
        # canonical pairs: {F, G} = Σ ∂F/∂q ∂G/∂p - ∂F/∂p ∂G/∂q
        oracle = gF[:2] @ gG[2:] - gF[2:] @ gG[:2]
        oracle_err = max(oracle_err, abs(b(F, G) - oracle))
        anti_err = max(anti_err, abs(b(F, G) + b(G, F)))
        leib_err = max(leib_err, abs(b(lambda y: F(y) * G(y), K) - F(x) * b(G, K) - G(x) * b(F, K)))
    toy = ps.toy_degenerate()
    Pt = ps.Connection.orthogonal(toy)
    kern_err = 0.0
    for _ in range(10):
        c = rng.uniform(-1, 1, 4)
        x = np.array([*rng.uniform(-1, 1, 2), 0.0])
        F = lambda y, c=c: float(c[0] * y[0] * y[1] + np.sin(y[0]))  # noqa: E731
        G = lambda y, c=c: float(y[1] ** 2 + c[1] * y[0])  # noqa: E731
        Fz = lambda y, c=c, F=F: F(y) + c[2] * np.sin(y[2]) + c[3] * y[2] ** 2  # noqa: E731
        kern_err = max(kern_err, abs(ps.covariant_bracket(toy, Pt, Fz, G, x) - ps.covariant_bracket(toy, Pt, F, G, x)))
    ok = oracle_err <= 1e-10 and anti_err <= 1e-8 and leib_err <= 1e-8 and kern_err <= 1e-10
    report(
        capsys, 8, ok,
        f"oracle {oracle_err:.1e}, antisymmetry {anti_err:.1e}, Leibniz {leib_err:.1e}, kernel perturbation {kern_err:.1e}",
    )
    assert ok


# -- 9 --------------------------------------------------------------------------------------


def _flat(n):
    g = Grid((n,) * 4, 2 * np.pi / n)
    eta = np.broadcast_to(algebra.ETA, g.dims + (4, 4))
    return g, MetricField(eta, eta)


def test_criterion_9_dewitt_condition(capsys):
    eta = algebra.ETA
    g, m = _flat(8)
    t, xx, y, z = g.coords()
    D = lambda f, k: np.asarray(lattice.partial(f, k, g))  # noqa: E731
    rng = np.random.default_rng(9)
    # generic gradient perturbation δg = ∂ξ + (∂ξ)ᵀ
    c = rng.standard_normal((4, 3))
    xi = np.stack([c[k, 0] * np.sin(xx + t) + c[k, 1] * np.cos(y - z) + c[k, 2] * np.sin(z + 2 * t) for k in range(4)], -1)
    dg = np.zeros(g.dims + (4, 4))
    for r in range(4):
        for s in range(4):
            dg[..., r, s] = D(xi[..., s], r) + D(xi[..., r], s)
    res = np.asarray(geometry.dewitt_residual(m, dg, g))
    div = sum(eta[r, r] * D(xi[..., r], r) for r in range(4))
    oracle = np.stack(
        [eta[k, k] * (1.5 * D(div, k) - 0.5 * sum(eta[n, n] * D(D(xi[..., k], n), n) for n in range(4))) for k in range(4)],
        axis=-1,
    )
    oracle_err = float(np.max(np.abs(res - oracle)))
    nonzero = float(np.max(np.abs(res)))
    # superposition
    d2 = rng.standard_normal(g.dims + (4, 4))
    d2 = d2 + np.swapaxes(d2, -1, -2)
    a, b = 1.7, -0.6
    lin = float(np.max(np.abs(
        np.asarray(geometry.dewitt_residual(m, a * dg + b * d2, g))
        - a * res - b * np.asarray(geometry.dewitt_residual(m, d2, g))
    )))
    # transverse traceless wave
    tt = []
    for n in (8, 16):
        gn, mn = _flat(n)
        tn, _, _, zn = gn.coords()
        w = np.zeros(gn.dims + (4, 4))
        ph = np.cos(tn - zn)
        w[..., 1, 1], w[..., 2, 2] = ph, -ph
        w[..., 1, 2] = w[..., 2, 1] = 0.5 * ph
        tt.append(float(np.max(np.abs(np.asarray(geometry.dewitt_residual(mn, w, gn))))))
    ok = lin <= 1e-12 and oracle_err <= 1e-8 and nonzero > 1e-2 and max(tt) <= 1e-10
    report(
        capsys, 9, ok,
        f"superposition {lin:.1e}, TT wave {max(tt):.1e}, gradient mode |R| {nonzero:.2f} vs oracle {oracle_err:.1e}",
    )
    assert ok
