"""Internal Lorentz and spatial diffeomorphism generators on slice states.

The bare generators act on (a_k, e):

    X^G_ψ:  δa_k = ∇_k ψ,           δe^mu_I = e^mu_K M(ψ)^K_I
    X^D_ξ:  δa_k = ξ^j F_{kj},      δe^mu_I = -ξ^j ∇_j e^mu_I

with ∇_j e = ∂_j e - e M(a_j).  :func:`lift_gauge` and :func:`lift_diffeo` extend them to every block so that
the lifted vector is tangent to the constraint set up to discretization error.
"""

from __future__ import annotations

from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from .. import algebra, lattice
from ..lattice import Grid
from . import system as sy
from .state import SliceState, pack


def _zeros_like_state(x: SliceState) -> SliceState:
    return jax.tree_util.tree_map(jnp.zeros_like, x)


def _field(value, grid: Grid, shape: tuple):
    v = jnp.asarray(value)
    if v.shape == shape:
        v = jnp.broadcast_to(v, grid.dims + shape)
    if v.shape != grid.dims + shape:
        raise ValueError(f"expected shape {grid.dims + shape} or {shape}, got {v.shape}")
    return v


def tetrad_covariant_derivative(E, a, j: int, grid: Grid):
    """∇_j e^mu_I = ∂_j e^mu_I - e^mu_K a_j^K_I."""
    return lattice.partial(E, j, grid) - E @ algebra.to_matrix(a[..., j, :, :])


def gauge_generator(psi, x: SliceState) -> SliceState:
    """Bare X^G_ψ: only the a and E blocks are non-zero."""
    g = x.grid
    psi = _field(psi, g, (4, 4))
    da = jnp.stack([lattice.covariant_derivative(x.a, psi, k, g) for k in range(3)], axis=3)
    dE = x.E @ algebra.to_matrix(psi)
    return _zeros_like_state(x).replace(a=da, E=dE)


def diffeo_generator(xi, x: SliceState, transport: str = "vector") -> SliceState:
    """Bare X^D_ξ for a spatial vector field ξ^j with shape (*dims, 3) or (3,).

    ``transport="scalar"`` uses δe^mu_I = -ξ^j ∇_j e^mu_I for every leg.  The default
    ``"vector"`` adds e^j_I ∂_j ξ^k to the spatial legs e^k, i.e. Lie-drags them as the
    vector fields they are; only this form lies in the kernel of Ω_∞.
    """
    if transport not in ("scalar", "vector"):
        raise ValueError(f"transport must be 'scalar' or 'vector', got {transport!r}")
    g = x.grid
    xi = _field(xi, g, (3,))
    F = lattice.field_strength(x.a, g)
    da = jnp.einsum("...j,...kjIJ->...kIJ", xi, F)
    dE = -sum(xi[..., j, None, None] * tetrad_covariant_derivative(x.E, x.a, j, g) for j in range(3))
    if transport == "vector":
        dxi = jnp.stack([lattice.partial(xi, j, g) for j in range(3)], axis=-2)  # [j, k] = ∂_j ξ^k
        dE = dE.at[..., 1:, :].add(jnp.einsum("...jI,...jk->...kI", x.E[..., 1:, :], dxi))
    return _zeros_like_state(x).replace(a=da, E=dE)


def bivector_variation(E, dE, mu: int, nu: int):
    """Derivative of ε e^mu_[I e^nu_J] along δe, exact for any δe.

    δε = -ε e^I_rho δe^rho_I; half of that trace is removed from each leg.
    """
    frame = jnp.linalg.inv(E)  # frame[..., I, mu] = e^I_mu
    eps = sy.slice_epsilon(E)[..., None, None]
    trace = jnp.einsum("...Lm,...mL->...", frame, dE)[..., None]
    # δε/ε = -trace; split the trace between the two tetrad legs via the projectors
    d_mu = dE[..., mu, :] - 0.5 * trace * E[..., mu, :]
    d_nu = dE[..., nu, :] - 0.5 * trace * E[..., nu, :]
    return eps * (algebra_bivector(d_mu, E[..., nu, :]) + algebra_bivector(E[..., mu, :], d_nu))


def algebra_bivector(u, v):
    return 0.5 * (u[..., :, None] * v[..., None, :] - v[..., :, None] * u[..., None, :])


def momentum_lift(E, dE):
    """δp^k_{IJ} = ε(U^L_[I δe^0_L e^k_J] + e^0_[I W^{kL}_{jJ]} δe^j_L).

    Here δe^j_L stands for ψ_L^K e^j_K for a gauge generator and for -ξ^i ∇_i e^j_L for
    a diffeomorphism.  Returns shape (*dims, 3, 4, 4).
    """
    frame = jnp.linalg.inv(E)
    eps = sy.slice_epsilon(E)[..., None, None]
    e0, ek = E[..., 0, :], E[..., 1:, :]
    de0, dek = dE[..., 0, :], dE[..., 1:, :]
    # U^L_I δe^0_L = δe^0_I - e^0_I (e^L_0 δe^0_L)
    u = de0 - E[..., 0, :] * jnp.einsum("...L,...L->...", frame[..., :, 0], de0)[..., None]
    # W^{kL}_{jJ} δe^j_L = δe^k_J - e^k_J sum_j e^L_j δe^j_L
    tr = jnp.einsum("...Lj,...jL->...", frame[..., :, 1:], dek)[..., None, None]
    w = dek - ek * tr
    return eps[..., None, :, :] * (
        algebra_bivector(u[..., None, :], ek) + algebra_bivector(e0[..., None, :], w)
    )


@dataclass
class LiftedGenerator:
    kind: str
    vector: SliceState
    tangency: dict[str, float]

    def max_tangency(self) -> float:
        return max(self.tangency.values())


def _lift_blocks(x: SliceState, bare: SliceState, dlam0, da0) -> SliceState:
    g = x.grid
    dE = bare.E
    dp = momentum_lift(x.E, dE)
    dbeta = jnp.stack(
        [jnp.stack([bivector_variation(x.E, dE, j + 1, k + 1) for k in range(3)], axis=3) for j in range(3)],
        axis=3,
    )
    dlam = jax.jvp(lambda a: lattice.field_strength(a, g), (x.a,), (bare.a,))[1]
    return bare.replace(p=dp, beta=dbeta, lam=dlam, lam0=dlam0, a0=da0)


def lift_gauge(psi, x: SliceState) -> LiftedGenerator:
    """X^G_ψ on every block: p and β by the tetrad variation, λ_jk = δF, λ_k0 and a_0 rotate."""
    g = x.grid
    psi = _field(psi, g, (4, 4))
    bare = gauge_generator(psi, x)
    v = _lift_blocks(
        x,
        bare,
        algebra.commutator(x.lam0, psi[..., None, :, :]),
        algebra.commutator(x.a0, psi),
    )
    return LiftedGenerator("gauge", v, tangency(x, v))


def lift_diffeo(xi, x: SliceState, transport: str = "vector") -> LiftedGenerator:
    """X^D_ξ on every block: λ_k0 is transported by -ξ^j ∇_j, a_0 is left fixed."""
    g = x.grid
    xi = _field(xi, g, (3,))
    bare = diffeo_generator(xi, x, transport)
    dlam0 = -sum(
        xi[..., j, None, None, None]
        * jnp.stack([lattice.covariant_derivative(x.a, x.lam0[..., k, :, :], j, g) for k in range(3)], axis=3)
        for j in range(3)
    )
    v = _lift_blocks(x, bare, dlam0, jnp.zeros_like(x.a0))
    return LiftedGenerator("diffeo", v, tangency(x, v))


def tangency(x: SliceState, X: SliceState) -> dict[str, float]:
    """Max-abs directional derivative of each constraint family along X, relative to max|X|."""
    _, d = jax.jvp(sy.constraint_residuals, (x,), (X,))
    scale = float(jnp.max(jnp.abs(pack(X))))
    scale = scale if scale > 0 else 1.0
    return {k: float(jnp.max(jnp.abs(v))) / scale for k, v in d.items()}


# -- algebra closure ----------------------------------------------------------------------


def _rms(v) -> float:
    v = jnp.asarray(v)
    return float(jnp.sqrt(jnp.mean(v * v))) if v.size else 0.0


def _ae(X: SliceState):
    return jnp.concatenate([algebra.components(X.a).ravel(), X.E.ravel()])


def vector_field_commutator(fX, fY, x: SliceState) -> SliceState:
    """[X, Y](x) = DY(x)[X(x)] - DX(x)[Y(x)] for state-valued vector fields."""
    X, Y = fX(x), fY(x)
    return jax.jvp(fY, (x,), (X,))[1] - jax.jvp(fX, (x,), (Y,))[1]


def gauge_commutator_residual(psi, phi, x: SliceState) -> float:
    """RMS of [X^G_ψ, X^G_φ] - X^G_[ψ,φ] on (a, e), divided by rms(ψ) rms(φ)."""
    g = x.grid
    psi = _field(psi, g, (4, 4))
    phi = _field(phi, g, (4, 4))
    lhs = vector_field_commutator(lambda s: gauge_generator(psi, s), lambda s: gauge_generator(phi, s), x)
    rhs = gauge_generator(algebra.commutator(psi, phi), x)
    den = _rms(algebra.components(psi)) * _rms(algebra.components(phi))
    return _rms(_ae(lhs - rhs)) / den


def lie_bracket(xi, zeta, grid: Grid):
    """Discrete [ξ, ζ]^k = ξ^j ∂_j ζ^k - ζ^j ∂_j ξ^k with central differences."""
    return sum(
        xi[..., j, None] * lattice.partial(zeta, j, grid) - zeta[..., j, None] * lattice.partial(xi, j, grid)
        for j in range(3)
    )


def divergence(xi, grid: Grid):
    return sum(lattice.partial(xi[..., j], j, grid) for j in range(3))


def divergence_free(grid: Grid, seed: int = 0, modes: int = 1, amplitude: float = 1.0):
    """Smooth periodic ξ = curl A; the discrete divergence vanishes to rounding."""
    from .builders import smooth_field

    A = amplitude * smooth_field(grid, np.random.default_rng(seed), (3,), modes)
    d = lambda f, k: lattice.partial(jnp.asarray(f), k, grid)  # noqa: E731
    return jnp.stack(
        [d(A[..., 2], 1) - d(A[..., 1], 2), d(A[..., 0], 2) - d(A[..., 2], 0), d(A[..., 1], 0) - d(A[..., 0], 1)],
        axis=-1,
    )


def diffeo_commutator_residual(
    xi, zeta, x: SliceState, gauge_corrected: bool = False, transport: str = "vector"
) -> float:
    """RMS of [X^D_ξ, X^D_ζ] - X^D_[ξ,ζ] on (a, e), divided by rms(ξ) rms(ζ).

    With ``gauge_corrected=True`` the field-dependent gauge term X^G_χ with
    χ = -ξ^j ζ^k F_jk is added to X^D_[ξ,ζ]; the remainder is then O(h²).
    """
    g = x.grid
    xi = _field(xi, g, (3,))
    zeta = _field(zeta, g, (3,))
    lhs = vector_field_commutator(
        lambda s: diffeo_generator(xi, s, transport), lambda s: diffeo_generator(zeta, s, transport), x
    )
    rhs = diffeo_generator(lie_bracket(xi, zeta, g), x, transport)
    if gauge_corrected:
        chi = jnp.einsum("...j,...k,...jkIJ->...IJ", xi, zeta, lattice.field_strength(x.a, g))
        rhs = rhs - gauge_generator(chi, x)
    return _rms(_ae(lhs - rhs)) / (_rms(xi) * _rms(zeta))


# -- finite gauge transformations -----------------------------------------------------------


@dataclass
class GaugeTransformResult:
    state: SliceState
    lorentz_defect: float
    recomputed: tuple[str, ...] = ("p", "beta", "lam")


def gauge_transform(lam, x: SliceState, tol: float = 1e-10) -> GaugeTransformResult:
    """Act with a (time independent) Lorentz field Λ^I_J on a slice state.

    a_k → Λ a_k Λᵀ - ∂_k Λ η Λᵀ, e → e Λ⁻¹, a_0 and λ_k0 rotate adjointly.  p, β and
    λ_jk are recomputed from the constraints, so λ_jk = F of the new connection.
    """
    g = x.grid
    lam = _field(lam, g, (4, 4))
    eta = jnp.asarray(algebra.ETA)
    defect = float(jnp.max(jnp.abs(jnp.einsum("...ki,kl,...lj->...ij", lam, eta, lam) - eta)))
    if defect > tol:
        raise ValueError(f"Λ is not a Lorentz field (max defect {defect:.2e})")
    lamT = jnp.swapaxes(lam, -1, -2)
    rot = lambda f: lam @ f @ lamT  # noqa: E731
    inhom = jnp.stack([lattice.partial(lam, k, g) @ eta @ lamT for k in range(3)], axis=3)
    a = algebra.antisymmetrize(jnp.einsum("...IK,...kKL,...JL->...kIJ", lam, x.a, lam) - inhom)
    E = x.E @ jnp.linalg.inv(lam)
    lam0 = jnp.einsum("...IK,...kKL,...JL->...kIJ", lam, x.lam0, lam)
    y = sy.solve_constraints(g, a, E, lam0=lam0, a0=rot(x.a0))
    return GaugeTransformResult(y, defect)


def lorentz_field(psi, t: float = 1.0):
    """Λ = exp(-t M(ψ)) sitewise, so d/dt at t = 0 reproduces X^G_ψ."""
    return algebra.lorentz_exp(-t * jnp.asarray(psi))
