"""Initial-data builders for slice states, selectable by name."""

from __future__ import annotations

import numpy as np
import jax.numpy as jnp
import scipy.linalg as sla

from .. import algebra
from ..lattice import Grid
from . import system as sy
from .state import SliceState


def _homogeneous(grid: Grid, value) -> jnp.ndarray:
    value = jnp.asarray(value)
    return jnp.broadcast_to(value, grid.dims + value.shape)


def minkowski(grid: Grid, a0=None) -> SliceState:
    """Identity tetrad, zero connection and multipliers; p and β from the constraints."""
    E = _homogeneous(grid, np.eye(4))
    a = jnp.zeros(grid.dims + (3, 4, 4))
    a0 = None if a0 is None else jnp.asarray(a0)
    if a0 is not None and a0.shape == (4, 4):
        a0 = _homogeneous(grid, a0)
    return sy.solve_constraints(grid, a, E, a0=a0)


def smooth_field(grid: Grid, rng: np.random.Generator, shape: tuple, modes: int = 2) -> np.ndarray:
    """Random periodic field built from Fourier modes |n_i| <= modes, unit rms per mode."""
    x = grid.coords()
    L = grid.extents
    out = np.zeros(grid.dims + shape)
    count = 0
    for n in np.ndindex(*(2 * modes + 1,) * grid.ndim):
        n = np.array(n) - modes
        phase = sum(2 * np.pi * n[i] * x[i] / L[i] for i in range(grid.ndim))
        coef = rng.standard_normal(shape)
        shift = rng.uniform(0, 2 * np.pi)
        out += np.cos(phase + shift)[(...,) + (None,) * len(shape)] * coef
        count += 1
    return out / np.sqrt(count)


def random_smooth(grid: Grid, seed: int = 0, amplitude: float = 0.1, modes: int = 2, solve: bool = True) -> SliceState:
    """Smooth random connection and near-identity tetrad.

    With ``solve=True`` p, β and λ_jk follow from :func:`system.solve_constraints`
    (λ_k0 = 0); otherwise every field is independent random data.
    """
    rng = np.random.default_rng(seed)
    asym = lambda f: np.asarray(algebra.antisymmetrize(f))  # noqa: E731
    a = asym(amplitude * smooth_field(grid, rng, (3, 4, 4), modes))
    E = np.eye(4) + amplitude * smooth_field(grid, rng, (4, 4), modes)
    a0 = asym(amplitude * smooth_field(grid, rng, (4, 4), modes))
    if solve:
        return sy.solve_constraints(grid, a, E, a0=a0)
    sp_asym = lambda f: 0.5 * (f - np.swapaxes(f, 3, 4))  # noqa: E731
    return SliceState(
        grid,
        a0=jnp.asarray(a0),
        a=jnp.asarray(a),
        p=jnp.asarray(asym(amplitude * smooth_field(grid, rng, (3, 4, 4), modes))),
        beta=jnp.asarray(sp_asym(asym(amplitude * smooth_field(grid, rng, (3, 3, 4, 4), modes)))),
        E=jnp.asarray(E),
        lam0=jnp.asarray(asym(amplitude * smooth_field(grid, rng, (3, 4, 4), modes))),
        lam=jnp.asarray(sp_asym(asym(amplitude * smooth_field(grid, rng, (3, 3, 4, 4), modes)))),
    )


def constant_curvature(grid: Grid, hubble: float = 0.5, t0: float = 0.0) -> SliceState:
    """Slice t = t0 of spatially flat de Sitter space (homogeneous, curvature 12 H²).

    a_k is the Levi-Civita spin connection on the slice and λ_k0 = F_k0 = -∂_t a_k.
    De Sitter is not a vacuum solution, so C5/C6 do not vanish on this state.
    """
    from ..analytic import _evaluate, de_sitter_flat

    sol = de_sitter_flat(hubble)
    z = np.zeros(1)
    frame = _evaluate(sol.frame, [t0 + z, z, z, z], (4, 4))[..., 0]
    conn = _evaluate(sol.connection, [t0 + z, z, z, z], (4, 4, 4))[..., 0]
    # central difference in t; the connection is analytic so a small step suffices
    dt = 1e-5
    dconn = (
        _evaluate(sol.connection, [t0 + dt + z, z, z, z], (4, 4, 4))[..., 0]
        - _evaluate(sol.connection, [t0 - dt + z, z, z, z], (4, 4, 4))[..., 0]
    ) / (2 * dt)
    E = _homogeneous(grid, np.linalg.inv(frame))
    a = _homogeneous(grid, conn[1:])
    lam0 = _homogeneous(grid, -dconn[1:])
    return sy.solve_constraints(grid, a, E, lam0=lam0)


def lam0_nullspace(E: np.ndarray, lam: np.ndarray | None = None) -> np.ndarray:
    """Basis (k, 3, 4, 4) of constant λ_k0 satisfying C5 and C6 for a constant tetrad and λ_jk = 0."""
    rows = []
    basis = []
    T = algebra.basis()
    for k in range(3):
        for a in range(6):
            L = np.zeros((3, 4, 4))
            L[k] = T[a]
            basis.append(L)
    for L in basis:
        c5 = np.einsum("kI,kIJ->J", E[1:], L)
        c6 = np.einsum("J,kIJ->kI", E[0], L)
        rows.append(np.concatenate([c5, c6.ravel()]))
    M = np.array(rows).T  # (16, 18)
    N = sla.null_space(M)
    return np.einsum("ni,nkIJ->ikIJ", N, np.array(basis))


def homogeneous_vacuum(grid: Grid, seed: int = 0, scale: float = 0.3) -> SliceState:
    """A spatially constant state satisfying all six constraints.

    Constant tetrad e, connection a_k = c_k ψ with ψ = Σ_j c_j p^j raised (so
    Σ_k [a_k, p^k] = 0 and F = 0), λ_k0 from the null space of C5/C6, random a_0.
    """
    rng = np.random.default_rng(seed)
    E = np.eye(4) + scale * 0.5 * rng.standard_normal((4, 4))
    eps = 1.0 / abs(np.linalg.det(E))
    B = eps * np.asarray(sy.tetrad_bivectors(jnp.asarray(E)))
    c = rng.standard_normal(3)
    psi = np.asarray(algebra.raise_(np.einsum("k,kIJ->IJ", c, B[0, 1:])))
    psi = psi / np.max(np.abs(psi))
    a = scale * c[:, None, None] * psi[None]
    N = lam0_nullspace(E)
    lam0 = scale * np.einsum("i,ikIJ->kIJ", rng.standard_normal(N.shape[0]), N)
    a0 = np.asarray(algebra.from_components(scale * rng.standard_normal(6)))
    return sy.solve_constraints(
        grid,
        _homogeneous(grid, a),
        _homogeneous(grid, E),
        lam0=_homogeneous(grid, lam0),
        a0=_homogeneous(grid, a0),
    )


BUILDERS = {
    "minkowski": minkowski,
    "random-smooth": random_smooth,
    "constant-curvature": constant_curvature,
    "homogeneous-vacuum": homogeneous_vacuum,
}


def build(name: str, grid: Grid, **params) -> SliceState:
    if name not in BUILDERS:
        raise KeyError(f"unknown initial-data builder {name!r}; available: {sorted(BUILDERS)}")
    return BUILDERS[name](grid, **params)
