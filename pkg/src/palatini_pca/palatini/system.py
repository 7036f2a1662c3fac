"""Pre-symplectic form, extended Hamiltonian and constraint residuals on a slice.

Contractions between an upper and a lower internal pair use the collective index
(sum over I < J, see :func:`palatini_pca.algebra.pair`).  Spatial index pairs are
summed over all ordered (j, k), so each independent pair j < k counts twice.

    H = ∫ Σ_k p^k·(∇_k a0 - 2 λ_k0) + Σ_jk β_jk·(F_jk - λ_jk)
          + 2 Σ_k λ_k0·ε e^0 e^k + Σ_jk λ_jk·ε e^j e^k

with e^μ e^ν the bivector e^μ_[I e^ν_J].  The kernel-direction derivatives of H
are, family by family, the constraints returned by :func:`constraint_residuals`.
"""

from __future__ import annotations

from functools import lru_cache

import jax
import jax.numpy as jnp
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import lsmr

from .. import algebra, lattice
from ..geometry import bivector
from ..lattice import Grid
from . import state as st
from .state import SliceState

FAMILIES = ("C1", "C2", "C3", "C4", "C5", "C6")
# independent numbers per site in each residual family
FAMILY_SIZES = {"C1": 6, "C2": 18, "C3": 18, "C4": 18, "C5": 4, "C6": 12}
# which coordinate block of the kernel generates which family at the first step
KERNEL_FAMILIES = {"a0": "C1", "beta": "C2", "lam0": "C3", "lam": "C4", "E0": "C5", "Ek": "C6"}


def slice_epsilon(E):
    """ε = |det e^I_mu| = 1 / |det e^mu_I|."""
    return 1.0 / jnp.abs(jnp.linalg.det(E))


def tetrad_bivectors(E):
    """B[..., mu, nu, I, J] = e^mu_[I e^nu_J] (lower internal indices)."""
    return bivector(E[..., :, None, :], E[..., None, :, :])


def _check_tetrad(E, tol: float = 1e-12):
    det = np.asarray(jnp.linalg.det(E))
    if np.any(np.abs(det) <= tol):
        from ..geometry import SingularTetradError

        site = np.argwhere(np.abs(det) <= tol)[0]
        raise SingularTetradError(site, float(det[tuple(site)]))


def _cov_div_dual(a, p, grid: Grid):
    return sum(lattice.covariant_derivative_dual(a, p[..., k, :, :], k, grid) for k in range(3))


def hamiltonian_densities(x: SliceState, absolute: bool = False) -> dict:
    """The four groups of terms of 𝓗^ext as scalar densities per site.

    With ``absolute=True`` every factor is replaced by its absolute value, giving
    the magnitude against which cancellations are measured.
    """
    g = x.grid
    eps = slice_epsilon(x.E)[..., None, None, None]
    B = eps[..., None] * tetrad_bivectors(x.E)
    F = lattice.field_strength(x.a, g)
    Da0 = jnp.stack([lattice.covariant_derivative(x.a, x.a0, k, g) for k in range(3)], axis=3)
    f = jnp.abs if absolute else (lambda v: v)
    return {
        "p": jnp.sum(algebra.pair(f(Da0) + 2 * f(x.lam0), f(x.p)) if absolute else algebra.pair(Da0 - 2 * x.lam0, x.p), axis=-1),
        "beta": jnp.sum(algebra.pair(f(F) + f(x.lam), f(x.beta)) if absolute else algebra.pair(F - x.lam, x.beta), axis=(-2, -1)),
        "lam0": 2 * jnp.sum(algebra.pair(f(x.lam0), f(B[..., 0, 1:, :, :])), axis=-1),
        "lam": jnp.sum(algebra.pair(f(x.lam), f(B[..., 1:, 1:, :, :])), axis=(-2, -1)),
    }


def hamiltonian_terms(x: SliceState) -> dict:
    return {k: float(lattice.integrate(v, x.grid)) for k, v in hamiltonian_densities(x).items()}


def extended_hamiltonian(x: SliceState, check: bool = True):
    if check:
        _check_tetrad(x.E)
    return lattice.integrate(sum(hamiltonian_densities(x).values()), x.grid)


def relative_hamiltonian(x: SliceState) -> float:
    """|𝓗^ext| relative to the integral of its term magnitudes (absolute if those vanish)."""
    dens = hamiltonian_densities(x, absolute=True)
    scale = sum(float(jnp.sum(v)) * x.grid.cell_volume for v in dens.values())
    h = abs(float(extended_hamiltonian(x)))
    return h / scale if scale > 0 else h


def constraint_residuals(x: SliceState) -> dict:
    """The six residual families C1..C6, each a field over the slice."""
    g = x.grid
    eps = slice_epsilon(x.E)[..., None, None, None]
    B = eps[..., None] * tetrad_bivectors(x.E)
    F = lattice.field_strength(x.a, g)
    E0, Ek = x.E[..., 0, :], x.E[..., 1:, :]
    return {
        "C1": _cov_div_dual(x.a, x.p, g),
        "C2": F - x.lam,
        "C3": x.p - B[..., 0, 1:, :, :],
        "C4": x.beta - B[..., 1:, 1:, :, :],
        "C5": jnp.einsum("...kI,...kIJ->...J", Ek, x.lam0),
        "C6": jnp.einsum("...J,...kIJ->...kI", E0, x.lam0) - jnp.einsum("...jJ,...kjIJ->...kI", Ek, x.lam),
    }


def residual_norms(x: SliceState, mask=None) -> dict:
    """Max-abs of each family, optionally over a site mask."""
    out = {}
    for k, v in constraint_residuals(x).items():
        v = np.asarray(v)
        if mask is not None:
            v = v[mask]
        out[k] = float(np.max(np.abs(v), initial=0.0))
    return out


def constraint_vector(x: SliceState) -> jnp.ndarray:
    """Independent components of C1..C6, family-major then site-major."""
    r = constraint_residuals(x)
    n = x.grid.size
    parts = [
        algebra.components(r["C1"]).reshape(n, -1),
        algebra.components(st._full_to_pairs(r["C2"], 3)).reshape(n, -1),
        algebra.components(r["C3"]).reshape(n, -1),
        algebra.components(st._full_to_pairs(r["C4"], 3)).reshape(n, -1),
        r["C5"].reshape(n, -1),
        r["C6"].reshape(n, -1),
    ]
    return jnp.concatenate([q.ravel() for q in parts])


def constraint_sites(grid: Grid) -> np.ndarray:
    return np.concatenate([np.repeat(np.arange(grid.size), FAMILY_SIZES[f]) for f in FAMILIES])


def constraint_labels(grid: Grid) -> list[str]:
    return [f for f in FAMILIES for _ in range(FAMILY_SIZES[f] * grid.size)]


def solve_constraints(grid: Grid, a, E, lam0=None, a0=None, check: bool = True) -> SliceState:
    """Fill p, β and λ_jk from (a_k, e, λ_k0, a_0) so that C2, C3 and C4 hold."""
    E = jnp.asarray(E)
    if check:
        _check_tetrad(E)
    s = grid.dims
    a = jnp.asarray(a)
    lam0 = jnp.zeros(s + (3, 4, 4)) if lam0 is None else jnp.asarray(lam0)
    a0 = jnp.zeros(s + (4, 4)) if a0 is None else jnp.asarray(a0)
    eps = slice_epsilon(E)[..., None, None, None]
    B = eps[..., None] * tetrad_bivectors(E)
    return SliceState(
        grid,
        a0=a0,
        a=a,
        p=B[..., 0, 1:, :, :],
        beta=B[..., 1:, 1:, :, :],
        E=E,
        lam0=lam0,
        lam=lattice.field_strength(a, grid),
    )


# -- pre-symplectic form -------------------------------------------------------------------


def build_omega(x: SliceState | Grid) -> sp.csr_matrix:
    """Ω(X, Y) = ∫ (X_p^k·Y_a_k - Y_p^k·X_a_k) as a sparse matrix on flat coordinates."""
    grid = x if isinstance(x, Grid) else x.grid
    ia = np.arange(st.block_slice("a", grid).start, st.block_slice("a", grid).stop)
    ip = np.arange(st.block_slice("p", grid).start, st.block_slice("p", grid).stop)
    n = grid.size * st.PER_SITE
    v = grid.cell_volume
    rows = np.concatenate([ip, ia])
    cols = np.concatenate([ia, ip])
    vals = np.concatenate([np.full(ia.size, v), np.full(ia.size, -v)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def omega_value(X: SliceState, Y: SliceState) -> float:
    g = X.grid
    dens = jnp.sum(algebra.pair(Y.a, X.p) - algebra.pair(X.a, Y.p), axis=-1)
    return float(lattice.integrate(dens, g))


# -- sparse Jacobians by coloured directional derivatives ---------------------------------------


def cross_stencil(ndim: int = 3) -> np.ndarray:
    """Offsets 0 and ±e_k: the couplings produced by central differences."""
    offs = [np.zeros(ndim, dtype=int)]
    for k in range(ndim):
        for sgn in (1, -1):
            e = np.zeros(ndim, dtype=int)
            e[k] = sgn
            offs.append(e)
    return np.array(offs)


def _linear_colouring(dims: np.ndarray, diffs: np.ndarray, max_colours: int = 12):
    """colour(s) = (c·s) mod m, consistent with the periodic wrap, if one exists."""
    from itertools import product

    for m in range(len(diffs[0]) * 2 + 1, max_colours + 1):
        for c in product(range(1, m), repeat=len(dims)):
            c = np.array(c)
            if np.any((c * dims) % m):
                continue
            if np.all((diffs @ c) % m):
                return c, m
    return None


def colour_sites(grid: Grid, stencil: np.ndarray) -> np.ndarray:
    """Distance-2 colouring: sites whose stencils overlap get different colours.

    Uses a linear colouring when the extents admit one, greedy otherwise.
    """
    dims = np.array(grid.dims)
    diffs = {tuple(d) for d in (stencil[:, None, :] - stencil[None, :, :]).reshape(-1, len(dims)) if np.any(d)}
    diffs = np.array(sorted(diffs))
    xyz = np.stack(np.unravel_index(np.arange(grid.size), grid.dims), axis=1)
    lin = _linear_colouring(dims, diffs)
    if lin is not None:
        c, m = lin
        return (xyz @ c) % m
    colour = -np.ones(grid.size, dtype=int)
    for s in range(grid.size):
        nb = np.ravel_multi_index(tuple(((xyz[s] + diffs) % dims).T), grid.dims)
        used = set(colour[nb][colour[nb] >= 0].tolist())
        c = 0
        while c in used:
            c += 1
        colour[s] = c
    return colour


@lru_cache(maxsize=8)
def _colouring(grid: Grid):
    stencil = cross_stencil(grid.ndim)
    colour = colour_sites(grid, stencil)
    xyz = np.stack(np.unravel_index(np.arange(grid.size), grid.dims), axis=1)
    dims = np.array(grid.dims)
    # nbr[s, o] = site at offset o from s
    nbr = np.stack([np.ravel_multi_index(tuple(((xyz + o) % dims).T), grid.dims) for o in stencil], axis=1)
    ncol = colour.max() + 1
    # for every site and colour, the stencil neighbour with that colour (or -1)
    owner = -np.ones((grid.size, ncol), dtype=np.int64)
    for o in range(nbr.shape[1]):
        owner[np.arange(grid.size), colour[nbr[:, o]]] = nbr[:, o]
    return colour, owner


def sparse_jacobian(jvp, grid: Grid, in_sites, in_comps, out_sites, batch: int = 64) -> sp.csr_matrix:
    """Jacobian of a map whose output at a site depends on inputs on the cross stencil.

    ``jvp(V)`` maps a batch of tangent vectors (columns of V) to output columns.  Inputs
    of one colour never meet in the same output row, so each directional derivative
    along a colour indicator recovers one entry per row.
    """
    colour, owner = _colouring(grid)
    ncomp = int(in_comps.max()) + 1
    lookup = -np.ones((grid.size, ncomp), dtype=np.int64)
    lookup[in_sites, in_comps] = np.arange(in_sites.size)
    in_colour = colour[in_sites]
    seeds = [(c, q) for c in range(owner.shape[1]) for q in range(ncomp)]
    nin = in_sites.size
    rows, cols, vals = [], [], []
    for start in range(0, len(seeds), batch):
        chunk = seeds[start : start + batch]
        V = np.zeros((nin, batch))
        for j, (c, q) in enumerate(chunk):
            V[(in_colour == c) & (in_comps == q), j] = 1.0
        Y = np.asarray(jvp(jnp.asarray(V)))
        for j, (c, q) in enumerate(chunk):
            src = owner[out_sites, c]
            col = np.where(src >= 0, lookup[np.maximum(src, 0), q], -1)
            keep = (col >= 0) & (Y[:, j] != 0)
            r = np.nonzero(keep)[0]
            rows.append(r)
            cols.append(col[r])
            vals.append(Y[r, j])
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(out_sites.size, nin),
    )


@lru_cache(maxsize=8)
def _compiled(grid: Grid):
    def cvec(v):
        return constraint_vector(st.unpack(v, grid))

    def hfun(v):
        return extended_hamiltonian(st.unpack(v, grid), check=False)

    grad = jax.jit(jax.grad(hfun))
    cjvp = jax.jit(lambda v, V: jax.vmap(lambda t: jax.jvp(cvec, (v,), (t,))[1], in_axes=1, out_axes=1)(V))
    hvp = jax.jit(lambda v, V: jax.vmap(lambda t: jax.jvp(grad, (v,), (t,))[1], in_axes=1, out_axes=1)(V))
    return jax.jit(cvec), jax.jit(hfun), grad, cjvp, hvp


def hamiltonian_gradient(x: SliceState) -> np.ndarray:
    return np.asarray(_compiled(x.grid)[2](st.pack(x)))


def constraint_jacobian(x: SliceState) -> sp.csr_matrix:
    g = x.grid
    v = st.pack(x)
    in_sites, in_comps = st.coordinate_sites(g)
    cjvp = _compiled(g)[3]
    return sparse_jacobian(lambda V: cjvp(v, V), g, in_sites, in_comps, constraint_sites(g))


def hamiltonian_hessian(x: SliceState) -> sp.csr_matrix:
    g = x.grid
    v = st.pack(x)
    in_sites, in_comps = st.coordinate_sites(g)
    hvp = _compiled(g)[4]
    return sparse_jacobian(lambda V: hvp(v, V), g, in_sites, in_comps, in_sites)


def _conormal_residual(b: np.ndarray, J: sp.spmatrix, atol: float) -> float:
    """min over μ of ‖b - Jᵀμ‖."""
    JT = J.T.tocsr()
    # column scaling keeps lsmr well conditioned
    scale = np.sqrt(np.asarray(JT.multiply(JT).sum(axis=0)).ravel())
    scale[scale == 0] = 1.0
    A = JT @ sp.diags(1.0 / scale)
    mu = lsmr(A, b, atol=atol, btol=atol, maxiter=50 * A.shape[1])[0]
    return float(np.linalg.norm(b - A @ mu))


def kernel_membership(x: SliceState, X: SliceState, J: sp.spmatrix | None = None, atol: float = 1e-16) -> float:
    """‖i_X Ω_∞‖ / (‖Ω‖ ‖X‖): the part of Ω X not absorbed by constraint conormals.

    Ω_∞ is Ω pulled back to the set cut out by C1..C6, so i_X Ω_∞ = 0 exactly when
    Ω X lies in the row space of the constraint Jacobian J.  ‖Ω‖ = h³.
    """
    nx = float(jnp.linalg.norm(st.pack(X)))
    if nx == 0:
        return 0.0
    b = build_omega(x) @ np.asarray(st.pack(X))
    J = constraint_jacobian(x) if J is None else J
    return _conormal_residual(b, J, atol) / (x.grid.cell_volume * nx)


def hamiltonian_equation_residual(
    x: SliceState, X: SliceState, J: sp.spmatrix | None = None, atol: float = 1e-16
) -> float:
    """‖i_X Ω_∞ - d𝓗_∞‖ / (‖Ω‖ ‖X‖), the defect of X as a Hamiltonian vector field.

    With Ω(X, Y) = Xᵀ Ω Y the equation i_X Ω = d𝓗 reads -Ω X = ∇𝓗.
    """
    nx = float(jnp.linalg.norm(st.pack(X)))
    if nx == 0:
        nx = 1.0
    b = build_omega(x) @ np.asarray(st.pack(X)) + hamiltonian_gradient(x)
    J = constraint_jacobian(x) if J is None else J
    return _conormal_residual(b, J, atol) / (x.grid.cell_volume * nx)


def palatini_system(grid: Grid):
    """The discretized system as a :class:`~palatini_pca.presymplectic.PresymplecticSystem`."""
    from ..presymplectic import PresymplecticSystem

    W = build_omega(grid)
    _, hfun, grad, _, _ = _compiled(grid)
    labels = st.coordinate_labels(grid)

    def hess(v):
        return hamiltonian_hessian(st.unpack(v, grid))

    return PresymplecticSystem(
        dim=grid.size * st.PER_SITE,
        omega=lambda v: W,
        hamiltonian=lambda v: float(hfun(jnp.asarray(v))),
        gradient=lambda v: np.asarray(grad(jnp.asarray(v))),
        coordinate_labels=labels,
        family_names=dict(KERNEL_FAMILIES),
        hessian=hess,
    )
