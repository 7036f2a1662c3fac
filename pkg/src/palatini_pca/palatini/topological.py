"""Yang-Mills action with coupling G and its topological (G → ∞) limit.

    S_YM(G) = -∫ [P^{mu nu}_a F^a_{mu nu} + (1/4G) P^{mu nu}_a P_{mu nu}^a]

Spacetime and internal indices of P·P are contracted with the identity, so the
coupling term is -(1/4G)∫‖P‖² and the gap to the G → ∞ action is exactly (1/4G)∫‖P‖².
"""

from __future__ import annotations

import jax.numpy as jnp
import numpy as np

from .. import algebra, lattice
from ..lattice import Grid


def _check(a, P, grid: Grid):
    if grid.ndim != 4:
        raise ValueError("the Yang-Mills action is evaluated on 4D grids")
    if a.shape != grid.dims + (4, 4, 4):
        raise ValueError(f"connection shape {a.shape} does not match {grid.dims + (4, 4, 4)}")
    if P.shape != grid.dims + (4, 4, 4, 4):
        raise ValueError(f"P shape {P.shape} does not match {grid.dims + (4, 4, 4, 4)}")


def bf_action(a, P, grid: Grid) -> float:
    """S⁰ = -∫ P^{mu nu}_a F^a_{mu nu}, the G → ∞ limit; P carries lower internal indices."""
    a, P = jnp.asarray(a), jnp.asarray(P)
    _check(a, P, grid)
    F = lattice.field_strength(a, grid)
    return -float(lattice.integrate(jnp.sum(algebra.pair(F, P), axis=(-2, -1)), grid))


def coupling_term(P, grid: Grid) -> float:
    """∫ P·P with every index contracted by the identity (sum over I < J and all mu, nu)."""
    P = jnp.asarray(P)
    return float(lattice.integrate(0.5 * jnp.sum(P * P, axis=(-4, -3, -2, -1)), grid))


def ym_action_with_G(a, P, G: float, grid: Grid) -> float:
    if not np.isfinite(G) or G == 0:
        raise ValueError("the coupling G must be finite and non-zero")
    return bf_action(a, P, grid) - coupling_term(P, grid) / (4.0 * G)


def topological_limit_gap(a, P, couplings, grid: Grid) -> dict:
    """|S_YM(G) - S⁰| for each G and the log-log slope of the gap against G."""
    couplings = np.asarray(couplings, dtype=float)
    s0 = bf_action(a, P, grid)
    gaps = np.array([abs(ym_action_with_G(a, P, G, grid) - s0) for G in couplings])
    if len(couplings) >= 2 and np.all(gaps > 0):
        slope = float(np.polyfit(np.log(couplings), np.log(gaps), 1)[0])
    else:
        slope = float("nan")
    return {"G": couplings.tolist(), "gap": gaps.tolist(), "exponent": slope, "S0": s0}


def random_configuration(grid: Grid, seed: int = 0, scale: float = 1.0):
    """Random connection a_mu^{IJ} and field P^{mu nu}_{IJ}, antisymmetric in both pairs."""
    rng = np.random.default_rng(seed)
    a = np.asarray(algebra.antisymmetrize(scale * rng.standard_normal(grid.dims + (4, 4, 4))))
    P = np.asarray(algebra.antisymmetrize(scale * rng.standard_normal(grid.dims + (4, 4, 4, 4))))
    P = 0.5 * (P - np.swapaxes(P, -4, -3))
    return a, P
