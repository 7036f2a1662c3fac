"""Evolution along the slice family and the spacetime Einstein/torsion residuals."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import jax.numpy as jnp
import numpy as np

from .. import algebra, lattice
from ..geometry import TetradField, epsilon
from ..lattice import Grid
from . import system as sy
from .state import SliceState

log = logging.getLogger(__name__)


class DriftError(RuntimeError):
    def __init__(self, step: int, drift: dict):
        super().__init__(f"constraint drift above bound at step {step}: {drift}")
        self.step = step
        self.drift = drift


def evolution_vector(x: SliceState, momentum_sign: float = 1.0) -> SliceState:
    """da_k/ds = ∇_k a0 - 2 λ_k0,  dp^k/ds = σ(∇_j(ε e^j_[I e^k_J]) + [p^k, a0]); other blocks zero.

    σ = ``momentum_sign``.  Only σ = +1 solves i_X Ω_∞ = d𝓗_∞ together with the a-block
    above; σ = -1 gives the opposite relative sign between the two blocks.
    """
    g = x.grid
    eps = sy.slice_epsilon(x.E)[..., None, None, None]
    B = eps[..., None] * sy.tetrad_bivectors(x.E)[..., 1:, 1:, :, :]  # [j, k, I, J]
    Xa = jnp.stack([lattice.covariant_derivative(x.a, x.a0, k, g) for k in range(3)], axis=3) - 2 * x.lam0
    div = jnp.stack(
        [sum(lattice.covariant_derivative_dual(x.a, B[..., j, k, :, :], j, g) for j in range(3)) for k in range(3)],
        axis=3,
    )
    Xp = momentum_sign * (div + algebra.dual_bracket(x.p, x.a0[..., None, :, :]))
    z = jnp.zeros_like
    return SliceState(g, z(x.a0), Xa, Xp, z(x.beta), z(x.E), z(x.lam0), z(x.lam))


def project_constraints(x: SliceState) -> SliceState:
    """Re-solve the algebraic constraints C2-C4 for the current (a, e, λ_k0, a0)."""
    return sy.solve_constraints(x.grid, x.a, x.E, x.lam0, x.a0)


@dataclass
class Trajectory:
    states: list[SliceState]
    ds: float
    drift: dict[str, list[float]] = field(default_factory=dict)

    def drift_table(self) -> list[dict]:
        n = len(next(iter(self.drift.values()), []))
        return [{"step": i, "s": i * self.ds, **{k: v[i] for k, v in self.drift.items()}} for i in range(n)]


def _drift(x: SliceState) -> dict[str, float]:
    r = sy.residual_norms(x)
    return {k: r[k] for k in ("C1", "C5", "C6")}


def evolve(
    x0: SliceState,
    a0_gauge=None,
    steps: int = 10,
    ds: float = 0.01,
    drift_bound: float | None = None,
    keep: bool = True,
    momentum_sign: float = 1.0,
) -> Trajectory:
    """Classical RK4 on :func:`evolution_vector` with C2-C4 re-projection after each step.

    ``a0_gauge`` (a field or constant 4x4) replaces a0 for the whole run; the default
    keeps the a0 of the initial state.  Drift of C1, C5 and C6 is recorded per step.
    """
    if steps < 0 or not ds > 0:
        raise ValueError("steps must be >= 0 and ds > 0")
    x = x0
    if a0_gauge is not None:
        a0 = jnp.asarray(a0_gauge)
        if a0.shape == (4, 4):
            a0 = jnp.broadcast_to(a0, x0.grid.dims + (4, 4))
        x = x.replace(a0=a0)
    x = project_constraints(x)
    traj = Trajectory([x], ds, {k: [v] for k, v in _drift(x).items()})
    for n in range(1, steps + 1):
        k1 = evolution_vector(x, momentum_sign)
        k2 = evolution_vector(x + (0.5 * ds) * k1, momentum_sign)
        k3 = evolution_vector(x + (0.5 * ds) * k2, momentum_sign)
        k4 = evolution_vector(x + ds * k3, momentum_sign)
        x = x + (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        x = project_constraints(x)
        d = _drift(x)
        for k, v in d.items():
            traj.drift[k].append(v)
        if keep:
            traj.states.append(x)
        else:
            traj.states[-1:] = [x]
        if drift_bound is not None and max(d.values()) > drift_bound:
            raise DriftError(n, d)
    return traj


def einstein_residual(E, a, grid: Grid):
    """Torsion ∇_mu(ε e^mu_[I e^nu_J]) with axes [..., nu, I, J] and Einstein e^mu_I F^{IJ}_{mu nu}
    with axes [..., nu, J], both on a 4D grid."""
    if grid.ndim != 4:
        raise ValueError("Einstein residuals need a 4D grid")
    tet = TetradField.from_inverse_frame(E)
    eps = epsilon(tet)[..., None, None, None, None]
    P = eps * sy.tetrad_bivectors(tet.E)  # [mu, nu, I, J]
    torsion = jnp.stack(
        [sum(lattice.covariant_derivative_dual(a, P[..., m, n, :, :], m, grid) for m in range(4)) for n in range(4)],
        axis=4,
    )
    F = lattice.field_strength(a, grid)
    einstein = jnp.einsum("...mI,...mnIJ->...nJ", tet.E, F)
    return torsion, einstein


def einstein_residual_loops(E, a, grid: Grid):
    """Straight-loop evaluation of :func:`einstein_residual`, used as an independent check."""
    E = np.asarray(E)
    a = np.asarray(a)
    h = grid.h
    eta = algebra.ETA
    dims = grid.dims
    torsion = np.zeros(dims + (4, 4, 4))
    einstein = np.zeros(dims + (4, 4))
    frame = np.linalg.inv(E)
    eps = np.abs(np.linalg.det(frame))
    P = np.zeros(dims + (4, 4, 4, 4))
    for m in range(4):
        for n in range(4):
            for I in range(4):
                for J in range(4):
                    P[..., m, n, I, J] = 0.5 * eps * (E[..., m, I] * E[..., n, J] - E[..., m, J] * E[..., n, I])

    def d(f, k):
        return (np.roll(f, -1, axis=k) - np.roll(f, 1, axis=k)) / (2 * h)

    for n in range(4):
        for m in range(4):
            dP = d(P[..., m, n, :, :], m)
            for I in range(4):
                for J in range(4):
                    s = dP[..., I, J]
                    # ∇ on lower indices: -a_m^K_I P_KJ - a_m^K_J P_IK, a^K_I = a^{KL} η_LI
                    for K in range(4):
                        s = s - a[..., m, K, I] * eta[I, I] * P[..., m, n, K, J] - a[..., m, K, J] * eta[J, J] * P[..., m, n, I, K]
                    torsion[..., n, I, J] += s
    for m in range(4):
        for n in range(4):
            if m == n:
                continue
            F = d(a[..., n, :, :], m) - d(a[..., m, :, :], n)
            for I in range(4):
                for J in range(4):
                    for K in range(4):
                        F[..., I, J] += a[..., m, I, K] * eta[K, K] * a[..., n, K, J] - a[..., n, I, K] * eta[K, K] * a[..., m, K, J]
            for I in range(4):
                einstein[..., n, :] += E[..., m, I][..., None] * F[..., I, :]
    return torsion, einstein
