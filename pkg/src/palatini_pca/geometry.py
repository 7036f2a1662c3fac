"""Tetrad geometry: metric reconstruction, the density ε, the Palatini map,
curvature contractions and DeWitt's supplementary condition.

Tetrads are stored as ``E[..., mu, I] = e^mu_I`` (the inverse frame); the frame
``e^I_mu`` is its matrix inverse, ``frame[..., I, mu]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np

from . import algebra
from .lattice import Grid, partial

ETA = algebra.ETA


class SingularTetradError(ValueError):
    def __init__(self, site, det):
        super().__init__(f"singular tetrad at site {tuple(int(i) for i in site)} (det = {det:.3e})")
        self.site = site


def _check_invertible(E, tol: float = 1e-12):
    det = np.linalg.det(np.asarray(E))
    bad = np.abs(det) <= tol
    if np.any(bad):
        site = np.argwhere(bad)[0]
        raise SingularTetradError(site, float(det[tuple(site)]))


@dataclass(frozen=True)
class TetradField:
    """e^mu_I at every site together with the frame e^I_mu."""

    E: jnp.ndarray
    frame: jnp.ndarray

    @classmethod
    def from_inverse_frame(cls, E, check: bool = True) -> "TetradField":
        E = jnp.asarray(E)
        if check:
            _check_invertible(E)
        return cls(E, jnp.linalg.inv(E))

    @classmethod
    def from_frame(cls, frame, check: bool = True) -> "TetradField":
        frame = jnp.asarray(frame)
        if check:
            _check_invertible(frame)
        return cls(jnp.linalg.inv(frame), frame)

    def duality_defect(self) -> float:
        """max |e^I_mu e^mu_J - δ^I_J|."""
        prod = np.asarray(self.frame @ self.E)
        return float(np.max(np.abs(prod - np.eye(4))))

    def rotated(self, lam) -> "TetradField":
        """Internal Lorentz rotation: e^I_mu → Λ^I_K e^K_mu."""
        return TetradField.from_frame(lam @ self.frame, check=False)


@dataclass(frozen=True)
class MetricField:
    g: jnp.ndarray
    g_inv: jnp.ndarray

    def inverse_defect(self) -> float:
        return float(np.max(np.abs(np.asarray(self.g @ self.g_inv) - np.eye(self.g.shape[-1]))))

    def is_lorentzian(self, tol: float = 1e-10) -> bool:
        ev = np.linalg.eigvalsh(np.asarray(self.g))
        return bool(np.all(np.sum(ev < -tol, axis=-1) == 1) and np.all(np.sum(ev > tol, axis=-1) == 3))


def metric_from_tetrad(tet: TetradField) -> MetricField:
    """g^{mu nu} = η^{IJ} e^mu_I e^nu_J and g_{mu nu} = η_IJ e^I_mu e^J_nu."""
    eta = jnp.asarray(ETA)
    g_inv = tet.E @ eta @ jnp.swapaxes(tet.E, -1, -2)
    g = jnp.swapaxes(tet.frame, -1, -2) @ eta @ tet.frame
    return MetricField(g, g_inv)


def epsilon(tet: TetradField):
    """ε = sqrt(-det g) = |det e^I_mu|."""
    return jnp.abs(jnp.linalg.det(tet.frame))


def epsilon_from_metric(m: MetricField):
    det = np.asarray(jnp.linalg.det(m.g))
    if np.any(det >= 0):
        site = np.argwhere(det >= 0)[0]
        raise ValueError(f"det g >= 0 at site {tuple(site)}: metric is not Lorentzian")
    return jnp.sqrt(-jnp.linalg.det(m.g))


def bivector(u, v):
    """u_[I v_J] = ½(u_I v_J - u_J v_I) for covectors u, v of trailing shape (4,)."""
    return 0.5 * (u[..., :, None] * v[..., None, :] - v[..., :, None] * u[..., None, :])


def palatini_map(a, tet: TetradField):
    """(A, e) ↦ (A, P) with P^{mu nu}_{IJ} = ε e^mu_[I e^nu_J], shape ``(*sites, 4, 4, 4, 4)``."""
    eps = epsilon(tet)
    E = tet.E
    P = bivector(E[..., :, None, :], E[..., None, :, :])
    return a, eps[..., None, None, None, None] * P


def ricci(tet: TetradField, F):
    """Ricci intermediate R_{mu nu} = e^kappa_K F_{mu kappa}{}^K{}_L e^L_nu."""
    Fm = algebra.to_matrix(F)
    return jnp.einsum("...kK,...mkKL,...Ln->...mn", tet.E, Fm, tet.frame)


def scalar_curvature(tet: TetradField, F):
    """𝓡 = -e^nu_K e^sigma_L F^{KL}_{nu sigma}; equals g^{mu nu} R_{mu nu} with :func:`ricci`."""
    if F.shape[:-4] != tet.E.shape[:-2]:
        raise ValueError("curvature and tetrad live on different grids")
    return -jnp.einsum("...nK,...sL,...nsKL->...", tet.E, tet.E, F)


def christoffel(m: MetricField, grid: Grid):
    """Γ^l_{mu nu} = ½ g^{l s}(∂_mu g_{s nu} + ∂_nu g_{s mu} - ∂_s g_{mu nu}) by central differences.

    Directions without a grid axis (none on a full 4D grid) contribute no derivative.
    """
    d = m.g.shape[-1]
    dg = jnp.stack([partial(m.g, k, grid) for k in range(grid.ndim)] + [jnp.zeros_like(m.g)] * (d - grid.ndim), axis=-3)
    # dg[..., c, a, b] = ∂_c g_ab
    lowered = 0.5 * (jnp.swapaxes(dg, -3, -2) + jnp.swapaxes(jnp.swapaxes(dg, -3, -2), -2, -1) - dg)
    # lowered[..., s, mu, nu] = ½(∂_mu g_{s nu} + ∂_nu g_{s mu} - ∂_s g_{mu nu})
    return jnp.einsum("...ls,...smn->...lmn", m.g_inv, lowered)


def covariant_derivative_sym(dg, Gamma, grid: Grid):
    """∇_nu δg_{rho sigma}, returned with axes ``[..., nu, rho, sigma]``."""
    d = dg.shape[-1]
    pd = jnp.stack([partial(dg, k, grid) for k in range(grid.ndim)] + [jnp.zeros_like(dg)] * (d - grid.ndim), axis=-3)
    return (
        pd
        - jnp.einsum("...lnr,...ls->...nrs", Gamma, dg)
        - jnp.einsum("...lns,...rl->...nrs", Gamma, dg)
    )


def dewitt_residual(m: MetricField, dg, grid: Grid, Gamma=None, tol: float = 1e-12):
    """R^mu = (g^{mu nu} g^{rho sigma} - ½ g^{mu rho} g^{nu sigma}) ∇_nu δg_{rho sigma}.

    ``Gamma`` defaults to central differences of ``m.g``.  Zero means δg satisfies
    DeWitt's supplementary condition.
    """
    dg = jnp.asarray(dg)
    if np.max(np.abs(np.asarray(dg - jnp.swapaxes(dg, -1, -2))), initial=0.0) > tol:
        raise ValueError("δg must be symmetric")
    if Gamma is None:
        Gamma = christoffel(m, grid)
    ndg = covariant_derivative_sym(dg, Gamma, grid)
    gi = m.g_inv
    trace_part = jnp.einsum("...mn,...rs,...nrs->...m", gi, gi, ndg)
    div_part = jnp.einsum("...mr,...ns,...nrs->...m", gi, gi, ndg)
    return trace_part - 0.5 * div_part
