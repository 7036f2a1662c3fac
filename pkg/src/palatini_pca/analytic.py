"""Closed-form tetrads and their Levi-Civita spin connections, sampled onto grids.

The spin connection is derived symbolically from the frame e^I_mu(x):

    ω_mu^I_J = e^I_nu (∂_mu e^nu_J + Γ^nu_{mu sigma} e^sigma_J),   a_mu^{IJ} = ω_mu^I_K η^{KJ},

which is the unique connection with ∇_mu e^I_nu = 0 under the conventions of
:mod:`palatini_pca.lattice` (∇v^I = ∂v^I + a^I_K v^K).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import sympy as sp

from .algebra import ETA
from .lattice import Grid

T, X, Y, Z = sp.symbols("t x y z", real=True)
COORDS = (T, X, Y, Z)


@dataclass(frozen=True)
class AnalyticSolution:
    name: str
    frame: Callable  # (t, x, y, z) -> e^I_mu, shape (4, 4, *pts)
    connection: Callable  # -> a_mu^{IJ}, shape (4, 4, 4, *pts)
    scalar_curvature: Callable  # standard R = e^mu_I e^nu_J R^{IJ}_{mu nu}
    vacuum: bool

    def sample(self, grid: Grid):
        """Return (E, a) sampled on a 4D grid: E[..., mu, I] = e^mu_I, a[..., mu, I, J]."""
        if grid.ndim != 4:
            raise ValueError("analytic spacetime solutions are sampled on 4D grids")
        pts = grid.coords()
        frame = _evaluate(self.frame, pts, (4, 4))
        frame = np.moveaxis(frame, (0, 1), (-2, -1))
        a = _evaluate(self.connection, pts, (4, 4, 4))
        a = np.moveaxis(a, (0, 1, 2), (-3, -2, -1))
        return np.linalg.inv(frame), a

    def sample_scalar_curvature(self, grid: Grid):
        return _evaluate(self.scalar_curvature, grid.coords(), ())


def _evaluate(fn, pts, shape):
    raw = fn(*pts)
    out = np.empty(shape + pts[0].shape)
    for idx in np.ndindex(*shape) if shape else [()]:
        val = raw
        for i in idx:
            val = val[i]
        out[idx] = np.broadcast_to(np.asarray(val, dtype=float), pts[0].shape)
    return out


def _derive(name: str, frame: sp.Matrix, vacuum: bool) -> AnalyticSolution:
    eta = sp.Matrix(ETA.astype(int))
    g = frame.T * eta * frame
    g_inv = g.inv()
    inv_frame = frame.inv()  # inv_frame[nu, J] = e^nu_J
    d = [[[sp.diff(g[a, b], COORDS[c]) for b in range(4)] for a in range(4)] for c in range(4)]
    Gamma = [
        [
            [sum(g_inv[l, s] * (d[m][s][n] + d[n][s][m] - d[s][m][n]) for s in range(4)) / 2 for n in range(4)]
            for m in range(4)
        ]
        for l in range(4)
    ]
    omega = []
    for mu in range(4):
        w = sp.zeros(4, 4)
        for I in range(4):
            for J in range(4):
                w[I, J] = sum(
                    frame[I, nu]
                    * (sp.diff(inv_frame[nu, J], COORDS[mu]) + sum(Gamma[nu][mu][s] * inv_frame[s, J] for s in range(4)))
                    for nu in range(4)
                )
        omega.append(w)
    conn = [(w * eta).tolist() for w in omega]
    # standard curvature 2-form R^I_J_{mu nu} = ∂_mu ω_nu - ∂_nu ω_mu + [ω_mu, ω_nu]
    R = 0
    for mu in range(4):
        for nu in range(4):
            if mu == nu:
                continue
            Rm = (
                omega[nu].diff(COORDS[mu])
                - omega[mu].diff(COORDS[nu])
                + omega[mu] * omega[nu]
                - omega[nu] * omega[mu]
            )
            Ru = Rm * eta  # R^{IJ}
            R += sum(inv_frame[mu, I] * inv_frame[nu, J] * Ru[I, J] for I in range(4) for J in range(4))
    frame_fn = sp.lambdify(COORDS, frame.tolist(), "numpy", cse=True)
    conn_fn = sp.lambdify(COORDS, conn, "numpy", cse=True)
    R_fn = sp.lambdify(COORDS, R, "numpy", cse=True)
    return AnalyticSolution(name, frame_fn, conn_fn, R_fn, vacuum)


@lru_cache(maxsize=None)
def schwarzschild_isotropic(mass: float = 1.0) -> AnalyticSolution:
    """Static Schwarzschild in isotropic coordinates; vacuum away from r = 0."""
    M = sp.Rational(mass).limit_denominator(10**6) if isinstance(mass, float) else mass
    r = sp.sqrt(X**2 + Y**2 + Z**2)
    A = (1 - M / (2 * r)) / (1 + M / (2 * r))
    B = (1 + M / (2 * r)) ** 2
    return _derive("schwarzschild", sp.diag(A, B, B, B), vacuum=True)


@lru_cache(maxsize=None)
def de_sitter_flat(hubble: float = 1.0) -> AnalyticSolution:
    """ds² = -dt² + e^{2Ht} dx²; constant curvature R = 12 H² (not vacuum)."""
    H = sp.nsimplify(hubble)
    a = sp.exp(H * T)
    return _derive("de-sitter", sp.diag(1, a, a, a), vacuum=False)


@lru_cache(maxsize=None)
def flat_wavy(amplitude: float = 0.05, period: float = 1.0, boost: float = 0.1) -> AnalyticSolution:
    """Minkowski space in periodic curvilinear coordinates with a periodic local Lorentz frame.

    X^I = x^I + A sin(2π x^{I+1}/L); the frame dX^I is then boosted along x by a
    rapidity b sin(2π t/L) and rotated in the y-z plane by b cos(2π x/L).  Flat and
    torsion free, periodic with period L in every direction.
    """
    A = sp.nsimplify(amplitude)
    L = sp.nsimplify(period)
    b = sp.nsimplify(boost)
    k = 2 * sp.pi / L
    emb = [T + A * sp.sin(k * X), X + A * sp.sin(k * Y), Y + A * sp.sin(k * Z), Z + A * sp.sin(k * T)]
    base = sp.Matrix([[sp.diff(emb[I], c) for c in COORDS] for I in range(4)])
    ch, sh = sp.cosh(b * sp.sin(k * T)), sp.sinh(b * sp.sin(k * T))
    boost_m = sp.Matrix([[ch, sh, 0, 0], [sh, ch, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    c, s = sp.cos(b * sp.cos(k * X)), sp.sin(b * sp.cos(k * X))
    rot = sp.Matrix([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, c, -s], [0, 0, s, c]])
    return _derive("flat-wavy", rot * boost_m * base, vacuum=True)
