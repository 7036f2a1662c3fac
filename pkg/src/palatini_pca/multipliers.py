"""Lagrange-multiplier extension of a functional restricted to an embedded set.

Finite-dimensional realization: M = R^dim_m, N = R^dim_n, the pairing between M
and its dual is the Euclidean dot product, and the constrained set is C = Φ(N).
Critical points of

    F_ext(m, Λ, n) = F(m) + <Λ, m - Φ(n)>

are in one-to-one correspondence with critical points of F restricted to C.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, residual: float):
        super().__init__(f"{msg} (last residual {residual:.3e})")
        self.residual = residual


class RankDeficientError(RuntimeError):
    pass


@dataclass(frozen=True)
class ConstrainedProblem:
    name: str
    dim_m: int
    dim_n: int
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    embedding: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    # fundamental domain for n: one (lo, hi, periodic) triple per coordinate
    domain: tuple[tuple[float, float, bool], ...] = ()
    params: dict = field(default_factory=dict)

    def restricted(self, n) -> float:
        return float(self.objective(self.embedding(np.asarray(n, dtype=float))))

    def check_rank(self, n, tol: float = 1e-8) -> float:
        s = np.linalg.svd(np.atleast_2d(self.jacobian(np.asarray(n, dtype=float))), compute_uv=False)
        if s.size < self.dim_n or s[-1] <= tol:
            raise RankDeficientError(f"{self.name}: embedding Jacobian rank deficient at n={n} (σ_min={s[-1] if s.size else 0:.2e})")
        return float(s[-1])


@dataclass(frozen=True)
class ExtendedPoint:
    m: np.ndarray
    lam: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        for name in ("m", "lam", "n"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite entries in {name}")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.m, self.lam, self.n])

    @classmethod
    def from_flat(cls, z, dim_m: int, dim_n: int) -> "ExtendedPoint":
        z = np.asarray(z, dtype=float)
        return cls(z[:dim_m], z[dim_m : 2 * dim_m], z[2 * dim_m : 2 * dim_m + dim_n])


def _check_dims(p: ConstrainedProblem, x: ExtendedPoint) -> None:
    if x.m.size != p.dim_m or x.lam.size != p.dim_m or x.n.size != p.dim_n:
        raise ValueError(
            f"dimension mismatch: problem has dim_m={p.dim_m}, dim_n={p.dim_n}; "
            f"point has m={x.m.size}, Λ={x.lam.size}, n={x.n.size}"
        )


def extended_value(p: ConstrainedProblem, x: ExtendedPoint) -> float:
    _check_dims(p, x)
    return float(p.objective(x.m) + x.lam @ (x.m - p.embedding(x.n)))


def extended_gradient(p: ConstrainedProblem, x: ExtendedPoint) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(∂_m, ∂_Λ, ∂_n) = (∇F(m) + Λ, m - Φ(n), -JΦ(n)ᵀ Λ)."""
    _check_dims(p, x)
    jac = np.atleast_2d(p.jacobian(x.n)).reshape(p.dim_m, p.dim_n)
    return (
        np.asarray(p.gradient(x.m), dtype=float) + x.lam,
        x.m - p.embedding(x.n),
        -jac.T @ x.lam,
    )


def _residual(p: ConstrainedProblem, z: np.ndarray) -> np.ndarray:
    x = ExtendedPoint.from_flat(z, p.dim_m, p.dim_n)
    return np.concatenate(extended_gradient(p, x))


def solve_critical(
    p: ConstrainedProblem,
    x0: ExtendedPoint,
    tol: float = 1e-10,
    max_iter: int = 100,
    fd_step: float = 1e-6,
) -> ExtendedPoint:
    """Damped Newton on the gradient system of F_ext with a finite-difference Jacobian."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    _check_dims(p, x0)
    z = x0.flat.copy()
    r = _residual(p, z)
    for it in range(max_iter):
        res = float(np.linalg.norm(r))
        if res <= tol:
            return ExtendedPoint.from_flat(z, p.dim_m, p.dim_n)
        p.check_rank(z[2 * p.dim_m :])
        J = np.empty((z.size, z.size))
        for i in range(z.size):
            step = fd_step * max(1.0, abs(z[i]))
            dz = np.zeros_like(z)
            dz[i] = step
            J[:, i] = (_residual(p, z + dz) - _residual(p, z - dz)) / (2 * step)
        delta = np.linalg.lstsq(J, -r, rcond=None)[0]
        t = 1.0
        while t > 1e-6:
            r_new = _residual(p, z + t * delta)
            if np.linalg.norm(r_new) < (1 - 1e-4 * t) * res:
                break
            t *= 0.5
        else:
            raise ConvergenceError(f"{p.name}: line search stalled at iteration {it}", res)
        z = z + t * delta
        r = r_new
    res = float(np.linalg.norm(r))
    if res <= tol:
        return ExtendedPoint.from_flat(z, p.dim_m, p.dim_n)
    raise ConvergenceError(f"{p.name}: no convergence after {max_iter} iterations", res)


def seed_from_n(p: ConstrainedProblem, n) -> ExtendedPoint:
    """Extended point on the constraint with the multiplier Λ = -∇F(m)."""
    n = np.atleast_1d(np.asarray(n, dtype=float))
    m = p.embedding(n)
    return ExtendedPoint(m, -np.asarray(p.gradient(m), dtype=float), n)


# -- brute-force oracle -----------------------------------------------------------------


@dataclass(frozen=True)
class Extremum:
    n: np.ndarray
    m: np.ndarray
    value: float
    kind: str  # "min" | "max"


def _axes(p: ConstrainedProblem, samples: int):
    per_axis = int(round(samples ** (1.0 / p.dim_n)))
    axes = []
    for lo, hi, periodic in p.domain:
        axes.append(np.linspace(lo, hi, per_axis, endpoint=not periodic))
    return axes


def brute_force_extrema(p: ConstrainedProblem, samples: int = 10_000) -> list[Extremum]:
    """Scan F∘Φ over the fundamental domain, keep discrete local extrema, then polish
    each with a bounded local optimizer on F∘Φ.  Independent of the multiplier system."""
    axes = _axes(p, samples)
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    vals = np.array([p.restricted(q) for q in pts]).reshape(grids[0].shape)
    shape = vals.shape
    found: list[Extremum] = []
    for idx in np.ndindex(*shape):
        nbrs = []
        interior = True
        for offs in np.ndindex(*(3,) * len(shape)):
            d = np.array(offs) - 1
            if not d.any():
                continue
            j = []
            for ax, (di, (_, _, periodic)) in enumerate(zip(d, p.domain)):
                k = idx[ax] + di
                if periodic:
                    k %= shape[ax]
                elif not 0 <= k < shape[ax]:
                    interior = False
                    break
                j.append(k)
            if not interior:
                break
            nbrs.append(vals[tuple(j)])
        if not interior:
            continue
        v = vals[idx]
        for kind, sign in (("min", 1.0), ("max", -1.0)):
            if all(sign * v < sign * w for w in nbrs):
                n0 = np.array([axes[ax][i] for ax, i in enumerate(idx)])
                found.append(_polish(p, n0, sign, kind, [a[1] - a[0] for a in axes]))
    return found


def _polish(p: ConstrainedProblem, n0, sign: float, kind: str, steps) -> Extremum:
    f = lambda n: sign * p.restricted(n)  # noqa: E731
    if p.dim_n == 1:
        lo, hi = n0[0] - 2 * steps[0], n0[0] + 2 * steps[0]
        res = optimize.minimize_scalar(lambda t: f([t]), bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
        n = np.array([res.x])
    else:
        res = optimize.minimize(
            f, n0, method="Nelder-Mead", options={"xatol": 1e-13, "fatol": 1e-16, "maxiter": 20_000}
        )
        n = res.x
    m = p.embedding(n)
    return Extremum(n, m, float(p.objective(m)), kind)


def is_local_extremum(p: ConstrainedProblem, n, radius: float = 1e-3, samples: int = 64, seed: int = 0) -> bool:
    """Sample F∘Φ on a small sphere around n; True if all samples lie on one side."""
    rng = np.random.default_rng(seed)
    n = np.atleast_1d(np.asarray(n, dtype=float))
    f0 = p.restricted(n)
    dirs = rng.standard_normal((samples, p.dim_n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    diffs = np.array([p.restricted(n + radius * d) - f0 for d in dirs])
    return bool(np.all(diffs > 0) or np.all(diffs < 0))


# -- catalog -------------------------------------------------------------------------


def _circle(center=(2.0, 0.0), radius=1.0, target=(0.0, 0.0), name="circle") -> ConstrainedProblem:
    c, q, r = np.asarray(center, float), np.asarray(target, float), float(radius)
    return ConstrainedProblem(
        name, 2, 1,
        objective=lambda m: float(np.sum((m - q) ** 2)),
        gradient=lambda m: 2 * (m - q),
        embedding=lambda n: c + r * np.array([np.cos(n[0]), np.sin(n[0])]),
        jacobian=lambda n: r * np.array([[-np.sin(n[0])], [np.cos(n[0])]]),
        domain=((0.0, 2 * np.pi, True),),
        params={"center": list(c), "radius": r, "target": list(q)},
    )


def circle(**kw) -> ConstrainedProblem:
    """Circle of radius 1 about (2, 0); F = squared distance from the origin."""
    return _circle(**kw)


def shifted_circle(center=(-1.0, 2.0), radius=1.5, target=(1.0, 0.5)) -> ConstrainedProblem:
    return _circle(center, radius, target, name="shifted_circle")


def ellipse(axes=(2.0, 1.0), target=(0.5, 0.2)) -> ConstrainedProblem:
    ax, q = np.asarray(axes, float), np.asarray(target, float)
    return ConstrainedProblem(
        "ellipse", 2, 1,
        objective=lambda m: float(np.sum((m - q) ** 2)),
        gradient=lambda m: 2 * (m - q),
        embedding=lambda n: ax * np.array([np.cos(n[0]), np.sin(n[0])]),
        jacobian=lambda n: np.array([[-ax[0] * np.sin(n[0])], [ax[1] * np.cos(n[0])]]),
        domain=((0.0, 2 * np.pi, True),),
        params={"axes": list(ax), "target": list(q)},
    )


def sphere(direction=(0.3, -0.5, 0.4)) -> ConstrainedProblem:
    """Unit sphere in R^3 via (θ, φ); linear F = c·m has the two critical points ±c/|c|."""
    c = np.asarray(direction, float)

    def emb(n):
        th, ph = n
        return np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])

    def jac(n):
        th, ph = n
        return np.array(
            [
                [np.cos(th) * np.cos(ph), -np.sin(th) * np.sin(ph)],
                [np.cos(th) * np.sin(ph), np.sin(th) * np.cos(ph)],
                [-np.sin(th), 0.0],
            ]
        )

    return ConstrainedProblem(
        "sphere", 3, 2,
        objective=lambda m: float(c @ m),
        gradient=lambda m: c.copy(),
        embedding=emb,
        jacobian=jac,
        domain=((0.0, np.pi, False), (0.0, 2 * np.pi, True)),
        params={"direction": list(c)},
    )


def identity(target=(0.7, -0.3), half_width=2.0) -> ConstrainedProblem:
    q = np.asarray(target, float)
    w = float(half_width)
    return ConstrainedProblem(
        "identity", 2, 2,
        objective=lambda m: float(np.sum((m - q) ** 2)),
        gradient=lambda m: 2 * (m - q),
        embedding=lambda n: np.asarray(n, float).copy(),
        jacobian=lambda n: np.eye(2),
        domain=((-w, w, False), (-w, w, False)),
        params={"target": list(q), "half_width": w},
    )


CATALOG: dict[str, Callable[..., ConstrainedProblem]] = {
    "circle": circle,
    "shifted_circle": shifted_circle,
    "sphere": sphere,
    "ellipse": ellipse,
    "identity": identity,
}


def load_problem(spec: dict) -> ConstrainedProblem:
    """Build a catalog problem from ``{"name": ..., "params": {...}}``."""
    name = spec.get("name")
    if name not in CATALOG:
        raise KeyError(f"unknown problem {name!r}; available: {sorted(CATALOG)}")
    return CATALOG[name](**spec.get("params", {}))
