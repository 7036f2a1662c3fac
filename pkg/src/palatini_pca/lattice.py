"""Periodic lattices, finite differences, covariant derivatives and field strength.

A field is a plain array of shape ``grid.dims + value_shape``.  Connections carry
one direction axis before the algebra axes: ``(*dims, d, 4, 4)`` with the slot
``a[..., k, :, :]`` holding a_k^{IJ}.  Derivatives are second-order central
differences with periodic wraparound, which makes them exactly skew-adjoint
under :func:`integrate`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jax.numpy as jnp
import numpy as np

from . import algebra


@dataclass(frozen=True)
class Grid:
    dims: tuple[int, ...]
    h: float
    origin: tuple[float, ...] | None = None

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if len(dims) not in (3, 4):
            raise ValueError(f"grids are 3D or 4D, got {len(dims)} extents")
        if min(dims) < 4:
            raise ValueError(f"every extent must be >= 4, got {dims}")
        if not self.h > 0:
            raise ValueError("spacing h must be positive")
        object.__setattr__(self, "dims", dims)
        origin = (0.0,) * len(dims) if self.origin is None else tuple(float(o) for o in self.origin)
        if len(origin) != len(dims):
            raise ValueError("origin must have one entry per extent")
        object.__setattr__(self, "origin", origin)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def extents(self) -> tuple[float, ...]:
        return tuple(n * self.h for n in self.dims)

    @property
    def cell_volume(self) -> float:
        return self.h**self.ndim

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def coords(self) -> list[np.ndarray]:
        axes = [o + self.h * np.arange(n) for o, n in zip(self.origin, self.dims)]
        return list(np.meshgrid(*axes, indexing="ij"))

    def refined(self) -> "Grid":
        """Same box, half the spacing."""
        return Grid(tuple(2 * n for n in self.dims), self.h / 2, self.origin)


def interior_mask(grid: Grid, width: int = 1) -> np.ndarray:
    """Sites at least ``width`` cells away from the box faces (for non-periodic samples)."""
    mask = np.ones(grid.dims, dtype=bool)
    for ax, n in enumerate(grid.dims):
        idx = [slice(None)] * grid.ndim
        idx[ax] = np.r_[0:width, n - width : n]
        mask[tuple(idx)] = False
    return mask


def _check_direction(grid: Grid, k: int) -> None:
    if not 0 <= k < grid.ndim:
        raise ValueError(f"direction {k} out of range for a {grid.ndim}D grid")


def partial(f, k: int, grid: Grid):
    """Central difference (f(x+h e_k) - f(x-h e_k)) / 2h along grid axis k."""
    _check_direction(grid, k)
    return (jnp.roll(f, -1, axis=k) - jnp.roll(f, 1, axis=k)) / (2.0 * grid.h)


def gradient(f, grid: Grid):
    """Stack of partials along a new axis right after the site axes."""
    d = grid.ndim
    return jnp.stack([partial(f, k, grid) for k in range(d)], axis=d)


def covariant_derivative(a, psi, k: int, grid: Grid):
    """∇_k ψ = ∂_k ψ + [a_k, ψ] for an upper-index algebra field ψ."""
    _check_direction(grid, k)
    if a.shape[: grid.ndim] != psi.shape[: grid.ndim]:
        raise ValueError("connection and field live on different grids")
    return partial(psi, k, grid) + algebra.commutator(a[..., k, :, :], psi)


def covariant_derivative_dual(a, p, k: int, grid: Grid):
    """∇_k p for a lower-index field p, i.e. lower(∇_k raise(p))."""
    _check_direction(grid, k)
    return partial(p, k, grid) + algebra.lower(algebra.commutator(a[..., k, :, :], algebra.raise_(p)))


def field_strength(a, grid: Grid, half: bool = False):
    """F_{jk} = ∂_j a_k - ∂_k a_j + [a_j, a_k], shape ``(*dims, d, d, 4, 4)``.

    With ``half=True`` the result is multiplied by ½, reproducing the normalization
    R = ½(∂A - ∂A + AA - AA) of the Frölicher-Nijenhuis curvature.
    """
    d = grid.ndim
    if a.shape[d] < 2:
        raise ValueError("field strength needs at least two directions")
    n = a.shape[d]
    rows = []
    for j in range(n):
        row = []
        for k in range(n):
            if j == k:
                row.append(jnp.zeros_like(a[..., 0, :, :]))
                continue
            row.append(
                partial(a[..., k, :, :], j, grid)
                - partial(a[..., j, :, :], k, grid)
                + algebra.commutator(a[..., j, :, :], a[..., k, :, :])
            )
        rows.append(jnp.stack(row, axis=d))
    F = jnp.stack(rows, axis=d)
    return 0.5 * F if half else F


def integrate(f, grid: Grid):
    """Sum over sites times h^d."""
    if tuple(f.shape) != grid.dims:
        raise ValueError(f"integrate expects a scalar field of shape {grid.dims}, got {f.shape}")
    return jnp.sum(f) * grid.cell_volume


@dataclass(frozen=True)
class LatticeField:
    """A field together with its grid and a shape tag, as exchanged with the CLI."""

    grid: Grid
    data: np.ndarray
    tag: str = "scalar"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.shape[: self.grid.ndim] != self.grid.dims:
            raise ValueError("data does not match the grid extents")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def value_shape(self) -> tuple[int, ...]:
        return self.data.shape[self.grid.ndim :]


FORMAT_VERSION = 1


def save_field(path: str | Path, fld: LatticeField) -> None:
    """JSON: a header plus the flat row-major data array."""
    payload = {
        "format": "palatini-pca-field",
        "version": FORMAT_VERSION,
        "dims": list(fld.grid.dims),
        "h": fld.grid.h,
        "origin": list(fld.grid.origin),
        "tag": fld.tag,
        "value_shape": list(fld.value_shape),
        "meta": fld.meta,
        "data": fld.data.ravel().tolist(),
    }
    Path(path).write_text(json.dumps(payload))


def load_field(path: str | Path) -> LatticeField:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != "palatini-pca-field":
        raise ValueError(f"{path} is not a field file")
    grid = Grid(tuple(payload["dims"]), payload["h"], tuple(payload["origin"]))
    shape = tuple(payload["dims"]) + tuple(payload["value_shape"])
    data = np.asarray(payload["data"], dtype=float).reshape(shape)
    return LatticeField(grid, data, payload["tag"], payload.get("meta", {}))
