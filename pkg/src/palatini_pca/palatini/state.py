"""Slice states of the extended phase space and their flat coordinate vectors.

Field layout on a 3D grid with ``s = grid.dims``:

    a0    (*s, 4, 4)          a_0^{IJ}
    a     (*s, 3, 4, 4)       a_k^{IJ}
    p     (*s, 3, 4, 4)       p^k_{IJ}            (lower internal indices)
    beta  (*s, 3, 3, 4, 4)    β_{jk IJ}           (antisymmetric in jk, lower IJ)
    E     (*s, 4, 4)          e^mu_I              (mu = 0 is the slice normal)
    lam0  (*s, 3, 4, 4)       λ_{k0}^{IJ}
    lam   (*s, 3, 3, 4, 4)    λ_{jk}^{IJ}         (antisymmetric in jk)

Spatial direction k = 0, 1, 2 is grid axis k and spacetime index mu = k + 1.
The flat vector holds independent components only (I < J, j < k), block by block,
112 numbers per site.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import jax
import jax.numpy as jnp
import numpy as np

from .. import algebra
from ..lattice import Grid

FIELDS = ("a0", "a", "p", "beta", "E", "lam0", "lam")
SPATIAL_PAIRS = ((0, 1), (0, 2), (1, 2))
_SJ = np.array([p[0] for p in SPATIAL_PAIRS])
_SK = np.array([p[1] for p in SPATIAL_PAIRS])
# independent numbers per site, per block
BLOCK_SIZES = {"a0": 6, "a": 18, "p": 18, "beta": 18, "E": 16, "lam0": 18, "lam": 18}
PER_SITE = sum(BLOCK_SIZES.values())


_S = np.zeros((3, 3, 3))
_S[np.arange(3), _SJ, _SK] = 1.0
_S[np.arange(3), _SK, _SJ] = -1.0


def _pairs_to_full(c, axis: int):
    """Replace a length-3 pair axis at ``axis`` by (3, 3) antisymmetric spatial axes."""
    out = jnp.tensordot(jnp.moveaxis(jnp.asarray(c), axis, -1), _S, axes=1)
    return jnp.moveaxis(out, (-2, -1), (axis, axis + 1))


def _full_to_pairs(x, axis: int):
    x = jnp.moveaxis(jnp.asarray(x), (axis, axis + 1), (0, 1))
    return jnp.moveaxis(x[_SJ, _SK], 0, axis)


@dataclass(frozen=True)
class SliceState:
    grid: Grid
    a0: jnp.ndarray
    a: jnp.ndarray
    p: jnp.ndarray
    beta: jnp.ndarray
    E: jnp.ndarray
    lam0: jnp.ndarray
    lam: jnp.ndarray

    def __post_init__(self):
        if self.grid.ndim != 3:
            raise ValueError("slice states live on 3D grids")
        s = self.grid.dims
        shapes = {
            "a0": s + (4, 4),
            "a": s + (3, 4, 4),
            "p": s + (3, 4, 4),
            "beta": s + (3, 3, 4, 4),
            "E": s + (4, 4),
            "lam0": s + (3, 4, 4),
            "lam": s + (3, 3, 4, 4),
        }
        for name, shape in shapes.items():
            v = getattr(self, name)
            if hasattr(v, "shape") and tuple(v.shape) != shape:
                raise ValueError(f"field {name} has shape {tuple(v.shape)}, expected {shape}")

    def replace(self, **kw) -> "SliceState":
        return replace(self, **kw)

    def fields(self) -> dict:
        return {f: getattr(self, f) for f in FIELDS}

    def antisymmetry_defect(self) -> float:
        d = 0.0
        for name in ("a0", "a", "p", "beta", "lam0", "lam"):
            x = np.asarray(getattr(self, name))
            d = max(d, float(np.max(np.abs(x + np.swapaxes(x, -1, -2)), initial=0.0)))
        for name in ("beta", "lam"):
            x = np.asarray(getattr(self, name))
            d = max(d, float(np.max(np.abs(x + np.swapaxes(x, 3, 4)), initial=0.0)))
        return d

    # vector-space operations, used for tangent vectors as well
    def __add__(self, other: "SliceState") -> "SliceState":
        return jax.tree_util.tree_map(lambda x, y: x + y, self, other)

    def __sub__(self, other: "SliceState") -> "SliceState":
        return jax.tree_util.tree_map(lambda x, y: x - y, self, other)

    def __mul__(self, s) -> "SliceState":
        return jax.tree_util.tree_map(lambda x: s * x, self)

    __rmul__ = __mul__

    def norm(self) -> float:
        """Euclidean norm of the independent coordinates."""
        return float(jnp.linalg.norm(pack(self)))


jax.tree_util.register_dataclass(SliceState, data_fields=list(FIELDS), meta_fields=["grid"])

#: tangent vectors share the layout of states (a perturbation of every field)
TangentVector = SliceState


def zeros(grid: Grid) -> SliceState:
    s = grid.dims
    z = jnp.zeros
    return SliceState(
        grid, z(s + (4, 4)), z(s + (3, 4, 4)), z(s + (3, 4, 4)), z(s + (3, 3, 4, 4)),
        z(s + (4, 4)), z(s + (3, 4, 4)), z(s + (3, 3, 4, 4)),
    )


def pack(x: SliceState) -> jnp.ndarray:
    """Flat vector of independent coordinates, block-major then site-major."""
    n = x.grid.size
    parts = [
        algebra.components(x.a0).reshape(n, -1),
        algebra.components(x.a).reshape(n, -1),
        algebra.components(x.p).reshape(n, -1),
        algebra.components(_full_to_pairs(x.beta, 3)).reshape(n, -1),
        x.E.reshape(n, -1),
        algebra.components(x.lam0).reshape(n, -1),
        algebra.components(_full_to_pairs(x.lam, 3)).reshape(n, -1),
    ]
    return jnp.concatenate([q.ravel() for q in parts])


def unpack(v, grid: Grid) -> SliceState:
    v = jnp.asarray(v)
    n = grid.size
    s = grid.dims
    if v.shape != (n * PER_SITE,):
        raise ValueError(f"expected a vector of length {n * PER_SITE}, got {v.shape}")
    out = {}
    off = 0
    for name in FIELDS:
        size = BLOCK_SIZES[name] * n
        blk = v[off : off + size].reshape(n, BLOCK_SIZES[name])
        off += size
        if name == "E":
            out[name] = blk.reshape(s + (4, 4))
        elif name == "a0":
            out[name] = algebra.from_components(blk).reshape(s + (4, 4))
        elif name in ("a", "p", "lam0"):
            out[name] = algebra.from_components(blk.reshape(n, 3, 6)).reshape(s + (3, 4, 4))
        else:
            full = algebra.from_components(blk.reshape(n, 3, 6))
            out[name] = _pairs_to_full(full, 1).reshape(s + (3, 3, 4, 4))
    return SliceState(grid, **out)


def coordinate_labels(grid: Grid) -> list[str]:
    """Block name per flat coordinate; the tetrad splits into "E0" (e^0_I) and "Ek" (e^k_I)."""
    out = []
    for name in FIELDS:
        if name == "E":
            out.extend((["E0"] * 4 + ["Ek"] * 12) * grid.size)
        else:
            out.extend([name] * (BLOCK_SIZES[name] * grid.size))
    return out


def coordinate_sites(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """(site index, within-site component index) for every flat coordinate."""
    n = grid.size
    sites, comps = [], []
    base = 0
    for name in FIELDS:
        b = BLOCK_SIZES[name]
        sites.append(np.repeat(np.arange(n), b))
        comps.append(base + np.tile(np.arange(b), n))
        base += b
    return np.concatenate(sites), np.concatenate(comps)


def block_slice(name: str, grid: Grid) -> slice:
    off = 0
    for f in FIELDS:
        size = BLOCK_SIZES[f] * grid.size
        if f == name:
            return slice(off, off + size)
        off += size
    raise KeyError(name)
