"""Internal symmetry layer: Minkowski metric and the o(1,3) Lie algebra.

Algebra-valued quantities are carried in two forms:

* :class:`AlgebraElement`, an immutable value with the 6 independent components
  psi^{IJ}, I < J, in the order of :data:`PAIRS`;
* bare arrays of trailing shape ``(4, 4)``, antisymmetric in the last two axes.
  Lattice fields use this form so that every kernel vectorizes over sites.

Index placement: an array holds upper internal indices psi^{IJ} unless the name
says otherwise (momenta ``p`` carry lower indices p_{IJ}).  The collective index
a = IJ runs over the pairs I < J, so contractions between an upper and a lower
algebra index are ``sum_{I<J} x^{IJ} y_{IJ}`` (see :func:`pair`).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import jax.numpy as jnp
import numpy as np

# signature (-,+,+,+)
ETA = np.diag([-1.0, 1.0, 1.0, 1.0])
PAIRS: tuple[tuple[int, int], ...] = tuple(combinations(range(4), 2))
_ETA_DIAG = np.diag(ETA).copy()
_ETA_OUTER = np.outer(_ETA_DIAG, _ETA_DIAG)
_PI = np.array([p[0] for p in PAIRS])
_PJ = np.array([p[1] for p in PAIRS])


def antisymmetrize(x):
    """Return ½(x - xᵀ) over the last two axes."""
    return 0.5 * (x - jnp.swapaxes(x, -1, -2))


def commutator(x, y):
    """[x, y]^{IJ} = x^{IK} η_KL y^{LJ} - y^{IK} η_KL x^{LJ}, broadcast over leading axes."""
    xe = x * _ETA_DIAG
    ye = y * _ETA_DIAG
    return xe @ y - ye @ x


def to_matrix(x):
    """Mixed-index matrix M^I_J = x^{IK} η_KJ; commutators of these match :func:`commutator`."""
    return x * _ETA_DIAG


def from_matrix(m):
    return m * _ETA_DIAG


def lower(x):
    """η_IK η_JL x^{KL}."""
    return x * _ETA_OUTER


# η is its own inverse
raise_ = lower


def raise_lower(x, which: str = "both"):
    """Contract the internal indices selected by ``which`` with η.

    ``which`` is one of ``"first"``, ``"second"`` or ``"both"``.  Since η² = 1 the
    same call raises or lowers, and applying it twice returns the input.
    """
    eta = jnp.asarray(ETA)
    if which == "both":
        return eta @ x @ eta
    if which == "first":
        return eta @ x
    if which == "second":
        return x @ eta
    raise ValueError(f"invalid index position specifier {which!r}")


def pair(x_upper, y_lower):
    """Collective-index contraction sum_{I<J} x^{IJ} y_{IJ} (pointwise over leading axes)."""
    return 0.5 * jnp.sum(x_upper * y_lower, axis=(-2, -1))


def dual_bracket(p_lower, psi):
    """[p, ψ]_{IJ} for a lower-index (dual) element p: lower([raise(p), ψ])."""
    return lower(commutator(raise_(p_lower), psi))


def components(x):
    """(..., 4, 4) antisymmetric → (..., 6) independent components."""
    return x[..., _PI, _PJ]


# T[a] = ξ_I ∧ ξ_J for the a-th pair; contraction avoids scatter updates under jit
_T = np.zeros((6, 4, 4))
_T[np.arange(6), _PI, _PJ] = 1.0
_T[np.arange(6), _PJ, _PI] = -1.0


def from_components(c):
    """(..., 6) → (..., 4, 4) antisymmetric array."""
    return jnp.tensordot(jnp.asarray(c), _T, axes=1)


def basis() -> np.ndarray:
    """Basis T_a = ξ_I ∧ ξ_J (I<J) as a (6, 4, 4) array."""
    return np.asarray(from_components(np.eye(6)))


def _structure_constants() -> np.ndarray:
    T = basis()
    f = np.zeros((6, 6, 6))
    for a in range(6):
        for b in range(6):
            f[a, b] = np.asarray(components(commutator(T[a], T[b])))
    return f


#: [T_a, T_b] = f[a, b, c] T_c.  These are the true o(1,3) constants, not a Levi-Civita symbol.
STRUCTURE_CONSTANTS = _structure_constants()


def is_lorentz(lam, tol: float = 1e-10) -> bool:
    """Sitewise check Λᵀ η Λ = η."""
    lam = np.asarray(lam)
    dev = np.einsum("...ki,kl,...lj->...ij", lam, ETA, lam) - ETA
    return bool(np.max(np.abs(dev), initial=0.0) <= tol)


def lorentz_exp(psi):
    """Group element exp(M(ψ)) in O(1,3), mixed indices Λ^I_J."""
    from jax.scipy.linalg import expm

    return expm(to_matrix(psi))


@dataclass(frozen=True)
class AlgebraElement:
    """An element of o(1,3) stored as its 6 independent components."""

    comps: tuple[float, ...]

    def __post_init__(self):
        if len(self.comps) != 6:
            raise ValueError("an o(1,3) element has exactly 6 components")
        object.__setattr__(self, "comps", tuple(float(c) for c in self.comps))

    @classmethod
    def from_array(cls, x, tol: float = 1e-12) -> "AlgebraElement":
        x = np.asarray(x, dtype=float)
        if x.shape != (4, 4):
            raise ValueError(f"expected a 4x4 array, got shape {x.shape}")
        if np.max(np.abs(x + x.T)) > tol * max(1.0, np.max(np.abs(x))):
            raise ValueError("array is not antisymmetric")
        return cls(tuple(np.asarray(components(x))))

    @classmethod
    def random(cls, rng: np.random.Generator, scale: float = 1.0) -> "AlgebraElement":
        c = rng.standard_normal(6)
        return cls(tuple(scale * c / np.linalg.norm(c)))

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(from_components(np.array(self.comps)))

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        return AlgebraElement(tuple(a + b for a, b in zip(self.comps, other.comps)))

    def __sub__(self, other: "AlgebraElement") -> "AlgebraElement":
        return AlgebraElement(tuple(a - b for a, b in zip(self.comps, other.comps)))

    def __mul__(self, s: float) -> "AlgebraElement":
        return AlgebraElement(tuple(s * a for a in self.comps))

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.linalg.norm(self.comps))

    def bracket(self, other: "AlgebraElement") -> "AlgebraElement":
        c = np.einsum("a,b,abc->c", self.comps, other.comps, STRUCTURE_CONSTANTS)
        return AlgebraElement(tuple(c))
