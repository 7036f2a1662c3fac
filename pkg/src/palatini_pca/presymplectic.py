"""Finite-dimensional pre-symplectic Hamiltonian systems.

A system is a (possibly state-dependent) antisymmetric matrix Ω, a Hamiltonian H
and a list of labeled constraint residuals.  Conventions: Ω(X, Y) = Xᵀ Ω Y and
Hamilton's equation reads i_X Ω = dH, i.e. -Ω X = ∇H.  For Ω = dq∧dp this gives
{q, p} = 1.

The constraint algorithm represents each constraint manifold by its residual
functions plus witness (probe) states; kernels are computed numerically.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.sparse.linalg import lsmr

log = logging.getLogger(__name__)


class SpectralGapWarning(UserWarning):
    pass


class ConstraintViolation(ValueError):
    pass


class StabilizationError(RuntimeError):
    def __init__(self, msg: str, violations: dict):
        super().__init__(msg)
        self.violations = violations


class UnsolvableError(ValueError):
    def __init__(self, msg: str, direction: np.ndarray):
        super().__init__(msg)
        self.direction = direction


# -- kernel -----------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelResult:
    basis: np.ndarray  # (dim, k) orthonormal columns
    rank: int
    gap: float  # ratio between the smallest kept and the largest discarded singular value


def _dense_kernel(A: np.ndarray, rtol: float, scale: float):
    if A.shape[0] == 0:
        return np.zeros((0, 0)), 0, np.inf
    u, s, vt = np.linalg.svd(A)
    cut = rtol * scale
    rank = int(np.sum(s > cut))
    kept = s[rank - 1] if rank else np.inf
    dropped = s[rank] if rank < s.size else 0.0
    gap = np.inf if dropped == 0 else kept / dropped
    return vt[rank:].T, rank, gap


def kernel(omega, tol: float = 1e-8, antisym_tol: float = 1e-12) -> KernelResult:
    """Orthonormal null-space basis of an antisymmetric matrix.

    Sparse input is split into connected components of its sparsity graph and each
    block is decomposed densely.  ``tol`` is relative to the largest singular value.
    """
    is_sparse = sp.issparse(omega)
    A = sp.csr_matrix(omega) if is_sparse else np.asarray(omega, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("Ω must be square")
    skew = A + A.T
    skew_max = abs(skew).max() if is_sparse else np.max(np.abs(skew), initial=0.0)
    amax = abs(A).max() if (is_sparse and A.nnz) else (np.max(np.abs(A), initial=0.0) if not is_sparse else 0.0)
    if skew_max > antisym_tol * max(1.0, amax):
        raise ValueError(f"Ω is not antisymmetric (|Ω + Ωᵀ| = {skew_max:.2e})")
    if amax == 0:
        return KernelResult(np.eye(n), 0, np.inf)

    if is_sparse:
        ncomp, labels = csgraph.connected_components(A, directed=False)
        rows, cols, vals, rank, gap = [], [], [], 0, np.inf
        col = 0
        order = np.argsort(labels, kind="stable")
        bounds = np.searchsorted(labels[order], np.arange(ncomp + 1))
        for c in range(ncomp):
            idx = order[bounds[c] : bounds[c + 1]]
            block = A[idx][:, idx].toarray()
            if not block.any():
                basis, r, g = np.eye(idx.size), 0, np.inf
            else:
                basis, r, g = _dense_kernel(block, tol, amax)
            rank += r
            gap = min(gap, g)
            for j in range(basis.shape[1]):
                nz = np.nonzero(basis[:, j])[0]
                rows.extend(idx[nz])
                cols.extend([col] * nz.size)
                vals.extend(basis[nz, j])
                col += 1
        B = sp.csc_matrix((vals, (rows, cols)), shape=(n, col)).toarray() if n * col <= 5e7 else None
        if B is None:
            raise MemoryError("kernel too large for a dense basis; use kernel_sparse")
    else:
        B, rank, gap = _dense_kernel(A, tol, amax)
    if rank % 2:
        raise AssertionError(f"antisymmetric matrix with odd numerical rank {rank}; tolerance too loose")
    if gap < 1e3:
        warnings.warn(f"weak spectral gap at tol={tol:g}: kept/dropped singular value ratio {gap:.2e}", SpectralGapWarning)
    return KernelResult(B, rank, gap)


def kernel_coordinates(omega: sp.spmatrix) -> np.ndarray | None:
    """Indices of state coordinates spanning ker Ω when the kernel is coordinate-aligned
    (every zero row/column), else None.  Avoids forming a dense basis for large Ω."""
    A = sp.csr_matrix(omega)
    nnz_rows = np.diff(A.indptr)
    zero = np.nonzero(nnz_rows == 0)[0]
    active = np.nonzero(nnz_rows > 0)[0]
    sub = A[active][:, active]
    ncomp, labels = csgraph.connected_components(sub, directed=False)
    # a nonzero 2x2 antisymmetric block is invertible; larger blocks need a check
    sizes = np.bincount(labels)
    if np.all(sizes == 2):
        return zero
    return None


# -- systems and constraint sets ---------------------------------------------------------


def fd_gradient(f: Callable, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@dataclass(frozen=True)
class LabeledResidual:
    label: str
    fn: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable | None = None  # x -> (m, dim) dense or sparse
    step: int = 0
    # rows of the Hessian of H forming the Jacobian (kernel-direction residuals)
    hessian_rows: np.ndarray | None = None

    def __call__(self, x):
        return np.atleast_1d(np.asarray(self.fn(x), dtype=float))


@dataclass(frozen=True)
class PresymplecticSystem:
    dim: int
    omega: Callable[[np.ndarray], object]
    hamiltonian: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    constraints: tuple[LabeledResidual, ...] = ()
    # label per state coordinate, used to name kernel-direction residuals
    coordinate_labels: Sequence[str] | None = None
    # map from a coordinate label to the residual-family label it produces at step 1
    family_names: dict = field(default_factory=dict)
    hessian: Callable | None = None  # x -> sparse Hessian of H

    def grad_h(self, x) -> np.ndarray:
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        return fd_gradient(self.hamiltonian, x)

    def omega_at(self, x):
        W = self.omega(x)
        return W


@dataclass
class ConstraintSet:
    residuals: list[LabeledResidual] = field(default_factory=list)
    witnesses: list[np.ndarray] = field(default_factory=list)
    tol: float = 1e-10

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.residuals]

    def violations(self, x) -> dict[str, float]:
        return {r.label: float(np.max(np.abs(r(x)), initial=0.0)) for r in self.residuals}

    def check(self, x) -> None:
        bad = {k: v for k, v in self.violations(x).items() if v > self.tol}
        if bad:
            raise ConstraintViolation(f"probe violates constraints: {bad}")

    def jacobian(self, x, dim: int, hessian: Callable | None = None):
        blocks = []
        Hx = None
        for r in self.residuals:
            if r.hessian_rows is not None and hessian is not None:
                if Hx is None:
                    Hx = sp.csr_matrix(hessian(x))
                J = Hx[r.hessian_rows]
            elif r.jacobian is not None:
                J = r.jacobian(x)
            else:
                J = np.stack([fd_gradient(lambda y, i=i: r(y)[i], x) for i in range(r(x).size)]) if r(x).size else np.zeros((0, dim))
            blocks.append(sp.csr_matrix(J))
        if not blocks:
            return sp.csr_matrix((0, dim))
        return sp.vstack(blocks).tocsr()


# -- constraint algorithm -----------------------------------------------------------------


@dataclass
class StepLog:
    step: int
    kernel_dim: int | None
    method: str
    candidates: list[str]  # residuals generated at this step
    added: list[str]  # the subset kept as new constraints
    max_new: dict[str, float]
    stabilized: bool

    def as_dict(self) -> dict:
        return {
            "step": self.step,
            "kernel_dim": self.kernel_dim,
            "method": self.method,
            "candidate_residuals": self.candidates,
            "new_constraints": self.added,
            "max_violation": self.max_new,
            "stabilized": self.stabilized,
        }


def _label_for(sys: PresymplecticSystem, v: np.ndarray) -> str:
    if sys.coordinate_labels is None:
        return "ker"
    i = int(np.argmax(np.abs(v)))
    lab = sys.coordinate_labels[i]
    return sys.family_names.get(lab, lab)


def _first_step_residuals(sys: PresymplecticSystem, x0: np.ndarray, tol: float, step: int):
    W = sys.omega_at(x0)
    coords = kernel_coordinates(W) if sp.issparse(W) else None
    if coords is not None:
        groups: dict[str, list[int]] = {}
        for i in coords:
            lab = sys.family_names.get(sys.coordinate_labels[i], sys.coordinate_labels[i]) if sys.coordinate_labels else "ker"
            groups.setdefault(lab, []).append(int(i))
        out = []
        for lab, idx in sorted(groups.items()):
            idx = np.asarray(idx)
            out.append(LabeledResidual(lab, lambda x, idx=idx: sys.grad_h(x)[idx], step=step, hessian_rows=idx))
        return out, int(coords.size)
    K = kernel(W, tol=tol).basis
    groups = {}
    for j in range(K.shape[1]):
        groups.setdefault(_label_for(sys, K[:, j]), []).append(j)
    out = []
    for lab, cols in groups.items():
        Kc = K[:, cols]

        # Ω may depend on the state: recompute the kernel at the evaluation point
        def fn(x, Kc=Kc):
            Kx = kernel(sys.omega_at(x), tol=tol).basis
            if Kx.shape[1] != K.shape[1]:
                raise ConstraintViolation("kernel dimension changes between states")
            # align the recomputed basis with the reference one
            return (Kx @ (Kx.T @ Kc)).T @ sys.grad_h(x)

        out.append(LabeledResidual(lab, fn, step=step))
    return out, K.shape[1]


def _restricted_kernel(sys: PresymplecticSystem, current: ConstraintSet, x, tol: float):
    J = current.jacobian(x, sys.dim, sys.hessian).toarray()
    N = sla.null_space(J, rcond=tol) if J.shape[0] else np.eye(sys.dim)
    W = sys.omega_at(x)
    W = W.toarray() if sp.issparse(W) else np.asarray(W)
    Wr = N.T @ W @ N
    kr = kernel(Wr, tol=tol).basis if Wr.size else np.zeros((0, 0))
    return N @ kr if kr.size else np.zeros((sys.dim, 0))


def tangent_projection_residual(sys: PresymplecticSystem, current: ConstraintSet, x, atol: float = 1e-15):
    """‖∇H - Jᵀμ‖ minimized over μ: the norm of dH restricted to the tangent space of
    the current constraint set.  It bounds every residual <∇H, v> with v in the kernel
    of Ω restricted to that tangent space."""
    g = sys.grad_h(x)
    J = current.jacobian(x, sys.dim, sys.hessian)
    if J.shape[0] == 0:
        return float(np.linalg.norm(g)), float(np.linalg.norm(g))
    res = lsmr(J.T.tocsr(), g, atol=atol, btol=atol, maxiter=20 * J.shape[0])
    r = g - J.T @ res[0]
    return float(np.linalg.norm(r)), float(np.linalg.norm(g))


def pca_step(
    sys: PresymplecticSystem,
    current: ConstraintSet,
    probe_states: Sequence[np.ndarray],
    tol: float = 1e-8,
    method: str = "auto",
    dense_limit: int = 2000,
) -> tuple[ConstraintSet, StepLog]:
    """One constraint-algorithm step.

    Step 1 (no constraints yet): residuals <∇H, v> for v spanning ker Ω.  Later
    steps use the kernel of Ω restricted to the tangent space of the current set.
    ``method="dense"`` builds that kernel explicitly; ``method="projection"`` evaluates
    the bound :func:`tangent_projection_residual` with a sparse least-squares solve,
    which suffices to certify that no new constraints arise.
    """
    if not probe_states:
        raise ValueError("at least one probe state is required")
    for x in probe_states:
        current.check(x)
    step = 1 + max((r.step for r in current.residuals), default=0)
    x0 = np.asarray(probe_states[0], dtype=float)
    if method == "auto":
        method = "dense" if (not current.residuals or sys.dim <= dense_limit) else "projection"

    if not current.residuals:
        new, kdim = _first_step_residuals(sys, x0, tol, step)
    elif method == "dense":
        ref = _restricted_kernel(sys, current, x0, tol)
        kdim = ref.shape[1]

        def fn(x, ref=ref):
            Kx = _restricted_kernel(sys, current, x, tol)
            if Kx.shape[1] != kdim:
                raise ConstraintViolation("restricted kernel dimension changes between probes")
            return (Kx @ (Kx.T @ ref)).T @ sys.grad_h(x) if kdim else np.zeros(0)

        new = [LabeledResidual(f"step{step}:dH|ker", fn, step=step)] if kdim else []
    elif method == "projection":
        kdim = None

        def fn(x):
            r, _ = tangent_projection_residual(sys, current, x)
            return np.array([r])

        new = [LabeledResidual(f"step{step}:|dH on TM|", fn, step=step)]
    else:
        raise ValueError(f"unknown method {method!r}")

    max_new = {r.label: max(float(np.max(np.abs(r(x)), initial=0.0)) for x in probe_states) for r in new}
    out = ConstraintSet(list(current.residuals), [np.asarray(x) for x in probe_states], current.tol)
    # first-step residuals are the primary constraints and are always kept; later ones
    # only if they do not already vanish on the probes
    if step == 1 or any(v > current.tol for v in max_new.values()):
        out.residuals.extend(new)
        added = [r.label for r in new]
    else:
        added = []
    log_entry = StepLog(step, kdim, method, [r.label for r in new], added, max_new, not added)
    log.info("PCA step %d: %s", step, log_entry.as_dict())
    return out, log_entry


@dataclass
class PCAResult:
    constraints: ConstraintSet
    steps: int
    log: list[StepLog]

    def report(self) -> dict:
        return {
            "stabilized_at": self.steps,
            "final_constraints": self.constraints.labels,
            "steps": [s.as_dict() for s in self.log],
        }

    def to_json(self) -> str:
        return json.dumps(self.report(), indent=2, sort_keys=True)


def run_pca(
    sys: PresymplecticSystem,
    probe_states: Sequence[np.ndarray],
    max_steps: int = 5,
    tol: float = 1e-10,
    kernel_tol: float = 1e-8,
    method: str = "auto",
) -> PCAResult:
    """Iterate :func:`pca_step` until a step adds nothing new on the probes.

    A step is stabilized when every freshly generated residual is below ``tol`` on
    all probes; the returned count is the index of that step.  Residuals from the
    first step always define 𝓜₁ (they are the primary constraints), so a system with
    an empty kernel stabilizes at step 1 with no constraints.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    current = ConstraintSet(list(sys.constraints), [], tol)
    logs: list[StepLog] = []
    probes = list(probe_states)
    for k in range(1, max_steps + 1):
        if k == 1:
            current, entry = pca_step(sys, current, probes, kernel_tol, method)
            logs.append(entry)
            if entry.stabilized:
                return PCAResult(current, 1, logs)
            # probes for the next step must lie on 𝓜₁
            bad = [i for i, x in enumerate(probes) if any(v > tol for v in current.violations(x).values())]
            if bad:
                raise ConstraintViolation(
                    f"probes {bad} do not satisfy the first-step constraints: "
                    + str({i: current.violations(probes[i]) for i in bad})
                )
            continue
        current, entry = pca_step(sys, current, probes, kernel_tol, method)
        logs.append(entry)
        if entry.stabilized:
            return PCAResult(current, k, logs)
        # keep only probes that satisfy the enlarged set
        probes = [x for x in probes if all(v <= tol for v in current.violations(x).values())]
        if not probes:
            raise StabilizationError(f"no probe satisfies the step-{k} constraints", entry.max_new)
    raise StabilizationError(f"no stabilization within {max_steps} steps", logs[-1].max_new)


# -- connections and the covariant bracket ------------------------------------------------


@dataclass(frozen=True)
class Connection:
    """A state-dependent projector onto ker Ω; horizontal vectors satisfy P X = 0."""

    projector: Callable[[np.ndarray], np.ndarray]

    def at(self, x, omega=None, tol: float = 1e-10) -> np.ndarray:
        P = np.asarray(self.projector(x), dtype=float)
        if np.max(np.abs(P @ P - P), initial=0.0) > tol:
            raise ValueError("connection projector is not idempotent")
        if omega is not None:
            W = omega.toarray() if sp.issparse(omega) else np.asarray(omega)
            if np.max(np.abs(W @ P), initial=0.0) > tol * max(1.0, np.max(np.abs(W))):
                raise ValueError("range of the projector is not contained in ker Ω")
        return P

    @classmethod
    def orthogonal(cls, sys: PresymplecticSystem, tol: float = 1e-8) -> "Connection":
        def proj(x):
            W = sys.omega_at(x)
            K = kernel(W.toarray() if sp.issparse(W) else W, tol=tol).basis
            return K @ K.T

        return cls(proj)

    @classmethod
    def along(cls, sys: PresymplecticSystem, complement: Callable[[np.ndarray], np.ndarray], tol: float = 1e-8) -> "Connection":
        """Projector onto ker Ω whose null space is the span of ``complement(x)``."""

        def proj(x):
            W = sys.omega_at(x)
            K = kernel(W.toarray() if sp.issparse(W) else W, tol=tol).basis
            C = np.asarray(complement(x), dtype=float)
            B = np.hstack([K, C])
            if B.shape[0] != B.shape[1] or np.linalg.matrix_rank(B) < B.shape[0]:
                raise ValueError("complement is not transversal to ker Ω")
            sel = np.zeros(B.shape[1])
            sel[: K.shape[1]] = 1.0
            return B @ np.diag(sel) @ np.linalg.inv(B)

        return cls(proj)


def hamiltonian_vector(sys: PresymplecticSystem, P: Connection, dG: np.ndarray, x, tol: float = 1e-10) -> np.ndarray:
    """Horizontal solution of i_X Ω = dG, i.e. -Ω X = dG with P X = 0."""
    W = sys.omega_at(x)
    W = W.toarray() if sp.issparse(W) else np.asarray(W, dtype=float)
    dG = np.asarray(dG, dtype=float)
    K = kernel(W).basis
    if K.size:
        obstruction = K.T @ dG
        worst = int(np.argmax(np.abs(obstruction)))
        if abs(obstruction[worst]) > tol * max(1.0, np.linalg.norm(dG)):
            raise UnsolvableError(
                f"dG has component {obstruction[worst]:.3e} along a kernel direction of Ω", K[:, worst]
            )
    X0 = np.linalg.lstsq(-W, dG, rcond=None)[0]
    Pm = P.at(x, W)
    return X0 - Pm @ X0


def covariant_bracket(
    sys: PresymplecticSystem,
    P: Connection,
    F: Callable,
    G: Callable,
    x,
    dF: Callable | None = None,
    dG: Callable | None = None,
    tol: float = 1e-10,
) -> float:
    """{F, G}(x) = dF(X_G) with X_G horizontal.  Gradients default to central differences."""
    x = np.asarray(x, dtype=float)
    gF = np.asarray(dF(x)) if dF is not None else fd_gradient(F, x)
    gG = np.asarray(dG(x)) if dG is not None else fd_gradient(G, x)
    X = hamiltonian_vector(sys, P, gG, x, tol)
    return float(gF @ X)


def connection_curvature(P: Connection, x, u, v, eps: float = 1e-5) -> float:
    """Vertical part of the bracket of horizontal lifts, P[(1-P)u, (1-P)v] at x.

    Zero for an integrable (flat) horizontal distribution; its size approximates the
    holonomy per unit area around a small loop spanned by u and v.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = x.size
    I = np.eye(n)
    Hx = lambda y, w: (I - P.projector(y)) @ w  # noqa: E731

    def dirderiv(w_field, along):
        return (w_field(x + eps * along) - w_field(x - eps * along)) / (2 * eps)

    U = Hx(x, u)
    V = Hx(x, v)
    bracket = dirderiv(lambda y: Hx(y, v), U) - dirderiv(lambda y: Hx(y, u), V)
    return float(np.linalg.norm(P.projector(x) @ bracket))


# -- reference toy systems -------------------------------------------------------------------


def canonical_system(n: int = 1, potential: Callable | None = None) -> PresymplecticSystem:
    """(q_1..q_n, p_1..p_n) with Ω = Σ dq∧dp and H = ½|p|² + V(q)."""
    W = np.zeros((2 * n, 2 * n))
    W[:n, n:] = np.eye(n)
    W[n:, :n] = -np.eye(n)
    V = potential or (lambda q: 0.5 * float(q @ q))

    def H(x):
        return 0.5 * float(x[n:] @ x[n:]) + V(x[:n])

    return PresymplecticSystem(2 * n, lambda x: W, H, coordinate_labels=["q"] * n + ["p"] * n)


def toy_degenerate(potential: Callable | None = None, g: Callable | None = None, dg: Callable | None = None) -> PresymplecticSystem:
    """State (q, p, z) with Ω = dq∧dp and H = ½p² + V(q) + g(z); z spans ker Ω."""
    W = np.zeros((3, 3))
    W[0, 1], W[1, 0] = 1.0, -1.0
    V = potential or (lambda q: 0.5 * q**2)
    g = g or (lambda z: np.cos(z))

    def H(x):
        return 0.5 * x[1] ** 2 + V(x[0]) + g(x[2])

    return PresymplecticSystem(
        3, lambda x: W, H,
        coordinate_labels=["q", "p", "z"],
        family_names={"z": "dg/dz"},
    )
