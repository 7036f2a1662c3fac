"""Discretized tetradic Palatini gravity on a spatial slice."""

from .builders import BUILDERS, build, constant_curvature, homogeneous_vacuum, minkowski, random_smooth
from .dynamics import DriftError, Trajectory, einstein_residual, evolution_vector, evolve
from .generators import (
    GaugeTransformResult,
    LiftedGenerator,
    diffeo_commutator_residual,
    diffeo_generator,
    divergence_free,
    gauge_commutator_residual,
    gauge_generator,
    gauge_transform,
    lie_bracket,
    lift_diffeo,
    lift_gauge,
    lorentz_field,
    tangency,
)
from .state import SliceState, TangentVector, pack, unpack
from .system import (
    FAMILIES,
    build_omega,
    constraint_jacobian,
    constraint_residuals,
    extended_hamiltonian,
    hamiltonian_equation_residual,
    hamiltonian_gradient,
    kernel_membership,
    palatini_system,
    relative_hamiltonian,
    residual_norms,
    solve_constraints,
)
from .topological import bf_action, random_configuration, topological_limit_gap, ym_action_with_G

gauge_generator_G = gauge_generator
diffeo_generator_D = diffeo_generator
gauge_commutator_check = gauge_commutator_residual


def lift_generators(param, x: SliceState) -> LiftedGenerator:
    """Lift a gauge parameter ψ (algebra field) or a spatial vector field ξ to every block."""
    import jax.numpy as jnp

    shape = jnp.shape(param)
    if shape[-2:] == (4, 4):
        return lift_gauge(param, x)
    if shape[-1:] == (3,):
        return lift_diffeo(param, x)
    raise ValueError(f"cannot tell a gauge parameter from a vector field by shape {shape}")


__all__ = [n for n in dir() if not n.startswith("_")]
