"""Constrained multisymplectic tooling for tetradic Palatini gravity on periodic lattices.

All array kernels are written against ``jax.numpy`` in double precision so that
constraint Jacobians and Hamiltonian gradients are exact rather than finite-differenced.
"""

import jax

jax.config.update("jax_enable_x64", True)

__version__ = "0.1.0"
