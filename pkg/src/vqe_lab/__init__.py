"""Exact statevector VQE on small triangular fermion lattices."""

from .models import ModelId, hamiltonian, reference_ground_energy
from .state_core import PauliSum, PauliTerm, expectation
from .vqe import RunConfig, run_ensemble, run_vqe

__all__ = [
    "ModelId",
    "PauliSum",
    "PauliTerm",
    "RunConfig",
    "expectation",
    "hamiltonian",
    "reference_ground_energy",
    "run_ensemble",
    "run_vqe",
]
__version__ = "0.1.0"
