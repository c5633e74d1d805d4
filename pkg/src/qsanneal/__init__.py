"""Classical simulated annealing and its quantum-walk (Zeno projection) counterpart."""

from .classical_sa import anneal_exact, sa_schedule
from .energy_model import EnergyModel, boltzmann, build_model
from .markov import kernel_spectrum, metropolis_builder, metropolis_kernel, symmetrize
from .phase_estimation import PeaConfig, choose_p, pea_amplitude
from .qsa import qsa_schedule, qsa_success_exact, run_qsa
from .qwalk import build_walk, build_walk_dense

__version__ = "0.1.0"

__all__ = [
    "EnergyModel",
    "PeaConfig",
    "anneal_exact",
    "boltzmann",
    "build_model",
    "build_walk",
    "build_walk_dense",
    "choose_p",
    "kernel_spectrum",
    "metropolis_builder",
    "metropolis_kernel",
    "pea_amplitude",
    "qsa_schedule",
    "qsa_success_exact",
    "run_qsa",
    "sa_schedule",
    "symmetrize",
]
