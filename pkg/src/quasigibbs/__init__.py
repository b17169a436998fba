"""Steady states of 2-local stochastic quantum channels.

Builds interpolated families of dissipator/correlator channels on
interaction graphs, drives them to their steady states, extracts and
profiles the locality structure of the Gibbs Hamiltonian, and evaluates
steady-state expectations and covariances through a Heisenberg-picture
perturbation engine, with dense brute-force oracles at small qubit counts.
"""

from . import channel, densemath, gibbs, lattice, perturb, steady
from .channel import (
    ChannelModel,
    KrausChannel,
    build_model,
    compose_epsilon_channel,
    make_correlator,
    make_reset_dissipator,
    make_rng,
)
from .gibbs import connected_term_probe, decay_fit, diameter_profile, gibbs_hamiltonian, pauli_transform
from .lattice import build_graph, build_ring, graph_ball, graph_distance, ring_diameter
from .perturb import (
    TransitionEngine,
    covariance_series,
    derive_frames,
    expectation_series,
    heisenberg_sequence,
    to_dual_basis,
    truncation_order,
)
from .steady import dense_fixed_point_oracle, iterate_fixed_point, superoperator_spectrum

__version__ = "0.1.0"

__all__ = [
    "ChannelModel",
    "KrausChannel",
    "TransitionEngine",
    "build_graph",
    "build_model",
    "build_ring",
    "channel",
    "compose_epsilon_channel",
    "connected_term_probe",
    "covariance_series",
    "decay_fit",
    "dense_fixed_point_oracle",
    "densemath",
    "derive_frames",
    "diameter_profile",
    "expectation_series",
    "gibbs",
    "gibbs_hamiltonian",
    "graph_ball",
    "graph_distance",
    "heisenberg_sequence",
    "iterate_fixed_point",
    "lattice",
    "make_correlator",
    "make_reset_dissipator",
    "make_rng",
    "pauli_transform",
    "perturb",
    "ring_diameter",
    "steady",
    "superoperator_spectrum",
    "to_dual_basis",
    "truncation_order",
]
