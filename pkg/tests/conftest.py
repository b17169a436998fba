"""Shared helpers for the test suite. All randomness is seeded."""

from __future__ import annotations

import numpy as np

from quasigibbs.channel import ChannelModel, build_model, make_rng, random_reset_state
from quasigibbs.lattice import InteractionGraph, build_graph, build_ring


def random_hermitian(rng: np.random.Generator, dim: int) -> np.ndarray:
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (a + a.conj().T)


def random_density(rng: np.random.Generator, dim: int) -> np.ndarray:
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_operator(rng: np.random.Generator, dim: int) -> np.ndarray:
    return rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))


def two_vertex_graph() -> InteractionGraph:
    return build_graph(2, [(0, 1, 1.0)])


def random_ring_model(
    n: int,
    seed: int,
    *,
    epsilon: float = 0.0,
    kind: str = "random_kraus",
    lambda_range: tuple[float, float] = (0.1, 0.8),
    k: int = 1,
    rank: int = 3,
) -> ChannelModel:
    graph = build_ring(n) if n >= 3 else two_vertex_graph()
    rng = make_rng(seed)
    states = [random_reset_state(rng, lambda_range) for _ in range(n)]
    return build_model(graph, states, kind, epsilon, seed=seed + 7919, k=k, rank=rank)


def product_state(states) -> np.ndarray:
    out = np.array([[1.0]], dtype=complex)
    for w in states:
        out = np.kron(out, w)
    return out


def zero_state(n: int) -> np.ndarray:
    rho = np.zeros((2**n, 2**n), dtype=complex)
    rho[0, 0] = 1.0
    return rho
