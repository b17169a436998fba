import numpy as np
import pytest

from conftest import product_state, random_ring_model, zero_state
from quasigibbs.channel import build_model, compose_epsilon_channel, make_rng
from quasigibbs.densemath import PAULI_X, assert_density, trace_distance
from quasigibbs.errors import ContractViolationError, DegeneracyError, SizeError
from quasigibbs.lattice import build_ring
from quasigibbs.steady import (
    dense_fixed_point_oracle,
    iterate_fixed_point,
    superoperator_spectrum,
)


def cz_model(n, eps):
    w = 0.5 * (np.eye(2) + 0.8 * PAULI_X)  # 0.9|+><+| + 0.1|-><-|
    return build_model(build_ring(n), [w] * n, "cz", eps)


def reset_targets(model):
    return [model.dissipators[i].apply_local(np.eye(2, dtype=complex) / 2) for i in range(model.graph.n)]


def test_epsilon_zero_converges_to_product():
    model = random_ring_model(4, seed=21, epsilon=0.0)
    handle = compose_epsilon_channel(model)
    rho, rec = iterate_fixed_point(handle, zero_state(4), tol=1e-10, max_iter=20_000)
    assert rec.converged
    assert trace_distance(rho, product_state(reset_targets(model))) <= 1e-9
    # residual history is monotone once the transient passes
    tail = rec.residual_history[-5:]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(tail, tail[1:]))


def test_cz_model_converges_midrange():
    handle = compose_epsilon_channel(cz_model(6, 0.5))
    rho, rec = iterate_fixed_point(handle, zero_state(6), tol=1e-8, max_iter=100_000)
    assert rec.converged
    assert rec.final_residual <= 1e-8
    assert_density(rho)


def test_cz_epsilon_one_has_two_fixed_points():
    handle = compose_epsilon_channel(cz_model(6, 1.0))
    rho_a, rec_a = iterate_fixed_point(handle, zero_state(6), tol=1e-8, max_iter=1000)
    rho_b, rec_b = iterate_fixed_point(
        handle, np.eye(64, dtype=complex) / 64, tol=1e-8, max_iter=1000
    )
    assert rec_a.converged and rec_b.converged
    assert trace_distance(rho_a, rho_b) >= 0.1


def test_non_density_init_rejected():
    handle = compose_epsilon_channel(cz_model(3, 0.2))
    with pytest.raises(ContractViolationError):
        iterate_fixed_point(handle, np.eye(8, dtype=complex), tol=1e-8)


def test_oracle_agrees_with_iteration():
    model = random_ring_model(3, seed=30, epsilon=0.4)
    handle = compose_epsilon_channel(model)
    rho_it, rec = iterate_fixed_point(handle, zero_state(3), tol=1e-12, max_iter=100_000)
    assert rec.converged
    rho_or = dense_fixed_point_oracle(handle)
    assert trace_distance(rho_it, rho_or) <= 1e-8


def test_oracle_epsilon_zero_product():
    model = random_ring_model(3, seed=31, epsilon=0.0)
    handle = compose_epsilon_channel(model)
    rho = dense_fixed_point_oracle(handle)
    assert np.max(np.abs(rho - product_state(reset_targets(model)))) <= 1e-10


def test_oracle_cz_epsilon_one_degenerate():
    handle = compose_epsilon_channel(cz_model(3, 1.0))
    with pytest.raises(DegeneracyError):
        dense_fixed_point_oracle(handle)


def test_oracle_size_guard():
    handle = compose_epsilon_channel(cz_model(7, 0.3))
    with pytest.raises(SizeError):
        dense_fixed_point_oracle(handle)


def test_oracle_returns_valid_density():
    for seed in (1, 2, 3):
        model = random_ring_model(3, seed=seed, epsilon=0.6)
        rho = dense_fixed_point_oracle(compose_epsilon_channel(model))
        assert_density(rho)


def test_spectrum_leading_eigenvalue_is_one():
    model = random_ring_model(3, seed=40, epsilon=0.35)
    spec = superoperator_spectrum(compose_epsilon_channel(model))
    assert abs(abs(spec.leading) - 1.0) <= 1e-9
    assert np.all(np.abs(spec.eigenvalues) <= 1.0 + 1e-9)


def test_spectrum_epsilon_zero_two_qubit_gap():
    # single-edge graph: q = (1/2, 1/2); the slowest relaxation mode of the
    # dissipative part scales a single-site string by 1 - min(q)
    model = random_ring_model(2, seed=41, epsilon=0.0)
    spec = superoperator_spectrum(compose_epsilon_channel(model))
    mods = np.abs(spec.eigenvalues)
    assert abs(mods[0] - 1.0) <= 1e-9
    assert abs(mods[1] - 0.5) <= 1e-9
    assert spec.gap == pytest.approx(0.5, abs=1e-9)


def test_spectrum_cz_epsilon_one_multiple_peripheral():
    spec = superoperator_spectrum(compose_epsilon_channel(cz_model(3, 1.0)))
    mods = np.abs(spec.eigenvalues)
    assert np.sum(mods > 1.0 - 1e-9) >= 2
