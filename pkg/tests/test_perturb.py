import numpy as np
import pytest

from conftest import product_state, random_ring_model
from quasigibbs.channel import compose_epsilon_channel, make_rng
from quasigibbs.densemath import PAULI_X, PAULI_Z, hs_inner, schatten_norm, tensor_embed
from quasigibbs.errors import (
    ContractViolationError,
    TermBudgetError,
    ThresholdError,
    UnsupportedDissipatorError,
)
from quasigibbs.perturb import (
    EPSILON_THRESHOLD,
    DualBasisOperator,
    TransitionEngine,
    _dual_elems,
    _primal_elems,
    apply_adjoint_dissipative_part,
    covariance_series,
    derive_frames,
    expectation_series,
    from_dual_basis,
    heisenberg_sequence,
    to_dual_basis,
    truncation_order,
)
from quasigibbs.steady import dense_fixed_point_oracle

# single-step l1 growth bound of the transition map for 2-local channels
STEP_L1_BOUND = 130.0


def make_engine(n, seed, **kw):
    model = random_ring_model(n, seed, epsilon=0.0, **kw)
    return model, TransitionEngine(model)


def test_frames_diagonal_target():
    model, engine = make_engine(3, 100)
    w = np.diag([0.9, 0.1]).astype(complex)
    from quasigibbs.channel import build_model, make_reset_dissipator
    from quasigibbs.lattice import build_ring

    m = build_model(build_ring(3), [w] * 3, "cz", 0.0)
    frame = derive_frames(m)
    assert frame.lambdas[0] == pytest.approx(0.8, abs=1e-12)
    assert np.allclose(frame.unitaries[0], np.eye(2), atol=1e-12)


def test_frames_plus_basis_target():
    from quasigibbs.channel import build_model
    from quasigibbs.lattice import build_ring

    w = 0.5 * (np.eye(2) + 0.8 * PAULI_X)
    m = build_model(build_ring(3), [w] * 3, "cz", 0.0)
    frame = derive_frames(m)
    assert frame.lambdas[0] == pytest.approx(0.8, abs=1e-12)
    rotated = frame.unitaries[0] @ w @ frame.unitaries[0].conj().T
    assert np.allclose(rotated, np.diag([0.9, 0.1]), atol=1e-12)


def test_frames_maximally_mixed_target():
    from quasigibbs.channel import build_model
    from quasigibbs.lattice import build_ring

    w = np.eye(2, dtype=complex) / 2
    m = build_model(build_ring(3), [w] * 3, "cz", 0.0)
    assert derive_frames(m).lambdas == (0.0, 0.0, 0.0)


def test_frames_reject_non_reset_dissipator():
    from quasigibbs.channel import KrausChannel, build_model, make_correlator
    from quasigibbs.lattice import build_ring

    # a unitary dissipator is not a reset channel
    phase = np.diag([1.0, 1j])
    g = build_ring(3)
    dissipators = {i: KrausChannel(support=(i,), kraus_ops=(phase,)) for i in range(3)}
    correlators = {e: make_correlator("cz", edge=e) for e in g.edges}
    from quasigibbs.channel import ChannelModel

    model = ChannelModel(graph=g, dissipators=dissipators, correlators=correlators, epsilon=0.0)
    with pytest.raises(UnsupportedDissipatorError):
        derive_frames(model)


def test_biorthonormality_single_qubit():
    for lam in (0.0, 0.3, 0.8):
        primal = _primal_elems(lam)
        dual = _dual_elems(lam)
        for a in range(4):
            for b in range(4):
                want = 1.0 if a == b else 0.0
                assert abs(hs_inner(dual[b], primal[a]) - want) <= 1e-12


def test_biorthonormality_two_qubit_products():
    lam_i, lam_j = 0.5, 0.8
    pi, pj = _primal_elems(lam_i), _primal_elems(lam_j)
    di, dj = _dual_elems(lam_i), _dual_elems(lam_j)
    for a1 in range(4):
        for a2 in range(4):
            for b1 in range(4):
                for b2 in range(4):
                    lhs = hs_inner(np.kron(di[b1], dj[b2]), np.kron(pi[a1], pj[a2]))
                    want = 1.0 if (a1, a2) == (b1, b2) else 0.0
                    assert abs(lhs - want) <= 1e-12


def test_identity_expansion():
    model, engine = make_engine(3, 101)
    o = to_dual_basis(np.eye(2, dtype=complex), (1,), engine.frame)
    assert o.num_terms() == 1
    assert o.identity_coefficient() == pytest.approx(1.0)


def test_z_expansion_in_diagonal_frame():
    from quasigibbs.channel import build_model
    from quasigibbs.lattice import build_ring

    w = np.diag([0.9, 0.1]).astype(complex)
    m = build_model(build_ring(3), [w] * 3, "cz", 0.0)
    frame = derive_frames(m)
    o = to_dual_basis(PAULI_Z, (0,), frame)
    assert o.terms[((0, 3),)] == pytest.approx(1.0)
    assert o.terms[()] == pytest.approx(0.8)
    assert o.l1_norm() == pytest.approx(1.8)


def test_round_trip_and_identity_coefficient():
    model, engine = make_engine(4, 102)
    frame = engine.frame
    rng = make_rng(103)
    for sup in ((0,), (1, 2), (0, 3)):
        dim = 2 ** len(sup)
        a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        o = to_dual_basis(a, sup, frame)
        back = from_dual_basis(o, frame, sup)
        assert np.max(np.abs(back - a)) <= 1e-10
        rho_sup = product_state([frame.reset_states[s] for s in sup])
        assert o.identity_coefficient() == pytest.approx(
            complex(np.trace(a @ rho_sup)), abs=1e-12
        )


def test_identity_coefficient_rule_from_reconstruction():
    model, engine = make_engine(3, 104)
    frame = engine.frame
    rng = make_rng(105)
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    o = to_dual_basis(a, (0, 2), frame)
    rho0 = product_state(frame.reset_states)
    full = tensor_embed(from_dual_basis(o, frame, (0, 2)), (0, 2), 3)
    assert np.trace(rho0 @ full) == pytest.approx(o.identity_coefficient(), abs=1e-12)


def test_l1_norm_examples():
    model, engine = make_engine(3, 106)
    frame = engine.frame
    one = DualBasisOperator(n=3, terms={((1, 2),): 1.0})
    assert one.l1_norm() == 1.0
    rng = make_rng(107)
    a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    o_small = to_dual_basis(a, (1,), frame)
    o_embedded = to_dual_basis(np.kron(a, np.eye(2)), (1, 2), frame)
    assert o_small.l1_norm() == pytest.approx(o_embedded.l1_norm(), abs=1e-12)


def test_adjoint_dissipative_part_scaling():
    model, engine = make_engine(10, 108)
    g = model.graph
    o = DualBasisOperator(n=10, terms={(): 1.0, ((3, 1),): 2.0})
    out = apply_adjoint_dissipative_part(o, g)
    assert out.terms[()] == pytest.approx(1.0)
    assert out.terms[((3, 1),)] == pytest.approx(2.0 * 0.9)


def test_adjoint_dissipative_part_dense_cross_check():
    model, engine = make_engine(3, 109)
    frame = engine.frame
    handle0 = compose_epsilon_channel(model)  # epsilon = 0: dissipative part only
    rng = make_rng(110)
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    o = to_dual_basis(a, (0, 1), frame)
    sparse_route = apply_adjoint_dissipative_part(o, model.graph)
    dense_in = tensor_embed(a, (0, 1), 3)
    dense_out = handle0.apply_adjoint(dense_in)
    back = tensor_embed(
        from_dual_basis(sparse_route, frame, sparse_route.support() or (0,)),
        sparse_route.support() or (0,),
        3,
    )
    assert np.max(np.abs(back - dense_out)) <= 1e-10


def test_transition_kills_identity():
    model, engine = make_engine(4, 111)
    ident = to_dual_basis(np.eye(2, dtype=complex), (2,), engine.frame)
    assert engine.apply_transition(ident).num_terms() == 0


def test_transition_support_growth_and_l1_bound():
    model, engine = make_engine(10, 112)
    rng = make_rng(113)
    from quasigibbs.lattice import graph_ball

    for _ in range(25):
        size = int(rng.integers(1, 4))
        sites = tuple(sorted(rng.choice(10, size=size, replace=False).tolist()))
        dim = 2**size
        a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        o = to_dual_basis(a, sites, engine.frame)
        t = engine.apply_transition(o)
        if t.num_terms():
            assert set(t.support()) <= set(graph_ball(model.graph, o.support(), 1))
        assert t.l1_norm() <= STEP_L1_BOUND * o.l1_norm()


def test_transition_matches_dense_route():
    model, engine = make_engine(3, 114)
    frame = engine.frame
    n, dim = 3, 8
    handle0 = compose_epsilon_channel(model, epsilon_overrides={e: 0.0 for e in model.graph.edges})
    handle1 = compose_epsilon_channel(model, epsilon_overrides={e: 1.0 for e in model.graph.edges})
    rho0 = product_state(frame.reset_states)

    def adj_k(x):
        return x - handle0.apply_adjoint(x) + np.trace(rho0 @ x) * np.eye(dim)

    kmat = np.zeros((dim * dim, dim * dim), dtype=complex)
    basis = np.zeros((dim, dim), dtype=complex)
    for a in range(dim):
        for b in range(dim):
            basis[a, b] = 1.0
            kmat[:, a * dim + b] = adj_k(basis).reshape(-1)
            basis[a, b] = 0.0

    rng = make_rng(115)
    for sup in ((0,), (1, 2)):
        d = 2 ** len(sup)
        a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        o = to_dual_basis(a, sup, frame)
        t = engine.apply_transition(o)
        t_dense_sp = tensor_embed(from_dual_basis(t, frame, t.support()), t.support(), n)
        x = np.linalg.solve(kmat, tensor_embed(a, sup, n).reshape(-1)).reshape(dim, dim)
        t_dense = handle1.apply_adjoint(x) - handle0.apply_adjoint(x)
        assert np.max(np.abs(t_dense_sp - t_dense)) <= 1e-9


def test_growth_lemma_for_single_correlator():
    model, engine = make_engine(6, 116)
    lam = engine.frame.lambda_max
    bound = 16.0 * (1.0 + lam) ** 2
    rng = make_rng(117)
    for _ in range(20):
        sites = tuple(sorted(rng.choice(6, size=2, replace=False).tolist()))
        a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        o = to_dual_basis(a, sites, engine.frame)
        edge = model.graph.edges[int(rng.integers(0, len(model.graph.edges)))]
        out = engine.apply_correlator_adjoint(o, edge)
        assert out.l1_norm() <= bound * o.l1_norm() + 1e-9


def test_operator_norm_bounds_vs_l1():
    model, engine = make_engine(4, 118)
    frame = engine.frame
    lam = frame.lambda_max
    rng = make_rng(119)
    # members of the weight <= k span obey the (1+lambda)^k operator bound
    for _ in range(20):
        k = int(rng.integers(1, 4))
        terms = {}
        for _ in range(int(rng.integers(1, 6))):
            sites = tuple(sorted(rng.choice(4, size=k, replace=False).tolist()))
            letters = rng.integers(1, 4, size=k)
            drop = rng.integers(0, 2, size=k)  # allow lighter strings too
            key = tuple((s, int(l)) for s, l, d in zip(sites, letters, drop) if not d)
            terms[key] = complex(rng.standard_normal() + 1j * rng.standard_normal())
        o = DualBasisOperator(n=4, terms=terms)
        sup = o.support() or (0,)
        mat = from_dual_basis(o, frame, sup)
        assert schatten_norm(mat, np.inf) <= (1 + lam) ** k * o.l1_norm() + 1e-9
    # conversely the l1 norm is at most 4^ell times the operator norm
    for ell in (1, 2, 3):
        dim = 2**ell
        a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
        o = to_dual_basis(a, tuple(range(ell)), frame)
        assert o.l1_norm() <= 4.0**ell * schatten_norm(a, np.inf) + 1e-9


def test_sequence_identity_is_annihilated():
    model, engine = make_engine(4, 120)
    seq = heisenberg_sequence(engine, np.eye(2, dtype=complex), (0,), 4)
    assert seq[0].identity_coefficient() == pytest.approx(1.0)
    for op in seq[1:]:
        assert op.num_terms() == 0


def test_sequence_support_containment_and_l1():
    from quasigibbs.lattice import graph_ball

    model, engine = make_engine(10, 121)
    seq = heisenberg_sequence(engine, PAULI_Z, (0,), 6)
    base_l1 = seq[0].l1_norm()
    for k, op in enumerate(seq):
        if k and op.num_terms():
            assert set(op.support()) <= set(graph_ball(model.graph, (0,), k))
        assert op.l1_norm() <= (STEP_L1_BOUND**k) * base_l1
        # identity coefficient bounded by the growth budget
        ell = 1
        assert abs(op.identity_coefficient()) <= np.exp(6.0 * (k + ell)) * 1.0 + 1e-9


def test_sequence_term_budget_guard():
    model, engine = make_engine(10, 122)
    with pytest.raises(TermBudgetError) as err:
        heisenberg_sequence(engine, PAULI_Z, (0,), 6, term_cap=4**4)
    assert err.value.k_reached >= 1


def test_expectation_series_identity_and_epsilon_zero():
    model, engine = make_engine(4, 123)
    res = expectation_series(np.eye(2, dtype=complex), (1,), engine, 0.4, 6)
    assert res.value == pytest.approx(1.0, abs=1e-12)
    assert all(abs(s - 1.0) <= 1e-12 for s in res.partial_sums)

    rho0 = product_state(engine.frame.reset_states)
    res0 = expectation_series(PAULI_Z, (2,), engine, 0.0, 3)
    want = np.trace(rho0 @ tensor_embed(PAULI_Z, (2,), 4)).real
    assert res0.value == pytest.approx(want, abs=1e-12)


def test_expectation_series_epsilon_range():
    model, engine = make_engine(3, 124)
    with pytest.raises(ContractViolationError):
        expectation_series(PAULI_Z, (0,), engine, 1.0, 3)


def test_expectation_series_matches_oracle():
    for seed in (125, 126):
        model, engine = make_engine(3, seed)
        for eps in (0.001, 0.002):
            mh = compose_epsilon_channel(
                model, epsilon_overrides={e: eps for e in model.graph.edges}
            )
            rho = dense_fixed_point_oracle(mh)
            want = np.trace(rho @ tensor_embed(PAULI_Z, (0,), 3)).real
            res = expectation_series(PAULI_Z, (0,), engine, eps, 10)
            assert abs(res.value - want) <= max(res.tail_bound, 1e-6)


def test_truncation_order_examples():
    # with tail = sum over k > k_max of (eps e^6)^k, delta = x^5/(1-x)
    # is hit exactly at k_max = 4, and delta = 1 already at k_max = 0
    x = 0.001 * np.exp(6.0)
    assert truncation_order(x**5 / (1 - x), 0.001, 1) == 4
    assert truncation_order(1.0, 0.001, 1) == 0
    with pytest.raises(ThresholdError):
        truncation_order(0.1, 0.0025, 1)
    assert EPSILON_THRESHOLD == pytest.approx(np.exp(-6.0))


def test_covariance_zero_at_epsilon_zero():
    model, engine = make_engine(6, 127)
    res = covariance_series(PAULI_Z, (0,), PAULI_Z, (3,), engine, 0.0, 3)
    assert abs(res.value) <= 1e-12
    assert abs(res.coefficients[0]) <= 1e-12


def test_covariance_rejects_overlapping_supports():
    model, engine = make_engine(4, 128)
    with pytest.raises(ContractViolationError):
        covariance_series(PAULI_Z, (0,), PAULI_Z, (0,), engine, 0.1, 2)


def test_covariance_first_order_at_distance():
    model, engine = make_engine(6, 129)
    res = covariance_series(PAULI_Z, (0,), PAULI_Z, (2,), engine, 0.001, 4)
    assert res.distance == 2
    assert res.first_nonzero_order is None or res.first_nonzero_order >= 2
    assert abs(res.value) <= res.covariance_bound
