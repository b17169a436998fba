"""Heisenberg-picture perturbation engine for steady-state expectations.

Everything runs in per-qubit local frames chosen so each reset target is
diagonal with its larger eigenvalue first, W_i = (1/2)(I + lambda_i Z).
Two product operator bases then do the work:

* the primal basis {W_i, X/2, Y/2, Z/2}, which diagonalizes the reset
  channels and is trace-normalized;
* its biorthogonal dual {I, X, Y, Z - lambda_i I}, which diagonalizes the
  adjoint reset channels.

Observables are expanded in the dual basis as sparse coefficient maps. One
transition step sends an expansion through the inverted dissipative
resolvent (a diagonal 1/q_alpha rescale) and the adjoint interaction part
(precomputed 16x16 per-edge kernels). Iterating the step yields the
operator sequence whose identity coefficients are the series coefficients
of the steady-state expectation value in the interaction strength.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .channel import ChannelModel
from .densemath import (
    PAULI_I,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    hermitian_eigendecompose,
    schatten_norm,
    tensor_embed,
)
from .errors import (
    ContractViolationError,
    RankDeficiencyError,
    ShapeError,
    TermBudgetError,
    ThresholdError,
    UnsupportedDissipatorError,
)
from .lattice import Edge, InteractionGraph, canonical_edge, graph_ball, graph_distance

# Per-order growth budget of the expansion. One transition step multiplies
# the dual-basis l1 norm by at most 130, and converting between the l1 and
# operator norms costs (1+lambda) <= 2 per involved site, which together
# stay below e^6 per order. Below EPSILON_THRESHOLD the series therefore
# has a guaranteed geometric tail.
SERIES_GROWTH_BUDGET = math.exp(6.0)
EPSILON_THRESHOLD = math.exp(-6.0)

DEFAULT_PRUNE = 1e-15
DEFAULT_TERM_CAP = 4**12

TermKey = tuple[tuple[int, int], ...]  # ((site, letter), ...) sorted by site


def _primal_elems(lam: float) -> list[np.ndarray]:
    return [
        0.5 * (PAULI_I + lam * PAULI_Z),
        0.5 * PAULI_X,
        0.5 * PAULI_Y,
        0.5 * PAULI_Z,
    ]


def _dual_elems(lam: float) -> list[np.ndarray]:
    return [PAULI_I, PAULI_X, PAULI_Y, PAULI_Z - lam * PAULI_I]


@dataclass(frozen=True)
class LocalFrame:
    """Per-qubit rotations that diagonalize the reset targets.

    unitaries[i] maps qubit i's basis so the reset target becomes
    diag((1+lambda)/2, (1-lambda)/2); reset_states keeps the original-basis
    targets for reference.
    """

    unitaries: tuple[np.ndarray, ...]
    lambdas: tuple[float, ...]
    reset_states: tuple[np.ndarray, ...]

    @property
    def lambda_max(self) -> float:
        return max(self.lambdas)

    @property
    def n(self) -> int:
        return len(self.lambdas)


def _fix_row_phase(v: np.ndarray) -> np.ndarray:
    j = int(np.argmax(np.abs(v)))
    ph = v[j] / abs(v[j])
    return v * ph.conjugate()


def derive_frames(model: ChannelModel, atol: float = 1e-10) -> LocalFrame:
    """Detect the reset structure of every dissipator and diagonalize it.

    Raises when a dissipator is not a reset channel (the engine's
    assumptions do not cover anything else) or its target is rank
    deficient.
    """
    unitaries = []
    lambdas = []
    states = []
    basis = np.zeros((2, 2), dtype=complex)
    for i in range(model.graph.n):
        ch = model.dissipators[i]
        images = {}
        for a in range(2):
            for b in range(2):
                basis[:] = 0.0
                basis[a, b] = 1.0
                images[(a, b)] = ch.apply_local(basis)
        w = images[(0, 0)]
        dev = max(
            float(np.max(np.abs(images[(1, 1)] - w))),
            float(np.max(np.abs(images[(0, 1)]))),
            float(np.max(np.abs(images[(1, 0)]))),
        )
        if dev > atol:
            raise UnsupportedDissipatorError(
                f"dissipator at vertex {i} is not a reset channel (deviation {dev:.3e})"
            )
        dec = hermitian_eigendecompose(w)
        w_max, w_min = float(dec.eigenvalues[0]), float(dec.eigenvalues[1])
        if w_min < 1e-12:
            raise RankDeficiencyError(f"reset target at vertex {i} is rank deficient")
        lam = w_max - w_min
        if lam >= 1.0:
            raise RankDeficiencyError(f"reset target at vertex {i} has lambda >= 1")
        u = np.vstack(
            [
                _fix_row_phase(dec.eigenvectors[:, 0].conj()),
                _fix_row_phase(dec.eigenvectors[:, 1].conj()),
            ]
        )
        unitaries.append(u)
        lambdas.append(lam)
        states.append(np.array(w))
    return LocalFrame(
        unitaries=tuple(unitaries), lambdas=tuple(lambdas), reset_states=tuple(states)
    )


@dataclass(frozen=True)
class DualBasisOperator:
    """Sparse expansion of an operator in the dual product basis.

    Terms map ((site, letter), ...) keys, sorted by site with letters in
    1..3, to complex coefficients; the empty key is the identity string.
    Coefficients below the prune threshold are never stored.
    """

    n: int
    terms: Mapping[TermKey, complex]

    def l1_norm(self) -> float:
        return float(sum(abs(c) for c in self.terms.values()))

    def support(self) -> tuple[int, ...]:
        out: set[int] = set()
        for key in self.terms:
            for site, _ in key:
                out.add(site)
        return tuple(sorted(out))

    def identity_coefficient(self) -> complex:
        return complex(self.terms.get((), 0.0))

    def num_terms(self) -> int:
        return len(self.terms)

    @staticmethod
    def zero(n: int) -> "DualBasisOperator":
        return DualBasisOperator(n=n, terms={})


def _block_of(o: DualBasisOperator, sites: Sequence[int]) -> np.ndarray:
    pos = {s: p for p, s in enumerate(sites)}
    y = np.zeros((4,) * len(sites), dtype=complex)
    for key, c in o.terms.items():
        idx = [0] * len(sites)
        for site, letter in key:
            idx[pos[site]] = letter
        y[tuple(idx)] = c
    return y


def _sparsify(n: int, sites: Sequence[int], y: np.ndarray, prune: float) -> DualBasisOperator:
    m = len(sites)
    flat = y.reshape(-1)
    idxs = np.flatnonzero(np.abs(flat) > prune)
    if idxs.size == 0:
        return DualBasisOperator(n=n, terms={})
    shifts = np.array([2 * (m - 1 - pos) for pos in range(m)], dtype=np.int64)
    digit_rows = ((idxs[:, None] >> shifts) & 3).tolist()
    values = flat[idxs].tolist()
    # shared (site, letter) pair objects keep key construction cheap
    pairs = [(None, (s, 1), (s, 2), (s, 3)) for s in sites]
    terms: dict[TermKey, complex] = {}
    for row, v in zip(digit_rows, values):
        terms[tuple(pairs[p][d] for p, d in enumerate(row) if d)] = v
    return DualBasisOperator(n=n, terms=terms)


def _embed_block(y: np.ndarray, old: Sequence[int], new: Sequence[int]) -> np.ndarray:
    if tuple(old) == tuple(new):
        return y
    old_set = set(old)
    out = np.zeros((4,) * len(new), dtype=complex)
    out[tuple(slice(None) if s in old_set else 0 for s in new)] = y
    return out


def _shrink_block(sites: Sequence[int], y: np.ndarray) -> tuple[tuple[int, ...], np.ndarray]:
    """Drop sites on which every stored string carries the identity letter."""
    m = len(sites)
    keep = []
    mags = np.abs(y)
    for pos in range(m):
        other = tuple(ax for ax in range(m) if ax != pos)
        col = mags.sum(axis=other) if other else mags
        if np.any(col[1:] > 0.0):
            keep.append(pos)
    if len(keep) == m:
        return tuple(sites), y
    idx = tuple(slice(None) if pos in set(keep) else 0 for pos in range(m))
    return tuple(sites[pos] for pos in keep), y[idx]


def _rotate_into_frame(a: np.ndarray, support: Sequence[int], frame: LocalFrame) -> np.ndarray:
    rot = np.array([[1.0]], dtype=complex)
    for s in support:
        rot = np.kron(rot, frame.unitaries[s])
    return rot @ a @ rot.conj().T


def to_dual_basis(
    a: np.ndarray, support: Sequence[int], frame: LocalFrame, prune: float = DEFAULT_PRUNE
) -> DualBasisOperator:
    """Expand an operator given on its support in the dual product basis.

    Coefficients are Hilbert-Schmidt overlaps against the primal basis,
    extracted with the per-qubit tensor contraction.
    """
    sup = tuple(sorted(set(int(s) for s in support)))
    m = len(sup)
    if a.shape != (2**m, 2**m):
        raise ShapeError(f"operator shape {a.shape} does not match support {sup}")
    if m > 12:
        raise ShapeError("dense dual-basis extraction supports at most 12 qubits")
    ar = _rotate_into_frame(np.asarray(a, dtype=complex), sup, frame)
    t = ar.reshape((2,) * (2 * m))
    perm = []
    for q in range(m):
        perm += [q, m + q]
    t = t.transpose(perm).reshape((4,) * m) if m else ar.reshape(())
    for pos, s in enumerate(sup):
        lam = frame.lambdas[s]
        kern = np.zeros((4, 4), dtype=complex)
        for qq in range(4):
            elem = _primal_elems(lam)[qq]
            for w in range(2):
                for z in range(2):
                    kern[qq, 2 * w + z] = elem[z, w]
        t = np.moveaxis(np.tensordot(kern, t, axes=([1], [pos])), 0, pos)
    return _sparsify(frame.n, sup, t, prune)


def from_dual_basis(
    o: DualBasisOperator, frame: LocalFrame, support: Sequence[int] | None = None
) -> np.ndarray:
    """Materialize the expansion as a dense matrix on the given support."""
    sup = tuple(sorted(set(int(s) for s in support))) if support is not None else o.support()
    missing = set(o.support()) - set(sup)
    if missing:
        raise ShapeError(f"operator touches sites {sorted(missing)} outside {sup}")
    m = len(sup)
    if m == 0:
        return np.array([[o.identity_coefficient()]], dtype=complex)
    t = _block_of(o, sup)
    for pos, s in enumerate(sup):
        lam = frame.lambdas[s]
        kern = np.zeros((4, 4), dtype=complex)
        for qq in range(4):
            elem = _dual_elems(lam)[qq]
            for w in range(2):
                for z in range(2):
                    kern[2 * w + z, qq] = elem[w, z]
        t = np.moveaxis(np.tensordot(kern, t, axes=([1], [pos])), 0, pos)
    x = t.reshape((2,) * (2 * m))
    perm = [2 * q for q in range(m)] + [2 * q + 1 for q in range(m)]
    mat = x.transpose(perm).reshape(2**m, 2**m)
    rot = np.array([[1.0]], dtype=complex)
    for s in sup:
        rot = np.kron(rot, frame.unitaries[s])
    return rot.conj().T @ mat @ rot


def apply_adjoint_dissipative_part(o: DualBasisOperator, g: InteractionGraph) -> DualBasisOperator:
    """Adjoint of the dissipative part: each string is scaled by 1 - q_alpha."""
    q = g.vertex_weights
    terms = {}
    for key, c in o.terms.items():
        scale = 1.0 - sum(q[site] for site, _ in key)
        v = c * scale
        if abs(v) > DEFAULT_PRUNE:
            terms[key] = v
    return DualBasisOperator(n=o.n, terms=terms)


class TransitionEngine:
    """Precomputed machinery for iterating the transition superoperator.

    Holds the local frames, vertex weights, and one 16x16 adjoint kernel
    per edge (the correlator conjugated into the frames and expressed from
    the dual basis to the dual basis). These kernels are the hot path; a
    transition step is a diagonal rescale plus one small gemm per edge that
    can reach the operator's support.
    """

    def __init__(self, model: ChannelModel, prune: float = DEFAULT_PRUNE):
        self.model = model
        self.graph = model.graph
        self.frame = derive_frames(model)
        self.prune = float(prune)
        self.q = np.array([model.graph.vertex_weights[i] for i in range(model.graph.n)])
        self.kernels: dict[Edge, np.ndarray] = {}
        for e in model.graph.edges:
            self.kernels[e] = self._build_edge_kernel(e)

    def _build_edge_kernel(self, e: Edge) -> np.ndarray:
        i, j = e
        rot = np.kron(self.frame.unitaries[i], self.frame.unitaries[j])
        kraus = [rot @ f @ rot.conj().T for f in self.model.correlators[e].kraus_ops]
        dual_i = _dual_elems(self.frame.lambdas[i])
        dual_j = _dual_elems(self.frame.lambdas[j])
        primal_i = _primal_elems(self.frame.lambdas[i])
        primal_j = _primal_elems(self.frame.lambdas[j])
        mat = np.zeros((16, 16), dtype=float)
        for a1 in range(4):
            for a2 in range(4):
                d = np.kron(dual_i[a1], dual_j[a2])
                y = np.zeros((4, 4), dtype=complex)
                for f in kraus:
                    y += f.conj().T @ d @ f
                for b1 in range(4):
                    for b2 in range(4):
                        c = np.trace(np.kron(primal_i[b1], primal_j[b2]) @ y)
                        if abs(c.imag) > 1e-10:
                            raise ContractViolationError(
                                f"edge {e} kernel has imaginary coefficient {c.imag:.3e}"
                            )
                        mat[4 * b1 + b2, 4 * a1 + a2] = c.real
        # Unitality of the adjoint makes the identity column exact; pin it
        # so edges outside a string's support act as the exact identity.
        if np.max(np.abs(mat[:, 0] - np.eye(16)[:, 0])) > 1e-9:
            raise ContractViolationError(f"edge {e} adjoint kernel is not unital")
        mat[:, 0] = 0.0
        mat[0, 0] = 1.0
        return mat

    def _qvec(self, sites: Sequence[int]) -> np.ndarray:
        m = len(sites)
        qv = np.zeros((4,) * m)
        ind = np.array([0.0, 1.0, 1.0, 1.0])
        for pos, s in enumerate(sites):
            shape = [1] * m
            shape[pos] = 4
            qv = qv + self.q[s] * ind.reshape(shape)
        return qv

    def _apply_edge_kernel(self, t: np.ndarray, e: Edge, sites: Sequence[int]) -> np.ndarray:
        pos_i = sites.index(e[0])
        pos_j = sites.index(e[1])
        x = np.moveaxis(t, (pos_i, pos_j), (0, 1))
        shape = x.shape
        x = (self.kernels[e] @ x.reshape(16, -1)).reshape(shape)
        return np.moveaxis(x, (0, 1), (pos_i, pos_j))

    def step_block(
        self, sites: Sequence[int], y: np.ndarray
    ) -> tuple[tuple[int, ...], np.ndarray]:
        """One transition step on a dense coefficient block.

        The identity string maps to zero; every other string is rescaled by
        1/q_alpha, then pushed through the interaction adjoint. Edges whose
        endpoints both lie inside the grown block are applied via their
        kernels; everything else contributes the exact diagonal remainder.
        """
        sites, y = _shrink_block(tuple(sites), y)
        if not sites:
            return (), np.zeros((), dtype=complex)
        new_sites = graph_ball(self.graph, sites, 1)
        y = _embed_block(y, sites, new_sites)
        qv = self._qvec(new_sites)
        ys = np.divide(y, qv, out=np.zeros_like(y), where=qv > 0)
        inside = [e for e in self.graph.edges if e[0] in set(new_sites) and e[1] in set(new_sites)]
        p_in = sum(self.graph.edge_weights[e] for e in inside)
        out = (qv - p_in) * ys
        for e in inside:
            out += self.graph.edge_weights[e] * self._apply_edge_kernel(ys, e, new_sites)
        out[np.abs(out) < self.prune] = 0.0
        return _shrink_block(new_sites, out)

    def apply_transition(self, o: DualBasisOperator) -> DualBasisOperator:
        sites = o.support()
        if not o.terms or (len(o.terms) == 1 and () in o.terms):
            return DualBasisOperator.zero(o.n)
        new_sites, y = self.step_block(sites, _block_of(o, sites))
        return _sparsify(o.n, new_sites, y, self.prune)

    def apply_correlator_adjoint(self, o: DualBasisOperator, edge: tuple[int, int]) -> DualBasisOperator:
        """Adjoint of a single correlator on an expansion (no rescale)."""
        e = canonical_edge(*edge)
        sites = tuple(sorted(set(o.support()) | set(e)))
        y = self._apply_edge_kernel(_block_of(o, sites), e, sites)
        return _sparsify(o.n, sites, y, self.prune)


def heisenberg_sequence(
    engine: TransitionEngine,
    a: np.ndarray,
    support: Sequence[int],
    k_max: int,
    term_cap: int = DEFAULT_TERM_CAP,
) -> list[DualBasisOperator]:
    """Iterates the transition step: element k is the order-k operator.

    The identity coefficient of element k equals the k-th series
    coefficient of the steady-state expectation of ``a``. Raises a term
    budget error, reporting the last completed order, when the coefficient
    block would outgrow ``term_cap`` entries.
    """
    if k_max < 0:
        raise ContractViolationError(f"k_max must be nonnegative, got {k_max}")
    a0 = to_dual_basis(a, support, engine.frame, prune=engine.prune)
    seq = [a0]
    sites: tuple[int, ...] = a0.support()
    block = _block_of(a0, sites)
    for k in range(1, k_max + 1):
        grown = graph_ball(engine.graph, sites, 1) if sites else ()
        if 4 ** len(grown) > term_cap:
            raise TermBudgetError(
                f"order {k} needs a block of 4^{len(grown)} entries, over the cap {term_cap}",
                k_reached=k - 1,
            )
        sites, block = engine.step_block(sites, block)
        seq.append(_sparsify(engine.graph.n, sites, block, engine.prune))
    return seq


@dataclass(frozen=True)
class SeriesResult:
    """A truncated series value with its partial sums and tail bound."""

    value: float
    partial_sums: list[float]
    k_used: int
    tail_bound: float


@dataclass(frozen=True)
class CovarianceResult(SeriesResult):
    first_nonzero_order: int | None
    covariance_bound: float
    distance: float
    coefficients: list[float]


def _geometric_tail(epsilon: float, k_max: int) -> float:
    x = epsilon * SERIES_GROWTH_BUDGET
    if x >= 1.0:
        return math.inf
    return x ** (k_max + 1) / (1.0 - x)


def expectation_series(
    a: np.ndarray,
    support: Sequence[int],
    engine: TransitionEngine,
    epsilon: float,
    k_max: int,
    term_cap: int = DEFAULT_TERM_CAP,
) -> SeriesResult:
    """Steady-state expectation of ``a`` as a truncated power series.

    The tail bound covers all dropped orders with the growth budget; it is
    flagged infinite when epsilon * e^6 >= 1.
    """
    if not (0.0 <= epsilon < 1.0):
        raise ContractViolationError(f"epsilon {epsilon} outside [0, 1)")
    seq = heisenberg_sequence(engine, a, support, k_max, term_cap=term_cap)
    partial_sums = []
    total = 0.0
    for k, op in enumerate(seq):
        total += (epsilon**k) * op.identity_coefficient().real
        partial_sums.append(total)
    ell = len(tuple(support))
    tail = _geometric_tail(epsilon, k_max) * math.exp(6.0 * ell) * schatten_norm(a, np.inf)
    return SeriesResult(value=total, partial_sums=partial_sums, k_used=k_max, tail_bound=tail)


def truncation_order(delta: float, epsilon: float, ell: int) -> int:
    """Smallest truncation order whose geometric tail is at most delta.

    Only defined below the convergence threshold e^-6. ``ell`` is the
    observable's support size; with the returned order, the truncated
    series carries an additive error of at most delta * e^(6 ell) times
    the observable norm.
    """
    if delta <= 0.0:
        raise ContractViolationError(f"delta must be positive, got {delta}")
    if ell < 0:
        raise ContractViolationError(f"ell must be nonnegative, got {ell}")
    if epsilon >= EPSILON_THRESHOLD:
        raise ThresholdError(
            f"epsilon {epsilon} is at or above the threshold e^-6 ~ {EPSILON_THRESHOLD:.7f}"
        )
    if epsilon < 0.0:
        raise ContractViolationError(f"epsilon must be nonnegative, got {epsilon}")
    k = 0
    while _geometric_tail(epsilon, k) > delta:
        k += 1
        if k > 100_000:
            raise ContractViolationError("truncation order search did not terminate")
    return k


def covariance_series(
    a: np.ndarray,
    a_support: Sequence[int],
    b: np.ndarray,
    b_support: Sequence[int],
    engine: TransitionEngine,
    epsilon: float,
    k_max: int,
    *,
    nonzero_tol: float = 1e-10,
    term_cap: int = DEFAULT_TERM_CAP,
) -> CovarianceResult:
    """Steady-state covariance <AB> - <A><B> as a truncated power series.

    Requires disjoint supports so the product AB is the literal product of
    the commuting embedded operators. The order-k coefficient combines the
    product sequence with the Cauchy convolution of the two factor
    sequences; the reported bound is the closed-form decay bound in the
    graph distance between the supports.
    """
    if not (0.0 <= epsilon < 1.0):
        raise ContractViolationError(f"epsilon {epsilon} outside [0, 1)")
    sa = tuple(sorted(set(int(s) for s in a_support)))
    sb = tuple(sorted(set(int(s) for s in b_support)))
    if set(sa) & set(sb):
        raise ContractViolationError("covariance supports must be disjoint")
    union = tuple(sorted(sa + sb))
    pos_a = [union.index(s) for s in sa]
    pos_b = [union.index(s) for s in sb]
    m = len(union)
    ab = tensor_embed(a, pos_a, m) @ tensor_embed(b, pos_b, m)

    seq_a = heisenberg_sequence(engine, a, sa, k_max, term_cap=term_cap)
    seq_b = heisenberg_sequence(engine, b, sb, k_max, term_cap=term_cap)
    seq_ab = heisenberg_sequence(engine, ab, union, k_max, term_cap=term_cap)
    ca = [op.identity_coefficient().real for op in seq_a]
    cb = [op.identity_coefficient().real for op in seq_b]
    cab = [op.identity_coefficient().real for op in seq_ab]

    coeffs = []
    for k in range(k_max + 1):
        conv = sum(ca[j] * cb[k - j] for j in range(k + 1))
        coeffs.append(cab[k] - conv)

    partial_sums = []
    total = 0.0
    first_nonzero = None
    for k, ck in enumerate(coeffs):
        if first_nonzero is None and abs(ck) > nonzero_tol:
            first_nonzero = k
        total += (epsilon**k) * ck
        partial_sums.append(total)

    d = graph_distance(engine.graph, sa, sb)
    ell = len(sa) + len(sb)
    norms = schatten_norm(a, np.inf) * schatten_norm(b, np.inf)
    x = epsilon * SERIES_GROWTH_BUDGET
    if x >= 1.0:
        bound = math.inf
        tail = math.inf
    else:
        c = (d + 2.0) / (1.0 - x) ** 2
        bound = c * math.exp(6.0 * ell) * norms * x**d
        m0 = k_max + 1
        tail = math.exp(6.0 * ell) * norms * (x**m0) * ((m0 + 2) - (m0 + 1) * x) / (1.0 - x) ** 2
    return CovarianceResult(
        value=total,
        partial_sums=partial_sums,
        k_used=k_max,
        tail_bound=tail,
        first_nonzero_order=first_nonzero,
        covariance_bound=bound,
        distance=d,
        coefficients=coeffs,
    )
