"""Kraus-form channels: reset dissipators, two-qubit correlators, and the
interpolated composite channel with its adjoint.

The composite acts on a density matrix by applying each local term on its
own qubit block (permute, one gemm against a precomputed block
superoperator, permute back) and accumulating the convex combination. The
full 4^n x 4^n superoperator matrix is only ever materialized by the
steady-state oracle, never here.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .densemath import CZ, PAULI_X, PAULI_Y, PAULI_Z, hermitian_eigendecompose
from .errors import ContractViolationError, GraphError, RankDeficiencyError, ShapeError, SizeError
from .lattice import Edge, InteractionGraph, canonical_edge

COMPLETENESS_TOL = 1e-10


def make_rng(seed: int) -> np.random.Generator:
    """Seedable, portable 64-bit generator (PCG64); streams never shared."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def ginibre(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a Ginibre matrix.

    The R-diagonal phase correction removes the QR sign bias, so the
    output is genuinely Haar rather than QR-skewed.
    """
    q, r = np.linalg.qr(ginibre(dim, dim, rng))
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_kraus_ops(dim: int, rank: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Trace-preserving Kraus set of the given rank from a Haar isometry.

    Orthonormalizes the columns of a (dim*rank) x dim Ginibre matrix into
    an isometry V and slices out the environment components, so the
    completeness sum is the identity by construction.
    """
    if rank < 1:
        raise ContractViolationError(f"rank must be >= 1, got {rank}")
    v, _ = np.linalg.qr(ginibre(dim * rank, dim, rng))
    blocks = v.reshape(dim, rank, dim)
    return [np.ascontiguousarray(blocks[:, k, :]) for k in range(rank)]


@dataclass(frozen=True)
class KrausChannel:
    """A CPTP map as a weighted Kraus list with a declared qubit support."""

    support: tuple[int, ...]
    kraus_ops: tuple[np.ndarray, ...]
    weight: float = 1.0

    def __post_init__(self):
        dim = 2 ** len(self.support)
        for f in self.kraus_ops:
            if f.shape != (dim, dim):
                raise ShapeError(f"Kraus shape {f.shape} does not match support {self.support}")
        if self.weight < 0:
            raise ContractViolationError(f"negative channel weight {self.weight}")
        res = completeness_residual(self.kraus_ops)
        if res > COMPLETENESS_TOL:
            raise ContractViolationError(
                f"Kraus completeness sum deviates from identity by {res:.3e}"
            )

    @property
    def dim(self) -> int:
        return 2 ** len(self.support)

    def with_support(self, support: Sequence[int]) -> "KrausChannel":
        return replace(self, support=tuple(int(i) for i in support))

    def apply_local(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rho, dtype=complex)
        for f in self.kraus_ops:
            out += f @ rho @ f.conj().T
        return out

    def apply_local_adjoint(self, a: np.ndarray) -> np.ndarray:
        out = np.zeros_like(a, dtype=complex)
        for f in self.kraus_ops:
            out += f.conj().T @ a @ f
        return out


def completeness_residual(kraus_ops: Sequence[np.ndarray]) -> float:
    dim = kraus_ops[0].shape[1]
    s = sum(f.conj().T @ f for f in kraus_ops)
    return float(np.linalg.norm(s - np.eye(dim), ord=2))


def make_reset_dissipator(w: np.ndarray, site: int = 0) -> KrausChannel:
    """Single-qubit reset channel rho -> Tr(rho) * w.

    Kraus set {sqrt(w_a) |a><b|} in w's eigenbasis. w must be a full-rank
    density matrix; a rank-deficient target breaks ergodicity.
    """
    if w.shape != (2, 2):
        raise ShapeError(f"reset target must be 2x2, got {w.shape}")
    dec = hermitian_eigendecompose(w)
    if abs(float(np.sum(dec.eigenvalues)) - 1.0) > 1e-10:
        raise ContractViolationError("reset target must have unit trace")
    if dec.eigenvalues[-1] < 1e-12:
        raise RankDeficiencyError(
            f"reset target eigenvalue {dec.eigenvalues[-1]:.3e} is not full rank"
        )
    vecs = [dec.eigenvectors[:, 0], dec.eigenvectors[:, 1]]
    ops = []
    for a in range(2):
        for b in range(2):
            ops.append(np.sqrt(dec.eigenvalues[a]) * np.outer(vecs[a], vecs[b].conj()))
    return KrausChannel(support=(int(site),), kraus_ops=tuple(ops))


def make_correlator(
    kind: str,
    *,
    edge: tuple[int, int] = (0, 1),
    seed: int | None = None,
    k: int = 1,
    rank: int = 3,
) -> KrausChannel:
    """Two-qubit correlator channel of the given kind.

    kinds: ``cz`` (deterministic controlled-Z conjugation), ``haar_mixture``
    (uniform mixture of k Haar unitaries), ``random_kraus`` (random CPTP
    map of the given Kraus rank).
    """
    sup = canonical_edge(*edge)
    if kind == "cz":
        return KrausChannel(support=sup, kraus_ops=(CZ.copy(),))
    if seed is None:
        raise ContractViolationError(f"correlator kind {kind!r} needs a seed")
    rng = make_rng(seed)
    if kind == "haar_mixture":
        if k < 1:
            raise ContractViolationError(f"haar_mixture needs k >= 1, got {k}")
        ops = tuple(haar_unitary(4, rng) / np.sqrt(k) for _ in range(k))
        return KrausChannel(support=sup, kraus_ops=ops)
    if kind == "random_kraus":
        ops = tuple(random_kraus_ops(4, rank, rng))
        return KrausChannel(support=sup, kraus_ops=ops)
    raise ContractViolationError(
        f"unknown correlator kind {kind!r}; expected one of cz, haar_mixture, random_kraus"
    )


def random_reset_state(
    rng: np.random.Generator,
    lambda_range: tuple[float, float] = (0.1, 0.9),
    direction: str = "random",
) -> np.ndarray:
    """Random full-rank single-qubit state (1/2)(I + lam * n.sigma)."""
    lo, hi = lambda_range
    lam = float(rng.uniform(lo, hi))
    if direction == "random":
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
    else:
        v = {"x": (1.0, 0, 0), "y": (0, 1.0, 0), "z": (0, 0, 1.0)}[direction]
    return 0.5 * (np.eye(2) + lam * (v[0] * PAULI_X + v[1] * PAULI_Y + v[2] * PAULI_Z))


@dataclass(frozen=True)
class ChannelModel:
    """A graph, one reset-style dissipator per vertex, one correlator per
    edge, and the interpolation parameter epsilon."""

    graph: InteractionGraph
    dissipators: Mapping[int, KrausChannel]
    correlators: Mapping[Edge, KrausChannel]
    epsilon: float

    def __post_init__(self):
        if not (0.0 <= self.epsilon <= 1.0):
            raise ContractViolationError(f"epsilon {self.epsilon} outside [0, 1]")
        for i in range(self.graph.n):
            d = self.dissipators.get(i)
            if d is None or d.support != (i,):
                raise ContractViolationError(f"vertex {i} needs a dissipator with support ({i},)")
        for e in self.graph.edges:
            c = self.correlators.get(e)
            if c is None or c.support != e:
                raise ContractViolationError(f"edge {e} needs a correlator with support {e}")
        for i, q in self.graph.vertex_weights.items():
            if q <= 0.0:
                raise GraphError(f"vertex {i} has weight {q}; every vertex must carry q_i > 0")


def build_model(
    graph: InteractionGraph,
    reset_states: Sequence[np.ndarray],
    correlator_kind: str,
    epsilon: float,
    *,
    seed: int | None = None,
    k: int = 1,
    rank: int = 3,
) -> ChannelModel:
    """Assemble a model from per-vertex reset states and one correlator kind.

    Seeded correlator kinds draw an independent stream per edge so the
    model is reproducible edge by edge.
    """
    if len(reset_states) != graph.n:
        raise ShapeError(f"need {graph.n} reset states, got {len(reset_states)}")
    dissipators = {i: make_reset_dissipator(w, site=i) for i, w in enumerate(reset_states)}
    correlators = {}
    for j, e in enumerate(graph.edges):
        edge_seed = None if seed is None else (int(seed) * 100003 + j)
        correlators[e] = make_correlator(correlator_kind, edge=e, seed=edge_seed, k=k, rank=rank)
    return ChannelModel(graph=graph, dissipators=dissipators, correlators=correlators, epsilon=epsilon)


class _LocalTerm:
    """One local channel with precomputed axis plan and block superoperator."""

    __slots__ = ("sites", "weight", "block_mat", "perm", "inv_perm", "loc_dim")

    def __init__(self, n: int, channel: KrausChannel, weight: float):
        self.sites = channel.support
        self.weight = weight
        d = channel.dim
        self.loc_dim = d
        m = np.zeros((d * d, d * d), dtype=complex)
        for f in channel.kraus_ops:
            m += np.kron(f, f.conj())
        self.block_mat = m
        rest = [q for q in range(n) if q not in self.sites]
        # forward: gather [site rows, site cols, rest rows, rest cols]
        fwd = list(self.sites) + [n + q for q in self.sites] + rest + [n + q for q in rest]
        self.perm = fwd
        inv = [0] * (2 * n)
        for pos, ax in enumerate(fwd):
            inv[ax] = pos
        self.inv_perm = inv

    def apply(self, t: np.ndarray, n: int, adjoint: bool) -> np.ndarray:
        k = len(self.sites)
        x = t.reshape((2,) * (2 * n)).transpose(self.perm)
        x = np.ascontiguousarray(x).reshape(self.loc_dim * self.loc_dim, -1)
        mat = self.block_mat.conj().T if adjoint else self.block_mat
        y = mat @ x
        y = y.reshape((2,) * (2 * n)).transpose(self.inv_perm)
        return y.reshape(2**n, 2**n)


def _detect_reset_target(channel: KrausChannel, atol: float = 1e-12) -> np.ndarray | None:
    """Return w when the 1-qubit channel acts as rho -> Tr(rho) w, else None."""
    if len(channel.support) != 1:
        return None
    basis = np.zeros((2, 2), dtype=complex)
    images = {}
    for a in range(2):
        for b in range(2):
            basis[a, b] = 1.0
            images[(a, b)] = channel.apply_local(basis)
            basis[a, b] = 0.0
    w = images[(0, 0)]
    dev = max(
        float(np.max(np.abs(images[(1, 1)] - w))),
        float(np.max(np.abs(images[(0, 1)]))),
        float(np.max(np.abs(images[(1, 0)]))),
    )
    return w if dev <= atol else None


def _is_diagonal_kraus(channel: KrausChannel) -> bool:
    return all(np.count_nonzero(f - np.diag(np.diagonal(f))) == 0 for f in channel.kraus_ops)


class EpsilonChannel:
    """Callable handle for the interpolated composite channel.

    Immutable after construction; per-edge epsilon overrides are resolved
    here so probing never mutates the stored model.
    """

    def __init__(self, model: ChannelModel, epsilon_overrides: Mapping[Edge, float] | None = None):
        g = model.graph
        self.model = model
        self.n = g.n
        eps = {e: model.epsilon for e in g.edges}
        if epsilon_overrides:
            for e, v in epsilon_overrides.items():
                ce = canonical_edge(*e)
                if ce not in eps:
                    raise GraphError(f"override for non-edge {e}")
                if not (0.0 <= v <= 1.0):
                    raise ContractViolationError(f"override epsilon {v} outside [0, 1]")
                eps[ce] = float(v)
        self.edge_epsilons = eps
        vertex_w = {i: 0.0 for i in range(g.n)}
        for e in g.edges:
            p = g.edge_weights[e]
            for v in e:
                vertex_w[v] += 0.5 * p * (1.0 - eps[e])
        terms: list[_LocalTerm] = []
        # fast-path analysis: reset dissipators reduce to a partial trace and
        # a tensor insertion, diagonal correlators to one elementwise mask;
        # the generic block-superoperator terms keep the adjoint exact.
        self._resets: list[tuple[int, float, np.ndarray]] = []
        self._mask: np.ndarray | None = None
        self._generic_apply: list[_LocalTerm] = []
        for i in range(g.n):
            if vertex_w[i] > 0.0:
                term = _LocalTerm(g.n, model.dissipators[i], vertex_w[i])
                terms.append(term)
                w = _detect_reset_target(model.dissipators[i])
                if w is not None:
                    self._resets.append((i, vertex_w[i], w))
                else:
                    self._generic_apply.append(term)
        idx = np.arange(2**g.n)
        for e in g.edges:
            we = g.edge_weights[e] * eps[e]
            if we > 0.0:
                term = _LocalTerm(g.n, model.correlators[e], we)
                terms.append(term)
                ch = model.correlators[e]
                if _is_diagonal_kraus(ch):
                    i, j = e
                    loc = 2 * ((idx >> (g.n - 1 - i)) & 1) + ((idx >> (g.n - 1 - j)) & 1)
                    if self._mask is None:
                        self._mask = np.zeros((2**g.n, 2**g.n), dtype=complex)
                    for f in ch.kraus_ops:
                        d_full = np.diagonal(f)[loc]
                        self._mask += we * np.outer(d_full, d_full.conj())
                else:
                    self._generic_apply.append(term)
        self._terms = terms

    def apply(self, rho: np.ndarray) -> np.ndarray:
        dim = 2**self.n
        if rho.shape != (dim, dim):
            raise ShapeError(f"operator shape {rho.shape} does not match n={self.n}")
        out = np.zeros((dim, dim), dtype=complex)
        if self._mask is not None:
            np.multiply(rho, self._mask, out=out)
        for i, weight, w in self._resets:
            lead, rest = 2**i, 2 ** (self.n - 1 - i)
            r6 = rho.reshape(lead, 2, rest, lead, 2, rest)
            reduced = r6[:, 0, :, :, 0, :] + r6[:, 1, :, :, 1, :]
            out6 = out.reshape(lead, 2, rest, lead, 2, rest)
            for a in range(2):
                for b in range(2):
                    wab = weight * w[a, b]
                    if wab != 0.0:
                        out6[:, a, :, :, b, :] += wab * reduced
        for t in self._generic_apply:
            out += t.weight * t.apply(rho, self.n, adjoint=False)
        return out

    def apply_adjoint(self, a: np.ndarray) -> np.ndarray:
        dim = 2**self.n
        if a.shape != (dim, dim):
            raise ShapeError(f"operator shape {a.shape} does not match n={self.n}")
        out = np.zeros((dim, dim), dtype=complex)
        for t in self._terms:
            out += t.weight * t.apply(a, self.n, adjoint=True)
        return out


def compose_epsilon_channel(
    model: ChannelModel, epsilon_overrides: Mapping[Edge, float] | None = None
) -> EpsilonChannel:
    return EpsilonChannel(model, epsilon_overrides)


@dataclass(frozen=True)
class CptpReport:
    trace_preserving: bool
    cp_min_eig: float
    completeness_residual: float


def validate_cptp(channel: KrausChannel | Sequence[np.ndarray], tol: float = COMPLETENESS_TOL) -> CptpReport:
    """Trace preservation via the completeness sum, complete positivity via
    the minimum eigenvalue of the Choi matrix."""
    ops = channel.kraus_ops if isinstance(channel, KrausChannel) else tuple(channel)
    res = completeness_residual(ops)
    dim = ops[0].shape[0]
    choi = np.zeros((dim * dim, dim * dim), dtype=complex)
    for f in ops:
        v = f.T.reshape(-1)  # v[(a,c)] = f[c,a]
        choi += np.outer(v, v.conj())
    min_eig = float(np.linalg.eigvalsh(choi)[0])
    return CptpReport(
        trace_preserving=bool(res <= tol),
        cp_min_eig=min_eig,
        completeness_residual=res,
    )


@dataclass(frozen=True)
class ErgodicityReport:
    ergodic: bool
    span_dims: tuple[int, ...]
    reached_full_at: int | None


def local_ergodicity_check(channel: KrausChannel, k_max: int) -> ErgodicityReport:
    """Span dimension of degree <= k Kraus products, k = 1..k_max.

    The channel is ergodic when the products span the whole local operator
    space (dimension 4^|support|).
    """
    if len(channel.support) > 2:
        raise SizeError("ergodicity check supports at most 2-qubit channels")
    dim = channel.dim
    full = dim * dim
    rank_tol = 1e-10

    def orthobasis(vectors: list[np.ndarray], base: list[np.ndarray]) -> list[np.ndarray]:
        out = list(base)
        for v in vectors:
            w = v.astype(complex).copy()
            for b in out:
                w -= np.vdot(b, w) * b
            nrm = np.linalg.norm(w)
            if nrm > rank_tol:
                out.append(w / nrm)
        return out

    degree = [f.reshape(-1) for f in channel.kraus_ops]
    degree_basis = orthobasis(degree, [])
    cumulative = list(degree_basis)
    span_dims = [len(cumulative)]
    reached = 1 if len(cumulative) == full else None
    for k in range(2, k_max + 1):
        nxt = []
        for f in channel.kraus_ops:
            for b in degree_basis:
                nxt.append((f @ b.reshape(dim, dim)).reshape(-1))
        degree_basis = orthobasis(nxt, [])
        cumulative = orthobasis(nxt, cumulative)
        span_dims.append(len(cumulative))
        if reached is None and len(cumulative) == full:
            reached = k
    return ErgodicityReport(
        ergodic=bool(span_dims[-1] == full),
        span_dims=tuple(span_dims),
        reached_full_at=reached,
    )
