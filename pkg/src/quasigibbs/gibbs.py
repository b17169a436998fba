"""Gibbs-Hamiltonian extraction and locality analysis.

The Hamiltonian of a full-rank steady state is -log(rho). Its Pauli
coefficients are computed with a tensor-structured transform that contracts
one qubit at a time (O(n 4^n) scalar work instead of 4^n independent
traces), grouped by support diameter on the ring, and profiled as
normalized sector norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .channel import ChannelModel, compose_epsilon_channel
from .densemath import PAULIS, matrix_log_full_rank, schatten_norm
from .errors import (
    ContractViolationError,
    InsufficientDataError,
    NormalizerDegenerateError,
    ShapeError,
    SizeError,
)
from .lattice import SupportSet, canonical_edge
from .steady import dense_fixed_point_oracle

PAULI_TRANSFORM_MAX_QUBITS = 10

# Pair kernels for the per-qubit contraction. Operators are reshaped so each
# qubit contributes a single base-4 axis holding its (row, col) bit pair
# p = 2*row + col; the forward kernel contracts that pair against a Pauli
# trace, the backward kernel expands a coefficient back into the pair.
_K_FWD = np.zeros((4, 4), dtype=complex)
_K_BWD = np.zeros((4, 4), dtype=complex)
for _a in range(4):
    for _w in range(2):
        for _z in range(2):
            _K_FWD[_a, 2 * _w + _z] = PAULIS[_a][_z, _w]
            _K_BWD[2 * _w + _z, _a] = PAULIS[_a][_w, _z]


def _interleave(mat: np.ndarray, n: int) -> np.ndarray:
    """(2^n, 2^n) matrix -> (4,)*n tensor with one (row, col) pair per qubit."""
    t = mat.reshape((2,) * (2 * n))
    perm = []
    for q in range(n):
        perm += [q, n + q]
    return t.transpose(perm).reshape((4,) * n)


def _deinterleave(t: np.ndarray, n: int) -> np.ndarray:
    x = t.reshape((2,) * (2 * n))
    perm = [2 * q for q in range(n)] + [2 * q + 1 for q in range(n)]
    return x.transpose(perm).reshape(2**n, 2**n)


def _mode_apply(t: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    out = np.tensordot(kernel, t, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True)
class PauliExpansion:
    """Real coefficients of a Hermitian operator over all 4^n Pauli strings.

    Stored as a flat array indexed by the base-4 string with qubit 0 as the
    most significant digit (letters 0=I, 1=X, 2=Y, 3=Z).
    """

    n: int
    coeffs: np.ndarray

    def coeff(self, string: tuple[int, ...]) -> float:
        idx = 0
        for a in string:
            idx = idx * 4 + int(a)
        return float(self.coeffs[idx])

    def string_of(self, index: int) -> tuple[int, ...]:
        return tuple((index >> (2 * (self.n - 1 - q))) & 3 for q in range(self.n))


def pauli_transform(h: np.ndarray, imag_tol: float = 1e-10) -> PauliExpansion:
    """Expansion coefficients c_alpha = Tr(P_alpha h) / 2^n for all strings."""
    n = int(round(math.log2(h.shape[0])))
    if h.shape != (2**n, 2**n):
        raise ShapeError(f"operator shape {h.shape} is not square power-of-two")
    if n > PAULI_TRANSFORM_MAX_QUBITS:
        raise SizeError(f"pauli transform supports n <= {PAULI_TRANSFORM_MAX_QUBITS}")
    t = _interleave(np.asarray(h, dtype=complex), n)
    for q in range(n):
        t = _mode_apply(t, _K_FWD, q)
    t = t.reshape(-1) / (2**n)
    resid = float(np.max(np.abs(t.imag))) if t.size else 0.0
    if resid > imag_tol:
        raise ContractViolationError(
            f"imaginary residue {resid:.3e} in Pauli coefficients; input not Hermitian?"
        )
    return PauliExpansion(n=n, coeffs=np.ascontiguousarray(t.real))


def inverse_pauli_transform(exp: PauliExpansion) -> np.ndarray:
    """Materialize sum_alpha c_alpha P_alpha as a dense matrix."""
    n = exp.n
    t = exp.coeffs.astype(complex).reshape((4,) * n)
    for q in range(n):
        t = _mode_apply(t, _K_BWD, q)
    return _deinterleave(t, n)


def naive_pauli_coefficient(h: np.ndarray, string: tuple[int, ...]) -> float:
    """Brute-force Tr(P_alpha h) / 2^n; the independent check for the fast path."""
    p = np.array([[1.0]], dtype=complex)
    for a in string:
        p = np.kron(p, PAULIS[a])
    return float(np.real(np.trace(p @ h) / h.shape[0]))


def gibbs_hamiltonian(rho: np.ndarray, floor: float = 1e-14) -> np.ndarray:
    """-log(rho) for a full-rank density matrix."""
    return -matrix_log_full_rank(rho, floor=floor)


def ring_diameters(n: int) -> np.ndarray:
    """Support diameter of every base-4 string on the n-ring, as int8.

    The diameter is n minus the longest cyclic run of identity letters;
    the all-identity string gets 0.
    """
    count = 4**n
    idx = np.arange(count, dtype=np.int64)
    zero = np.empty((count, n), dtype=bool)
    for q in range(n):
        zero[:, q] = ((idx >> (2 * (n - 1 - q))) & 3) == 0
    doubled = np.concatenate([zero, zero], axis=1)
    run = np.zeros(count, dtype=np.int16)
    best = np.zeros(count, dtype=np.int16)
    for j in range(2 * n):
        run = (run + 1) * doubled[:, j]
        np.maximum(best, run, out=best)
    np.minimum(best, n, out=best)
    return (n - best).astype(np.int8)


@dataclass(frozen=True)
class DiameterProfile:
    """Normalized operator norms of the Hamiltonian's diameter sectors.

    norms[k] is the operator norm of the sum of all Pauli terms whose
    support diameter is exactly k, divided by the k=1 sector norm.
    """

    epsilon: float
    norms: Mapping[int, float]
    normalizer: float


def diameter_profile(
    exp: PauliExpansion,
    ring_n: int,
    k_cap: int | None = None,
    epsilon: float = float("nan"),
) -> DiameterProfile:
    """Group coefficients by ring diameter and take normalized sector norms.

    Only defined on the ring. k_cap defaults to ring_n - 3; beyond that the
    finite system size contaminates the sectors.
    """
    if exp.n != ring_n:
        raise ShapeError(f"expansion on {exp.n} qubits does not match ring_n={ring_n}")
    if k_cap is None:
        k_cap = ring_n - 3
    if not (1 <= k_cap <= ring_n - 3):
        raise ContractViolationError(f"k_cap must lie in [1, ring_n - 3], got {k_cap}")
    d = ring_diameters(ring_n)

    def sector_norm(k: int) -> float:
        masked = np.where(d == k, exp.coeffs, 0.0)
        sector = inverse_pauli_transform(PauliExpansion(n=ring_n, coeffs=masked))
        return schatten_norm(sector, np.inf)

    normalizer = sector_norm(1)
    if normalizer < 1e-12:
        raise NormalizerDegenerateError(
            f"single-site sector norm {normalizer:.3e} is too small to normalize against"
        )
    norms = {k: sector_norm(k) / normalizer for k in range(1, k_cap + 1)}
    return DiameterProfile(epsilon=epsilon, norms=norms, normalizer=normalizer)


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    r_squared: float


def decay_fit(profile: DiameterProfile) -> DecayFit:
    """Least-squares line through (k, log norms[k]) over the nonzero entries."""
    ks = np.array([k for k, v in sorted(profile.norms.items()) if v > 0.0], dtype=float)
    if ks.size < 3:
        raise InsufficientDataError(
            f"decay fit needs at least 3 nonzero sectors, got {ks.size}"
        )
    ys = np.log(np.array([profile.norms[int(k)] for k in ks]))
    slope, intercept = np.polyfit(ks, ys, 1)
    pred = slope * ks + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
    if ss_tot < 1e-30:
        r2 = 1.0 if ss_res < 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return DecayFit(slope=float(slope), intercept=float(intercept), r_squared=r2)


@dataclass(frozen=True)
class ProbeResult:
    mixed_partial_norm: float
    support_estimate: SupportSet
    max_coefficient: float


def connected_term_probe(
    model: ChannelModel,
    edge_pair: tuple[tuple[int, int], tuple[int, int]],
    h_step: float = 1e-3,
    *,
    significance: float = 1e-6,
    log_floor: float = 1e-14,
) -> ProbeResult:
    """Mixed finite difference of the Gibbs Hamiltonian in two edge strengths.

    Evaluates H at the four corners of the grid {0, h}^2 in the two chosen
    edges' interaction strengths (every other edge held at zero, dense
    oracle per grid point), and returns the central mixed difference
    [H(h,h) - H(h,0) - H(0,h) + H(0,0)] / h^2 together with the support of
    its significant Pauli coefficients (those above ``significance`` times
    the largest one).
    """
    e1 = canonical_edge(*edge_pair[0])
    e2 = canonical_edge(*edge_pair[1])
    if e1 == e2:
        raise ContractViolationError("edge pair must consist of two distinct edges")
    n = model.graph.n
    if n > 6:
        raise SizeError("probe uses the dense oracle; n <= 6 required")

    def hamiltonian_at(x: float, y: float) -> np.ndarray:
        overrides = {e: 0.0 for e in model.graph.edges}
        overrides[e1] = x
        overrides[e2] = y
        handle = compose_epsilon_channel(model, epsilon_overrides=overrides)
        rho = dense_fixed_point_oracle(handle, n)
        return gibbs_hamiltonian(rho, floor=log_floor)

    h = float(h_step)
    mixed = (
        hamiltonian_at(h, h)
        - hamiltonian_at(h, 0.0)
        - hamiltonian_at(0.0, h)
        + hamiltonian_at(0.0, 0.0)
    ) / (h * h)
    norm = schatten_norm(mixed, np.inf)

    exp = pauli_transform(mixed, imag_tol=1e-8)
    mags = np.abs(exp.coeffs)
    peak = float(np.max(mags))
    support: set[int] = set()
    if peak > 0.0:
        for idx in np.flatnonzero(mags > significance * peak):
            for q, a in enumerate(exp.string_of(int(idx))):
                if a != 0:
                    support.add(q)
    return ProbeResult(
        mixed_partial_norm=norm,
        support_estimate=tuple(sorted(support)),
        max_coefficient=peak,
    )
