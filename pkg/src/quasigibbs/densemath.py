"""Dense complex linear algebra on the 2^n-dimensional qubit space.

Operators are plain complex ndarrays. Qubit 0 is the most significant
tensor factor everywhere in the package: basis index b encodes qubit i's
bit at position (n-1-i).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from string import ascii_letters
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractViolationError, RankDeficiencyError, ShapeError

PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (PAULI_I, PAULI_X, PAULI_Y, PAULI_Z)

CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)

HERMITICITY_TOL = 1e-12


def num_qubits(op: np.ndarray) -> int:
    dim = op.shape[0]
    n = int(round(math.log2(dim)))
    if op.shape != (dim, dim) or 2**n != dim:
        raise ShapeError(f"operator shape {op.shape} is not square power-of-two")
    return n


def is_hermitian(op: np.ndarray, tol: float = HERMITICITY_TOL) -> bool:
    return bool(np.max(np.abs(op - op.conj().T)) <= tol)


def assert_hermitian(op: np.ndarray, tol: float = HERMITICITY_TOL) -> None:
    dev = float(np.max(np.abs(op - op.conj().T)))
    if dev > tol:
        raise ContractViolationError(f"operator is not Hermitian (deviation {dev:.3e})")


def assert_density(op: np.ndarray, trace_tol: float = 1e-10, eig_tol: float = 1e-10) -> None:
    assert_hermitian(op)
    tr = complex(np.trace(op))
    if abs(tr - 1.0) > trace_tol:
        raise ContractViolationError(f"trace is {tr}, expected 1")
    w = np.linalg.eigvalsh(0.5 * (op + op.conj().T))
    if w[0] < -eig_tol:
        raise ContractViolationError(f"minimum eigenvalue {w[0]:.3e} below -{eig_tol:.0e}")


def tensor_embed(local: np.ndarray, support: Iterable[int], n: int) -> np.ndarray:
    """Embed a local operator as local-on-support tensored with identity.

    Qubit order inside the support follows the sorted index order.
    """
    sup = tuple(sorted(set(int(i) for i in support)))
    k = len(sup)
    if local.shape != (2**k, 2**k):
        raise ShapeError(f"local shape {local.shape} does not match support size {k}")
    if sup and (sup[0] < 0 or sup[-1] >= n):
        raise ShapeError(f"support {sup} outside [0, {n})")
    if k == n:
        return np.array(local, dtype=complex)
    rest = [q for q in range(n) if q not in sup]
    full = np.kron(np.asarray(local, dtype=complex), np.eye(2 ** (n - k)))
    # current qubit order is sup + rest; permute axes back to 0..n-1
    order = list(sup) + rest
    perm = [order.index(q) for q in range(n)]
    t = full.reshape((2,) * (2 * n))
    t = t.transpose(perm + [n + p for p in perm])
    return np.ascontiguousarray(t.reshape(2**n, 2**n))


def partial_trace(op: np.ndarray, keep: Iterable[int], n: int | None = None) -> np.ndarray:
    """Reduced operator on the kept qubits; empty keep yields a 1x1 trace."""
    if n is None:
        n = num_qubits(op)
    kept = tuple(sorted(set(int(i) for i in keep)))
    if kept and (kept[0] < 0 or kept[-1] >= n):
        raise ShapeError(f"keep set {kept} outside [0, {n})")
    if not kept:
        return np.array([[np.trace(op)]], dtype=complex)
    if len(kept) == n:
        return np.array(op, dtype=complex)
    letters = iter(ascii_letters)
    row = [next(letters) for _ in range(n)]
    col = [row[q] if q not in kept else next(letters) for q in range(n)]
    out = "".join(row[q] for q in kept) + "".join(col[q] for q in kept)
    sub = f"{''.join(row)}{''.join(col)}->{out}"
    k = len(kept)
    return np.einsum(sub, op.reshape((2,) * (2 * n))).reshape(2**k, 2**k)


@dataclass(frozen=True)
class EigenDecomposition:
    """Spectral data of a Hermitian operator, eigenvalues descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # unitary, columns match eigenvalues

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.conj().T


def hermitian_eigendecompose(op: np.ndarray, tol: float = HERMITICITY_TOL) -> EigenDecomposition:
    assert_hermitian(op, tol)
    w, u = np.linalg.eigh(0.5 * (op + op.conj().T))
    return EigenDecomposition(eigenvalues=w[::-1].copy(), eigenvectors=u[:, ::-1].copy())


def matrix_log_full_rank(rho: np.ndarray, floor: float = 1e-14) -> np.ndarray:
    """log(rho) for a Hermitian positive operator with spectrum above floor."""
    dec = hermitian_eigendecompose(rho)
    wmin = float(dec.eigenvalues[-1])
    if wmin < floor:
        raise RankDeficiencyError(
            f"eigenvalue {wmin:.6e} is below the full-rank floor {floor:.1e}"
        )
    u = dec.eigenvectors
    out = (u * np.log(dec.eigenvalues)) @ u.conj().T
    return 0.5 * (out + out.conj().T)


def matrix_exp_hermitian(h: np.ndarray) -> np.ndarray:
    """exp(h) for Hermitian h, via the same eigensolver as the logarithm."""
    dec = hermitian_eigendecompose(h)
    u = dec.eigenvectors
    out = (u * np.exp(dec.eigenvalues)) @ u.conj().T
    return 0.5 * (out + out.conj().T)


def schatten_norm(op: np.ndarray, p) -> float:
    """Schatten p-norm for p in {1, 2, inf}."""
    if p == 2:
        return float(np.linalg.norm(op))
    sv = np.linalg.svd(op, compute_uv=False)
    if p == 1:
        return float(np.sum(sv))
    if p in (np.inf, math.inf, "inf"):
        return float(sv[0]) if sv.size else 0.0
    raise ValueError(f"unsupported Schatten order {p!r}")


def hs_inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Hilbert-Schmidt inner product Tr(a^dagger b)."""
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return complex(np.sum(a.conj() * b))


def trace_norm_hermitian(op: np.ndarray) -> float:
    """Trace norm of a (numerically) Hermitian operator via eigenvalues."""
    w = np.linalg.eigvalsh(0.5 * (op + op.conj().T))
    return float(np.sum(np.abs(w)))


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * trace_norm_hermitian(a - b)
