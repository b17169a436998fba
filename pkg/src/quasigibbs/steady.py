"""Steady-state computation: power iteration at full scale, and a dense
vectorized null-space oracle with spectral diagnostics at small scale.

The two routes are deliberately independent solvers so they can validate
each other: plain repeated channel application versus the null space of
the materialized superoperator matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .channel import EpsilonChannel
from .densemath import assert_density, trace_norm_hermitian
from .errors import ContractViolationError, DegeneracyError, SizeError

DENSE_ORACLE_MAX_QUBITS = 6
SPECTRUM_MAX_QUBITS = 5
NULLSPACE_SINGULAR_TOL = 1e-9
_SVD_MAX_SUPERDIM = 1024  # full SVD up to here; LU-based null space above


@dataclass
class ConvergenceRecord:
    """Residual trace of a fixed-point run.

    For n <= 8 the residual is evaluated every iteration; above that every
    ``residual_stride`` iterations, since each trace norm costs an
    eigendecomposition.
    """

    iterations: int
    residual_history: list[float] = field(default_factory=list)
    residual_iters: list[int] = field(default_factory=list)
    residual_stride: int = 1
    converged: bool = False
    final_residual: float = float("nan")


def iterate_fixed_point(
    handle: EpsilonChannel,
    rho_init: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 200_000,
) -> tuple[np.ndarray, ConvergenceRecord]:
    """Repeated channel application until the trace-norm residual
    ||rho - E(rho)||_1 drops below tol.

    Non-convergence is reported in the record, not raised. The returned
    state is Hermitized, negative eigenvalues below -1e-12 are clipped to
    zero, the trace is renormalized to one, and the residual is
    re-verified on the final object.
    """
    if tol <= 0:
        raise ContractViolationError(f"tolerance must be positive, got {tol}")
    assert_density(rho_init)
    n = handle.n
    stride = 1 if n <= 8 else 10
    record = ConvergenceRecord(iterations=0, residual_stride=stride)

    rho = np.array(rho_init, dtype=complex)
    for t in range(1, max_iter + 1):
        nxt = handle.apply(rho)
        record.iterations = t
        if t % stride == 0 or t == max_iter:
            residual = trace_norm_hermitian(rho - nxt)
            record.residual_history.append(residual)
            record.residual_iters.append(t)
            if residual <= tol:
                record.converged = True
                break
        rho = nxt
        if t % 100 == 0:
            rho = 0.5 * (rho + rho.conj().T)

    rho = 0.5 * (rho + rho.conj().T)
    w, u = np.linalg.eigh(rho)
    if w[0] < -1e-12:
        w = np.where(w < -1e-12, 0.0, w)
        rho = (u * w) @ u.conj().T
    rho /= np.trace(rho).real

    final = trace_norm_hermitian(rho - handle.apply(rho))
    record.final_residual = final
    record.converged = bool(final <= tol)
    return rho, record


def dense_superoperator(handle: EpsilonChannel, n: int) -> np.ndarray:
    """Materialize the 4^n x 4^n superoperator column by column.

    Column (a, b) holds the row-major flattening of the channel applied to
    the matrix unit |a><b|.
    """
    dim = 2**n
    mat = np.empty((dim * dim, dim * dim), dtype=complex)
    basis = np.zeros((dim, dim), dtype=complex)
    for a in range(dim):
        for b in range(dim):
            basis[a, b] = 1.0
            mat[:, a * dim + b] = handle.apply(basis).reshape(-1)
            basis[a, b] = 0.0
    return mat


def dense_fixed_point_oracle(
    handle: EpsilonChannel,
    n: int | None = None,
    *,
    degeneracy_tol: float = NULLSPACE_SINGULAR_TOL,
    polish_steps: int = 50,
) -> np.ndarray:
    """Steady state from the null space of (superoperator - identity).

    Raises a degeneracy error unless the null space is one dimensional
    (singular values below ``degeneracy_tol`` count as zero). A few
    superoperator-matrix multiplications polish the SVD null vector down
    to the roundoff floor before reshaping, Hermitizing and normalizing.
    """
    if n is None:
        n = handle.n
    if n != handle.n:
        raise SizeError(f"handle acts on {handle.n} qubits, asked for {n}")
    if n > DENSE_ORACLE_MAX_QUBITS:
        raise SizeError(
            f"dense oracle supports n <= {DENSE_ORACLE_MAX_QUBITS}, got {n}"
        )
    dim = 2**n
    mat = dense_superoperator(handle, n)
    ident = np.eye(dim * dim)
    if dim * dim <= _SVD_MAX_SUPERDIM:
        sv = np.linalg.svd(mat - ident, compute_uv=True)
        null_count = int(np.sum(sv[1] < degeneracy_tol))
        v = sv[2][-1].conj()
    else:
        null_count, v = _lu_null_space(mat - ident, degeneracy_tol)
    if null_count != 1:
        raise DegeneracyError(
            f"steady-state equation has null-space dimension {null_count}, expected 1"
        )
    for _ in range(polish_steps):
        v = mat @ v
        v /= np.linalg.norm(v)
    rho = v.reshape(dim, dim)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho)
    if abs(tr) < 1e-6:
        raise DegeneracyError("null vector is traceless; steady state ill-defined")
    return rho / tr


def _lu_null_space(a: np.ndarray, tol: float, iters: int = 8) -> tuple[int, np.ndarray]:
    """Smallest singular pair count and null vector via LU inverse iteration.

    A full SVD of the largest superoperators is prohibitive on one core, so
    the null space is found by subspace inverse iteration on A^H A using a
    single LU factorization; the two smallest singular values are estimated
    from the converged subspace and compared against the tolerance.
    """
    m = a.shape[0]
    try:
        lu = scipy.linalg.lu_factor(a, check_finite=False)
    except scipy.linalg.LinAlgError:
        lu = scipy.linalg.lu_factor(a + 1e-12 * np.eye(m), check_finite=False)
    rng = np.random.default_rng(0x5EED)
    z = rng.standard_normal((m, 2)) + 1j * rng.standard_normal((m, 2))
    z, _ = np.linalg.qr(z)
    for _ in range(iters):
        z = scipy.linalg.lu_solve(lu, z, trans=2, check_finite=False)
        z /= np.max(np.abs(z))
        z = scipy.linalg.lu_solve(lu, z, trans=0, check_finite=False)
        z, _ = np.linalg.qr(z)
    sigma = np.linalg.norm(a @ z, axis=0)
    order = np.argsort(sigma)
    null_count = int(np.sum(sigma < tol))
    return null_count, z[:, order[0]]


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray  # sorted by modulus, descending
    leading: complex
    gap: float


def superoperator_spectrum(handle: EpsilonChannel, n: int | None = None) -> SpectrumReport:
    """Full spectrum of the materialized superoperator, modulus descending."""
    if n is None:
        n = handle.n
    if n != handle.n:
        raise SizeError(f"handle acts on {handle.n} qubits, asked for {n}")
    if n > SPECTRUM_MAX_QUBITS:
        raise SizeError(f"spectrum supports n <= {SPECTRUM_MAX_QUBITS}, got {n}")
    eigs = np.linalg.eigvals(dense_superoperator(handle, n))
    order = np.argsort(-np.abs(eigs))
    eigs = eigs[order]
    gap = 1.0 - float(np.abs(eigs[1])) if eigs.size > 1 else 1.0
    return SpectrumReport(eigenvalues=eigs, leading=complex(eigs[0]), gap=gap)
