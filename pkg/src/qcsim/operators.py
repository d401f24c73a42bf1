"""Dense operators and states on truncated Fock / tensor-product spaces.

Operators, density matrices and kets are plain complex ``numpy`` arrays.
:class:`SpaceSpec` carries the subsystem dimensions wherever the tensor
structure matters (partial traces, embedding). Units have hbar = 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
import scipy.linalg as la
from scipy.special import gammainc, gammaln

from .errors import DimensionError, TruncationError, ValidityError

MAX_TOTAL_DIM = 4096
HERMITIAN_TOL = 1e-12
COHERENT_TAIL_TOL = 1e-10


@dataclass(frozen=True)
class SpaceSpec:
    """Ordered subsystem dimensions of a tensor-product space."""

    dims: tuple[int, ...]
    cap: int = MAX_TOTAL_DIM

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if not dims or any(d < 1 for d in dims):
            raise DimensionError(f"subsystem dimensions must be >= 1, got {dims}")
        if self.total > self.cap:
            raise DimensionError(f"total dimension {self.total} exceeds cap {self.cap}")

    @property
    def total(self) -> int:
        return int(np.prod(self.dims))

    def __len__(self):
        return len(self.dims)


def _check_dim(dim):
    if int(dim) != dim or dim < 2:
        raise DimensionError(f"Fock dimension must be an integer >= 2, got {dim}")
    return int(dim)


def identity(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex)


def annihilation(dim: int) -> np.ndarray:
    """Lowering operator with ``a|n> = sqrt(n)|n-1>`` on ``dim`` Fock levels."""
    dim = _check_dim(dim)
    return np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex)


def creation(dim: int) -> np.ndarray:
    return annihilation(dim).conj().T


def number(dim: int) -> np.ndarray:
    dim = _check_dim(dim)
    return np.diag(np.arange(dim)).astype(complex)


def quadrature(dim: int) -> np.ndarray:
    """Dimensionless displacement quadrature ``b + b^dagger``."""
    a = annihilation(dim)
    return a + a.conj().T


def basis(dim: int, n: int) -> np.ndarray:
    if not 0 <= n < dim:
        raise DimensionError(f"basis index {n} outside 0..{dim - 1}")
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return v


def coherent_tail_mass(alpha: complex, dim: int) -> float:
    """Poisson weight of a coherent state that falls outside ``dim`` levels."""
    mean = abs(alpha) ** 2
    if mean == 0.0:
        return 0.0
    # P(N >= dim) for N ~ Poisson(mean) is the regularized lower incomplete gamma
    return float(gammainc(dim, mean))


def coherent_state(alpha: complex, dim: int, tail_tol: float = COHERENT_TAIL_TOL) -> np.ndarray:
    """Normalized coherent state truncated to ``dim`` Fock levels.

    Raises
    ------
    TruncationError
        If the Poisson weight beyond the truncation exceeds ``tail_tol``.
    """
    dim = _check_dim(dim)
    tail = coherent_tail_mass(alpha, dim)
    if tail > tail_tol:
        raise TruncationError(
            f"coherent state alpha={alpha} loses tail mass {tail:.3e} at dim={dim}"
        )
    n = np.arange(dim)
    if alpha == 0:
        return basis(dim, 0)
    log_mag = -0.5 * abs(alpha) ** 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    psi = np.exp(log_mag) * np.exp(1j * np.angle(alpha) * n)
    return psi / np.linalg.norm(psi)


def ket2dm(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi)
    return np.outer(psi, psi.conj())


def dagger(op: np.ndarray) -> np.ndarray:
    return np.asarray(op).conj().T


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a @ b - b @ a


def anticommutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a @ b + b @ a


def kron(*ops: np.ndarray) -> np.ndarray:
    """Tensor product of operators or kets, left factor = first subsystem."""
    if not ops:
        raise DimensionError("kron needs at least one factor")
    total = int(np.prod([np.shape(o)[0] for o in ops]))
    if total > MAX_TOTAL_DIM:
        raise DimensionError(f"total dimension {total} exceeds cap {MAX_TOTAL_DIM}")
    return reduce(np.kron, ops)


def embed(op: np.ndarray, dims: Sequence[int], index: int) -> np.ndarray:
    """Place ``op`` on subsystem ``index`` with identities elsewhere."""
    space = SpaceSpec(tuple(dims))
    if not 0 <= index < len(space):
        raise DimensionError(f"subsystem index {index} out of range for {space.dims}")
    if op.shape != (space.dims[index],) * 2:
        raise DimensionError(f"operator shape {op.shape} does not match subsystem {index}")
    factors = [identity(d) for d in space.dims]
    factors[index] = op
    return kron(*factors)


def is_hermitian(op: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    op = np.asarray(op)
    return op.ndim == 2 and op.shape[0] == op.shape[1] and np.allclose(op, op.conj().T, rtol=0, atol=tol)


def expm(op: np.ndarray, scale: complex = 1.0) -> np.ndarray:
    """``exp(scale * op)``.

    Hermitian inputs go through an eigendecomposition so that unitary
    propagators ``expm(H, -1j * t)`` stay unitary to rounding; everything else
    uses scipy's scaling-and-squaring Pade routine.
    """
    op = np.asarray(op)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise DimensionError(f"expm needs a square matrix, got shape {op.shape}")
    if is_hermitian(op):
        evals, evecs = np.linalg.eigh(0.5 * (op + op.conj().T))
        return (evecs * np.exp(scale * evals)) @ evecs.conj().T
    return la.expm(scale * op)


def displacement(alpha: complex, dim: int) -> np.ndarray:
    """Truncated displacement ``exp(alpha a^dag - alpha^* a)``."""
    a = annihilation(dim)
    # alpha a^dag - alpha^* a = -i G with G Hermitian
    generator = 1j * (alpha * a.conj().T - np.conj(alpha) * a)
    return expm(generator, -1j)


def partial_trace(rho: np.ndarray, dims: Sequence[int], keep) -> np.ndarray:
    """Reduced density matrix on the subsystem(s) listed in ``keep``.

    Parameters
    ----------
    rho : ndarray
        Density matrix on the product space ``dims``.
    dims : sequence of int
        Subsystem dimensions; at least two subsystems.
    keep : int or sequence of int
        Subsystems to keep, in ascending order.
    """
    space = SpaceSpec(tuple(dims))
    if len(space) < 2:
        raise DimensionError("partial_trace needs at least two subsystems")
    rho = np.asarray(rho)
    if rho.shape != (space.total, space.total):
        raise DimensionError(f"state shape {rho.shape} does not match dims {space.dims}")
    keep = [keep] if np.isscalar(keep) else list(keep)
    if not keep or any(k < 0 or k >= len(space) for k in keep) or sorted(set(keep)) != keep:
        raise DimensionError(f"bad subsystem selection {keep} for dims {space.dims}")
    n = len(space)
    tensor = rho.reshape(space.dims + space.dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = list(letters[n:2 * n])
    for k in range(n):
        if k not in keep:
            col[k] = row[k]
    out = "".join(row[k] for k in keep) + "".join(col[k] for k in keep)
    reduced = np.einsum("".join(row) + "".join(col) + "->" + out, tensor)
    d = int(np.prod([space.dims[k] for k in keep]))
    return reduced.reshape(d, d)


def expectation(state: np.ndarray, op: np.ndarray) -> complex:
    """``tr(op rho)`` for a density matrix or ``<psi|op|psi>`` for a ket."""
    state = np.asarray(state)
    op = np.asarray(op)
    if state.ndim == 1:
        if op.shape != (state.size, state.size):
            raise DimensionError(f"operator {op.shape} vs ket of size {state.size}")
        return complex(np.vdot(state, op @ state))
    _same_shape(state, op)
    return complex(np.einsum("ij,ji->", op, state))


def trace_distance(rho1: np.ndarray, rho2: np.ndarray) -> float:
    """Half the trace norm of the difference of two density matrices."""
    _same_shape(rho1, rho2)
    diff = np.asarray(rho1) - np.asarray(rho2)
    evals = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
    return float(0.5 * np.abs(evals).sum())


def purity(rho: np.ndarray) -> float:
    rho = np.asarray(rho)
    return float(np.real(np.einsum("ij,ji->", rho, rho)))


def _same_shape(a, b):
    if np.shape(a) != np.shape(b):
        raise DimensionError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def check_density(
    rho: np.ndarray,
    herm_tol: float = 1e-10,
    trace_tol: float = 1e-8,
    pos_tol: float = 1e-8,
) -> np.ndarray:
    """Validate a density matrix and return it as a complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"density matrix must be square, got {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise ValidityError("density matrix has non-finite entries")
    herm = np.max(np.abs(rho - rho.conj().T)) if rho.size else 0.0
    if herm > herm_tol:
        raise ValidityError(f"density matrix not Hermitian (deviation {herm:.2e})")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise ValidityError(f"density matrix trace {tr!r} differs from 1")
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lam < -pos_tol:
        raise ValidityError(f"density matrix has eigenvalue {lam:.2e}")
    return rho


def check_ket(psi: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise DimensionError(f"ket must be one-dimensional, got shape {psi.shape}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > tol:
        raise ValidityError(f"ket norm {norm!r} differs from 1")
    return psi
