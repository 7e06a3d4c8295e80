"""Dense exact-diagonalization oracle for small chains.

State vectors are plain complex arrays of length 2**L indexed by the
integer configuration code.  The Hamiltonian here is assembled from
Kronecker products of Pauli matrices, independently of the row
enumeration in :mod:`smoothnqs.spin_model`.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .errors import CapacityError, DegenerateStateError, DimensionError, NumericError
from .rbm import RbmParams, log_amplitudes
from .spin_model import HamiltonianSpec, all_configs, middle_site

MAX_DENSE_L = 14
# largest L whose Hamiltonian is fully diagonalized; beyond it propagation uses expm_multiply
MAX_EIGH_L = 12

# basis order (bit 0, bit 1) = (spin -1, spin +1)
_SZ = np.diag([-1.0, 1.0])
_SX = np.array([[0.0, 1.0], [1.0, 0.0]])


def _check_dense(L: int):
    if not 1 <= L <= MAX_DENSE_L:
        raise CapacityError(f"dense computations are limited to 1 <= L <= {MAX_DENSE_L}, got L={L}")


def state_size(v) -> int:
    """L for a dense vector of length 2**L."""
    n = np.asarray(v).shape[0]
    L = n.bit_length() - 1
    if n < 2 or (1 << L) != n:
        raise DimensionError(f"state vector length {n} is not a power of two")
    return L


def site_operator(op: np.ndarray, site: int, L: int):
    """Sparse operator acting with ``op`` on the 1-based ``site``; site 1 is the least significant bit."""
    out = sp.identity(1, format="csr")
    for s in range(L, 0, -1):
        out = sp.kron(out, op if s == site else sp.identity(2), format="csr")
    return out


@lru_cache(maxsize=8)
def _sparse_hamiltonian(h: HamiltonianSpec):
    L = h.L
    z = [site_operator(_SZ, i, L) for i in range(1, L + 1)]
    H = sp.csr_matrix((1 << L, 1 << L))
    for i in range(L - 1):
        H = H + h.J * (z[i] @ z[i + 1])
    for i in range(1, L + 1):
        H = H - (h.hx * site_operator(_SX, i, L) + h.hz * z[i - 1])
    return H.tocsr()


def sparse_hamiltonian(h: HamiltonianSpec):
    _check_dense(h.L)
    return _sparse_hamiltonian(h)


def dense_hamiltonian(h: HamiltonianSpec) -> np.ndarray:
    if h.L > MAX_EIGH_L:
        raise CapacityError(f"dense Hamiltonian matrices are limited to L <= {MAX_EIGH_L}")
    return _sparse_hamiltonian(h).toarray()


@lru_cache(maxsize=8)
def _eigensystem(h: HamiltonianSpec):
    evals, evecs = np.linalg.eigh(_sparse_hamiltonian(h).toarray())
    evals.setflags(write=False)
    evecs.setflags(write=False)
    return evals, evecs


def build_initial_state(L: int) -> np.ndarray:
    """Paramagnetic product state, every amplitude 2**(-L/2)."""
    _check_dense(L)
    return np.full(1 << L, 2.0 ** (-L / 2), dtype=np.complex128)


def exact_propagate(v, h: HamiltonianSpec, dt: float) -> np.ndarray:
    """exp(-i H dt) v through the cached eigenbasis."""
    _check_dense(h.L)
    v = np.asarray(v, dtype=np.complex128)
    if v.shape != (h.dim,):
        raise DimensionError(f"state has length {v.shape[0]}, expected {h.dim}")
    if not np.all(np.isfinite(v)):
        raise NumericError("state vector has non-finite amplitudes")
    if dt == 0:
        return v.copy()
    if h.L > MAX_EIGH_L:
        return expm_multiply(-1j * dt * _sparse_hamiltonian(h), v)
    evals, evecs = _eigensystem(h)
    return evecs @ (np.exp(-1j * evals * dt) * (evecs.T @ v))


def exact_states(h: HamiltonianSpec, times, v0=None) -> np.ndarray:
    """Exact states at each requested time starting from ``v0`` (default: paramagnetic state) at t = 0."""
    _check_dense(h.L)
    v0 = build_initial_state(h.L) if v0 is None else np.asarray(v0, dtype=np.complex128)
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    if h.L > MAX_EIGH_L:
        return np.array([exact_propagate(v0, h, t) for t in times])
    evals, evecs = _eigensystem(h)
    c0 = evecs.T @ v0
    return (evecs @ (np.exp(-1j * np.outer(evals, times)) * c0[:, None])).T


def exact_unitary(h: HamiltonianSpec, dt: float) -> np.ndarray:
    if h.L > MAX_EIGH_L:
        raise CapacityError(f"dense propagators are limited to L <= {MAX_EIGH_L}")
    evals, evecs = _eigensystem(h)
    return (evecs * np.exp(-1j * evals * dt)) @ evecs.T


def _norm2(v) -> float:
    n = float(np.vdot(v, v).real)
    if not np.isfinite(n) or n <= 0.0:
        raise DegenerateStateError("state has zero or non-finite norm")
    return n


def infidelity(a, b) -> float:
    """1 - |<a|b>|^2 / (<a|a><b|b>)."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape:
        raise DimensionError(f"state shapes differ: {a.shape} vs {b.shape}")
    fid = abs(np.vdot(a, b)) ** 2 / (_norm2(a) * _norm2(b))
    return float(min(1.0, max(0.0, 1.0 - fid)))


def expectation(v, op) -> complex:
    v = np.asarray(v, dtype=np.complex128)
    return complex(np.vdot(v, op @ v) / _norm2(v))


def sigma_x_expectation(v, site: int) -> float:
    """<sigma^x_site> for a dense state; site is 1-based."""
    v = np.asarray(v, dtype=np.complex128)
    L = state_size(v)
    if not 1 <= site <= L:
        raise IndexError(f"site {site} outside 1..{L}")
    flipped = v[np.arange(v.shape[0]) ^ (1 << (site - 1))]
    return float((np.vdot(v, flipped) / _norm2(v)).real)


def sx_mid(v) -> float:
    return sigma_x_expectation(v, middle_site(state_size(v)))


def energy(v, h: HamiltonianSpec) -> float:
    return expectation(v, sparse_hamiltonian(h)).real


def densify_rbm(params: RbmParams) -> np.ndarray:
    """Dense vector of RBM amplitudes, rescaled so the largest modulus is 1."""
    _check_dense(params.L)
    logpsi = log_amplitudes(params, all_configs(params.L))
    return np.exp(logpsi - logpsi.real.max())
