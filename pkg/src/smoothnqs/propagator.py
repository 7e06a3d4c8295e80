"""Rows of the truncated Taylor propagator U = sum_n (-i dt H)^n / n!.

Rows are built on the fly by repeatedly expanding Hamiltonian rows, so no
H^2 matrix is ever stored.  Duplicate configurations are merged by adding
amplitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import CapacityError, UnsupportedOrderError
from .spin_model import HamiltonianSpec, as_spins, codes_to_spins, connected_codes, encode

MAX_ORDER = 3


@dataclass(frozen=True)
class PropagatorSpec:
    dt: float
    hamiltonian: HamiltonianSpec
    order: int = 2
    dagger: bool = False

    def __post_init__(self):
        if self.dt < 0:
            raise ValueError(f"time step must be non-negative, got {self.dt}")
        if int(self.order) != self.order or self.order < 1:
            raise UnsupportedOrderError(f"Taylor order must be a positive integer, got {self.order}")
        if self.order > MAX_ORDER:
            raise UnsupportedOrderError(f"Taylor order {self.order} > {MAX_ORDER} is not supported")

    @property
    def L(self) -> int:
        return self.hamiltonian.L

    def adjoint(self) -> "PropagatorSpec":
        return PropagatorSpec(self.dt, self.hamiltonian, self.order, not self.dagger)

    def coefficients(self) -> list[complex]:
        """Scalar prefactor of H^n for n = 0..order; conjugated for the adjoint."""
        sign = 1j if self.dagger else -1j
        return [(sign * self.dt) ** n / math.factorial(n) for n in range(self.order + 1)]


def _merge(rows, codes, amps):
    order = np.lexsort((codes, rows))
    rows, codes, amps = rows[order], codes[order], amps[order]
    if rows.size == 0:
        return rows, codes, amps
    start = np.ones(rows.size, dtype=bool)
    start[1:] = (rows[1:] != rows[:-1]) | (codes[1:] != codes[:-1])
    idx = np.flatnonzero(start)
    return rows[idx], codes[idx], np.add.reduceat(amps, idx)


def taylor_rows(codes, p: PropagatorSpec):
    """Batched propagator rows.

    Returns flat arrays (row, col, amp): entry ``amp`` = <codes[row]|U|col>.
    Entries are sorted by (row, col) and exact zeros are dropped.
    """
    codes = np.asarray(codes, dtype=np.int64).ravel()
    coef = p.coefficients()
    n = codes.size
    # frontier holds the row of H^m as flat (row, code, amp) triples
    f_rows = np.arange(n, dtype=np.int64)
    f_codes = codes.copy()
    f_amps = np.ones(n, dtype=np.complex128)
    all_rows, all_codes, all_amps = [f_rows], [f_codes], [coef[0] * f_amps]
    for m in range(1, p.order + 1):
        if coef[m] == 0:
            break
        nc, na = connected_codes(f_codes, p.hamiltonian)
        width = nc.shape[1]
        f_rows, f_codes, f_amps = _merge(
            np.repeat(f_rows, width), nc.ravel(), (f_amps[:, None] * na).ravel()
        )
        all_rows.append(f_rows)
        all_codes.append(f_codes)
        all_amps.append(coef[m] * f_amps)
    rows, cols, amps = _merge(np.concatenate(all_rows), np.concatenate(all_codes),
                              np.concatenate(all_amps))
    keep = amps != 0
    return rows[keep], cols[keep], amps[keep]


def taylor_row(x, p: PropagatorSpec) -> list[tuple[np.ndarray, complex]]:
    """Nonzero entries <x|U|x'> as (x', amplitude) pairs, sorted by configuration code."""
    x = as_spins(x, p.L)
    _, cols, amps = taylor_rows(np.array([encode(x)]), p)
    spins = codes_to_spins(cols, p.L)
    return [(spins[i], complex(amps[i])) for i in range(cols.size)]


@lru_cache(maxsize=16)
def taylor_matrix(p: PropagatorSpec):
    """Sparse CSR matrix assembled from :func:`taylor_rows` over the full basis."""
    if p.L > 14:
        raise CapacityError(f"full-basis propagator matrices are limited to L <= 14, got L={p.L}")
    dim = 1 << p.L
    rows, cols, amps = taylor_rows(np.arange(dim, dtype=np.int64), p)
    return sp.csr_matrix((amps, (rows, cols)), shape=(dim, dim))


def row_support_bound(p: PropagatorSpec) -> int:
    """Upper bound on row length: configurations within ``order`` spin flips."""
    if p.hamiltonian.hx == 0.0 or p.dt == 0:
        return 1
    return sum(math.comb(p.L, d) for d in range(min(p.order, p.L) + 1))
