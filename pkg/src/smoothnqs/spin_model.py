"""Spin configurations and the tilted Ising chain with open boundaries.

    H = J sum_i s^z_i s^z_{i+1} - sum_i (h_x s^x_i + h_z s^z_i)

Configurations are arrays of +-1.  The canonical integer code sets bit
``i - 1`` for site ``i`` when the spin is +1, so site 1 is the least
significant bit and a code indexes a dense state vector directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class HamiltonianSpec:
    L: int
    J: float = 1.0
    hx: float = 0.0
    hz: float = 0.0
    boundary: str = "open"

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise DimensionError(f"L must be a positive integer, got {self.L}")
        if self.boundary != "open":
            raise ValueError(f"only open boundaries are implemented, got {self.boundary!r}")

    @property
    def n_bonds(self) -> int:
        return self.L - 1

    @property
    def dim(self) -> int:
        return 1 << self.L


def middle_site(L: int) -> int:
    """1-based index of the middle site, ceil(L/2)."""
    return (L + 1) // 2


def as_spins(x, L: int | None = None) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1:
        raise DimensionError(f"a spin configuration must be 1-d, got shape {x.shape}")
    if L is not None and x.shape[0] != L:
        raise DimensionError(f"configuration has {x.shape[0]} sites, Hamiltonian has L={L}")
    if not np.all(np.abs(x) == 1):
        raise ValueError("spin entries must be exactly -1 or +1")
    return x.astype(np.int8)


def encode(x) -> int:
    x = as_spins(x)
    bits = (x > 0).astype(np.int64)
    return int(np.sum(bits << np.arange(x.shape[0], dtype=np.int64)))


def decode(code: int, L: int) -> np.ndarray:
    return (((int(code) >> np.arange(L)) & 1) * 2 - 1).astype(np.int8)


def codes_to_spins(codes, L: int) -> np.ndarray:
    """Vectorized decode: integer codes of any shape -> spins with a trailing axis of length L."""
    codes = np.asarray(codes, dtype=np.int64)
    return (((codes[..., None] >> np.arange(L, dtype=np.int64)) & 1) * 2 - 1).astype(np.int8)


def spins_to_codes(spins) -> np.ndarray:
    spins = np.asarray(spins)
    L = spins.shape[-1]
    return np.sum((spins > 0).astype(np.int64) << np.arange(L, dtype=np.int64), axis=-1)


def all_configs(L: int) -> np.ndarray:
    """Every configuration of L spins, row c has code c."""
    return codes_to_spins(np.arange(1 << L, dtype=np.int64), L)


def flip(x, site: int) -> np.ndarray:
    """Copy of x with the 1-based ``site`` flipped."""
    x = np.array(x, dtype=np.int8)
    if not 1 <= site <= x.shape[0]:
        raise IndexError(f"site {site} outside 1..{x.shape[0]}")
    x[site - 1] = -x[site - 1]
    return x


def diagonal_element(x, h: HamiltonianSpec) -> float:
    x = as_spins(x, h.L).astype(np.int64)
    return float(h.J * np.sum(x[:-1] * x[1:]) - h.hz * np.sum(x))


def diagonal_energies(codes, h: HamiltonianSpec) -> np.ndarray:
    """Diagonal matrix elements for an array of integer codes."""
    s = codes_to_spins(codes, h.L).astype(np.float64)
    return h.J * np.sum(s[..., :-1] * s[..., 1:], axis=-1) - h.hz * np.sum(s, axis=-1)


def connected_elements(x, h: HamiltonianSpec) -> list[tuple[np.ndarray, float]]:
    """Nonzero entries of the Hamiltonian row of x.

    Diagonal entry first, then one single-spin flip per site in ascending
    site order (omitted when h_x = 0).
    """
    x = as_spins(x, h.L)
    row = [(x.copy(), diagonal_element(x, h))]
    if h.hx != 0.0:
        for site in range(1, h.L + 1):
            row.append((flip(x, site), -float(h.hx)))
    return row


def connected_codes(codes, h: HamiltonianSpec) -> tuple[np.ndarray, np.ndarray]:
    """Batched :func:`connected_elements` on integer codes.

    Returns (codes, amplitudes), each of shape ``codes.shape + (width,)`` with
    width L + 1, or 1 when h_x = 0.  Same ordering as the scalar version.
    """
    codes = np.asarray(codes, dtype=np.int64)
    diag = diagonal_energies(codes, h)
    if h.hx == 0.0:
        return codes[..., None], diag[..., None]
    masks = np.int64(1) << np.arange(h.L, dtype=np.int64)
    out_codes = np.concatenate([codes[..., None], codes[..., None] ^ masks], axis=-1)
    out_amps = np.concatenate(
        [diag[..., None], np.full(codes.shape + (h.L,), -float(h.hx))], axis=-1
    )
    return out_codes, out_amps


def sigma_x_local(x, site: int, psi_ratio: Callable[[np.ndarray, np.ndarray], complex]) -> complex:
    """Local estimator psi(x with ``site`` flipped) / psi(x) of sigma^x at a 1-based site."""
    x = as_spins(x)
    return complex(psi_ratio(flip(x, site), x))
