"""Complex restricted Boltzmann machine amplitudes.

    log psi(x) = sum_i a_i x_i + sum_j log 2cosh(b_j + sum_i W_ij x_i)

Flattened parameter order (shared with coefficient tensors and optimizer
state): a (L entries), b (M entries), then W column by column, i.e. hidden
unit j occupies the slice ``L + M + j*L : L + M + (j+1)*L``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericError


def n_params(L: int, alpha: int) -> int:
    M = alpha * L
    return L + M + L * M


def _half_exp(z):
    """s = sign(Re z) and w = exp(-2 s z) as (s, Re w, Im w); |w| <= 1 so nothing overflows."""
    x, y = z.real, z.imag
    s = np.where(x >= 0.0, 1.0, -1.0)
    e = np.exp(-2.0 * np.abs(x))
    return s, e * np.cos(2.0 * y), -s * e * np.sin(2.0 * y)


def log_cosh(z):
    """Overflow-safe complex log(2 cosh z) = s z + log(1 + exp(-2 s z)), s = sign(Re z)."""
    z = np.asarray(z, dtype=np.complex128)
    s, wr, wi = _half_exp(z)
    one_w = 1.0 + wr
    out = s * z
    out += 0.5 * np.log(one_w * one_w + wi * wi) + 1j * np.arctan2(wi, one_w)
    return out


def log_cosh_tanh(z):
    """(log 2cosh z, tanh z) sharing one exponential; tanh z = s (1 - w) / (1 + w)."""
    z = np.asarray(z, dtype=np.complex128)
    s, wr, wi = _half_exp(z)
    one_w = 1.0 + wr
    den = one_w * one_w + wi * wi
    lc = s * z
    lc += 0.5 * np.log(den) + 1j * np.arctan2(wi, one_w)
    th = (s / den) * ((1.0 - wr * wr - wi * wi) - 2j * wi)
    return lc, th


@dataclass
class RbmParams:
    a: np.ndarray
    b: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.complex128)
        self.b = np.asarray(self.b, dtype=np.complex128)
        self.W = np.asarray(self.W, dtype=np.complex128)
        if self.W.shape != (self.a.shape[0], self.b.shape[0]):
            raise DimensionError(
                f"W has shape {self.W.shape}, expected ({self.a.shape[0]}, {self.b.shape[0]})"
            )
        if self.b.shape[0] % self.a.shape[0]:
            raise DimensionError("hidden unit count must be a multiple of L")

    @property
    def L(self) -> int:
        return self.a.shape[0]

    @property
    def M(self) -> int:
        return self.b.shape[0]

    @property
    def alpha(self) -> int:
        return self.M // self.L

    @property
    def n_params(self) -> int:
        return self.L + self.M + self.L * self.M

    @classmethod
    def zeros(cls, L: int, alpha: int) -> "RbmParams":
        M = alpha * L
        return cls(np.zeros(L), np.zeros(M), np.zeros((L, M)))

    @classmethod
    def random(cls, L: int, alpha: int, scale: float = 0.1, rng=None) -> "RbmParams":
        rng = np.random.default_rng(rng)
        N = n_params(L, alpha)
        vec = scale * (rng.standard_normal(N) + 1j * rng.standard_normal(N))
        return cls.unflatten(vec, L, alpha)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.a, self.b, self.W.ravel(order="F")])

    @classmethod
    def unflatten(cls, vec, L: int, alpha: int) -> "RbmParams":
        vec = np.asarray(vec, dtype=np.complex128)
        M = alpha * L
        if vec.shape != (L + M + L * M,):
            raise DimensionError(f"parameter vector has shape {vec.shape}, expected ({L + M + L * M},)")
        return cls(vec[:L], vec[L:L + M], vec[L + M:].reshape((L, M), order="F"))

    def check_finite(self):
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.W))):
            raise NumericError("RBM parameters contain non-finite entries")


def _spins(p: RbmParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.L:
        raise DimensionError(f"configuration has {x.shape[-1]} sites, network has L={p.L}")
    return x


def hidden_args(p: RbmParams, x) -> np.ndarray:
    """theta_j(x) = b_j + sum_i W_ij x_i; batched over leading axes of x."""
    return p.b + _spins(p, x) @ p.W


def log_amplitudes(p: RbmParams, x) -> np.ndarray:
    """log psi for a batch of configurations with shape (..., L)."""
    p.check_finite()
    x = _spins(p, x)
    return x @ p.a + np.sum(log_cosh(p.b + x @ p.W), axis=-1)


def log_amplitude(p: RbmParams, x) -> complex:
    x = np.asarray(x)
    if x.ndim != 1:
        raise DimensionError("log_amplitude takes a single configuration")
    return complex(log_amplitudes(p, x))


def log_derivatives_batch(p: RbmParams, x) -> np.ndarray:
    """O_k(x) = d log psi(x) / d vartheta_k for configurations of shape (n, L) -> (n, N_p)."""
    x = np.atleast_2d(_spins(p, x))
    t = np.tanh(hidden_args(p, x))
    n = x.shape[0]
    # hidden unit j, site i -> column L + M + j*L + i
    w_block = (t[:, :, None] * x[:, None, :]).reshape(n, p.M * p.L)
    return np.concatenate([x.astype(np.complex128), t, w_block], axis=1)


def log_derivatives(p: RbmParams, x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1:
        raise DimensionError("log_derivatives takes a single configuration")
    return log_derivatives_batch(p, x[None, :])[0]


def contract_log_derivatives(p: RbmParams, x, weights, tanh_args=None) -> np.ndarray:
    """sum_n weights[n] * O(x_n) without building the (n, N_p) matrix."""
    x = np.atleast_2d(_spins(p, x))
    w = np.asarray(weights, dtype=np.complex128)
    t = np.tanh(hidden_args(p, x)) if tanh_args is None else tanh_args
    ga = w @ x
    wt = w[:, None] * t
    gb = wt.sum(axis=0)
    gW = x.T @ wt  # (L, M)
    return np.concatenate([ga, gb, gW.ravel(order="F")])


def amplitude_ratio(p: RbmParams, x_new, x_old, max_incremental: int | None = None) -> complex:
    """psi(x_new) / psi(x_old).

    Configurations differing in at most ``max_incremental`` sites (default
    L // 2) go through the cached-hidden-argument update; others are
    recomputed from scratch.
    """
    x_new = np.asarray(x_new, dtype=np.float64)
    x_old = np.asarray(x_old, dtype=np.float64)
    sites = np.flatnonzero(x_new != x_old)
    if sites.size == 0:
        return 1.0 + 0.0j
    if max_incremental is None:
        max_incremental = max(1, p.L // 2)
    if sites.size <= max_incremental:
        theta = hidden_args(p, x_old)
        return complex(np.exp(log_ratio_flips(p, x_old, theta, sites)))
    return complex(np.exp(log_amplitude(p, x_new) - log_amplitude(p, x_old)))


def log_ratio_flips(p: RbmParams, x, theta, sites) -> complex:
    """log psi(x with ``sites`` flipped) - log psi(x), given theta = hidden_args(p, x).

    ``sites`` are 0-based indices.
    """
    x = np.asarray(x, dtype=np.float64)
    sites = np.asarray(sites, dtype=np.int64)
    xs = x[sites]
    d_visible = -2.0 * np.sum(p.a[sites] * xs)
    theta_new = theta - 2.0 * (xs @ p.W[sites, :])
    return complex(d_visible + np.sum(log_cosh(theta_new) - log_cosh(theta)))
