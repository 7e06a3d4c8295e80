"""Single-spin-flip Metropolis sampling from |psi|^2.

Each chain draws from its own counter-based Philox stream keyed by
(seed, chain), so chains share no state and results do not depend on how
they are scheduled.  Chains are advanced in lockstep with numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .rbm import RbmParams, hidden_args, log_cosh
from .spin_model import codes_to_spins, spins_to_codes


@dataclass(frozen=True)
class ChainConfig:
    n_chains: int = 16
    n_samples: int = 256
    burn_in: int = 100
    thinning: int = 2
    seed: int = 0

    def __post_init__(self):
        for name in ("n_chains", "n_samples", "thinning"):
            if getattr(self, name) < 1:
                raise ConfigError(f"sampler.{name} must be positive, got {getattr(self, name)}")
        if self.burn_in < 0:
            raise ConfigError(f"sampler.burn_in must be non-negative, got {self.burn_in}")

    @property
    def total(self) -> int:
        return self.n_chains * self.n_samples

    def reseeded(self, seed: int) -> "ChainConfig":
        return ChainConfig(self.n_chains, self.n_samples, self.burn_in, self.thinning, seed)


def derive_seed(*keys: int) -> int:
    """Deterministic 64-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0])


@dataclass
class SampleSet:
    """Configurations drawn from P_t, stored as integer codes of shape (n_chains, n_samples).

    ``weights`` is None for Metropolis output (uniform weights).  A weighted
    set over the full basis turns every estimator into an exact sum.
    """

    codes: np.ndarray
    L: int
    weights: np.ndarray | None = None
    source_time: float | None = None
    lineage: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.codes = np.atleast_2d(np.asarray(self.codes, dtype=np.int64))
        if self.codes.size == 0:
            raise ConfigError("sample set is empty")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64).ravel()
            if w.shape[0] != self.codes.size:
                raise ConfigError("weights and configurations differ in length")
            self.weights = w / w.sum()

    @property
    def n_chains(self) -> int:
        return self.codes.shape[0]

    @property
    def size(self) -> int:
        return self.codes.size

    @property
    def flat_codes(self) -> np.ndarray:
        return self.codes.ravel()

    def spins(self) -> np.ndarray:
        return codes_to_spins(self.flat_codes, self.L)

    def normalized_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(self.size, 1.0 / self.size)
        return self.weights

    @classmethod
    def full_basis(cls, probabilities, L: int, source_time=None) -> "SampleSet":
        """Every configuration once, weighted by ``probabilities``."""
        return cls(np.arange(1 << L, dtype=np.int64)[None, :], L,
                   weights=np.asarray(probabilities, dtype=np.float64), source_time=source_time,
                   lineage=("full_basis",))


def sample(p: RbmParams, cfg: ChainConfig, source_time: float | None = None) -> SampleSet:
    """Metropolis chains targeting |psi|^2 with uniform single-site proposals.

    One sweep is L proposals.  Chains start from uniform random
    configurations, run ``burn_in`` sweeps, then keep one configuration every
    ``thinning`` sweeps.
    """
    p.check_finite()
    L, C = p.L, cfg.n_chains
    n_steps = (cfg.burn_in + cfg.n_samples * cfg.thinning) * L
    starts = np.empty((C, L), dtype=np.float64)
    sites = np.empty((C, n_steps), dtype=np.int64)
    log_u = np.empty((C, n_steps))
    for c in range(C):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, c])))
        starts[c] = rng.integers(0, 2, L) * 2 - 1
        sites[c] = rng.integers(0, L, n_steps)
        log_u[c] = np.log(rng.random(n_steps))

    x = starts
    theta = hidden_args(p, x)
    lc = log_cosh(theta)
    kept = np.empty((C, cfg.n_samples), dtype=np.int64)
    chains = np.arange(C)
    burn = cfg.burn_in * L
    stride = cfg.thinning * L
    for step in range(n_steps):
        s = sites[:, step]
        xs = x[chains, s]
        theta_new = theta - 2.0 * xs[:, None] * p.W[s, :]
        lc_new = log_cosh(theta_new)
        log_ratio = -2.0 * p.a[s] * xs + np.sum(lc_new - lc, axis=1)
        log_acc = 2.0 * log_ratio.real
        if np.any(np.isnan(log_acc)):
            raise NumericError("non-finite Metropolis acceptance ratio")
        accept = log_u[:, step] < log_acc
        if np.any(accept):
            x[accept, s[accept]] = -xs[accept]
            theta[accept] = theta_new[accept]
            lc[accept] = lc_new[accept]
        done = step + 1 - burn
        if done > 0 and done % stride == 0:
            kept[:, done // stride - 1] = spins_to_codes(x)
    return SampleSet(kept, L, source_time=source_time, lineage=("metropolis", cfg.seed, C))


def batch_standard_error(values, samples: SampleSet) -> float:
    """Standard error of the mean of real ``values`` using chain means as batches."""
    values = np.asarray(values, dtype=np.float64)
    if samples.weights is not None:
        return 0.0
    if samples.n_chains > 1:
        means = values.reshape(samples.codes.shape).mean(axis=1)
        return float(np.std(means, ddof=1) / np.sqrt(means.size))
    if values.size > 1:
        return float(np.std(values, ddof=1) / np.sqrt(values.size))
    return 0.0


def estimate_observable(samples: SampleSet, p: RbmParams, local_estimator):
    """Mean of ``local_estimator(p, spins)`` over the samples and its standard error.

    ``local_estimator`` maps an (n, L) array of spins to n complex values.
    The error combines real and imaginary parts in quadrature.
    """
    vals = np.asarray(local_estimator(p, samples.spins()), dtype=np.complex128)
    w = samples.normalized_weights()
    mean = complex(np.sum(w * vals))
    err = np.hypot(batch_standard_error(vals.real, samples), batch_standard_error(vals.imag, samples))
    return mean, float(err)


def sigma_x_estimator(site: int):
    """Vectorized local estimator psi(x flipped at ``site``)/psi(x), site 1-based."""

    def estimator(p: RbmParams, spins):
        spins = np.asarray(spins, dtype=np.float64)
        if not 1 <= site <= p.L:
            raise IndexError(f"site {site} outside 1..{p.L}")
        i = site - 1
        xi = spins[:, i]
        theta = hidden_args(p, spins)
        theta_new = theta - 2.0 * xi[:, None] * p.W[i, :]
        return np.exp(-2.0 * p.a[i] * xi + np.sum(log_cosh(theta_new) - log_cosh(theta), axis=1))

    return estimator
