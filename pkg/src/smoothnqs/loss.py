"""Fidelity terms C_k, the initial anchor C_0 and the interval loss.

For a step from t' to t'' the fidelity factorizes into two expectation
values,

    C_k = <C_loc''>_{P''} * <C_loc'>_{P'},
    C_loc''(x) = sum_x' psi'(x')/psi''(x) <x|U|x'>,
    C_loc'(y)  = sum_y' psi''(y')/psi'(y) <y|U^dagger|y'>,

and the holomorphic derivative of log C_k with respect to the parameters
entering as the denominator of a factor is

    g = <O conj(C_loc)> / conj(<C_loc>) - <O>,

evaluated under that factor's distribution.  The packed real gradient
(see :mod:`smoothnqs.snqs`) of C_k is then ``2 C_k conj(g)``.

Exact mode sums over the full basis using dense amplitude vectors; Monte
Carlo mode replaces both expectation values with sample means.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CapacityError, CollapsedStateError, ConfigError, DimensionError
from .exact_engine import MAX_DENSE_L
from .propagator import PropagatorSpec, taylor_matrix, taylor_rows
from .rbm import RbmParams, contract_log_derivatives, hidden_args, log_amplitudes, log_cosh_tanh
from .sampler import ChainConfig, SampleSet, batch_standard_error, derive_seed, sample
from .snqs import CoeffTensor, assemble_gradient, chain_rule, fidelity_weights
from .spin_model import all_configs, codes_to_spins
from .temporal_basis import TimeGrid


@dataclass
class StepFidelityReport:
    value: float
    grad_t_prime: np.ndarray | None
    grad_t_double_prime: np.ndarray | None
    t_prime: float | None = None
    t_double_prime: float | None = None
    statistical_error: float = 0.0

    def contributions(self) -> list[tuple[float, np.ndarray]]:
        out = []
        if self.grad_t_prime is not None:
            out.append((self.t_prime, self.grad_t_prime))
        if self.grad_t_double_prime is not None:
            out.append((self.t_double_prime, self.grad_t_double_prime))
        return out


def _check_value(value: float, what: str) -> float:
    if not np.isfinite(value) or value <= 0.0:
        raise CollapsedStateError(f"{what} = {value}: the variational state has collapsed")
    return float(value)


@lru_cache(maxsize=4)
def _basis(L: int) -> np.ndarray:
    x = all_configs(L).astype(np.float64)
    x.setflags(write=False)
    return x


class DenseState:
    """Full-basis amplitudes of one parameter set, rescaled so max |psi| = 1."""

    def __init__(self, params: RbmParams):
        if params.L > MAX_DENSE_L:
            raise CapacityError(f"exact sums are limited to L <= {MAX_DENSE_L}, got L={params.L}")
        params.check_finite()
        self.params = params
        x = _basis(params.L)
        lc, self.tanh = log_cosh_tanh(hidden_args(params, x))
        logpsi = x @ params.a + np.sum(lc, axis=1)
        self.v = np.exp(logpsi - logpsi.real.max())
        self.prob = np.abs(self.v) ** 2
        self.norm2 = float(self.prob.sum())

    def contract(self, w) -> np.ndarray:
        return contract_log_derivatives(self.params, _basis(self.params.L), w, tanh_args=self.tanh)


class DenseBatch:
    """DenseState for a stack of flattened parameter vectors, shape (n_times, N_p)."""

    def __init__(self, vectors, L: int, alpha: int):
        if L > MAX_DENSE_L:
            raise CapacityError(f"exact sums are limited to L <= {MAX_DENSE_L}, got L={L}")
        vectors = np.asarray(vectors, dtype=np.complex128)
        if not np.all(np.isfinite(vectors)):
            raise CollapsedStateError("network parameters are not finite")
        self.L, self.M = L, alpha * L
        a, b = vectors[:, :L], vectors[:, L:L + self.M]
        W = vectors[:, L + self.M:].reshape(-1, self.M, L).transpose(0, 2, 1)
        x = _basis(L)
        lc, self.tanh = log_cosh_tanh(b[:, None, :] + np.matmul(x, W))
        logpsi = a @ x.T + lc.sum(axis=2)
        self.v = np.exp(logpsi - logpsi.real.max(axis=1, keepdims=True))
        self.prob = self.v.real ** 2 + self.v.imag ** 2
        self.norm2 = self.prob.sum(axis=1)

    def contract(self, w) -> np.ndarray:
        """Row-wise contract_log_derivatives: w has shape (n_times, 2^L) -> (n_times, N_p)."""
        x = _basis(self.L)
        wt = w[:, :, None] * self.tanh
        gW = np.matmul(x.T, wt)  # (n_times, L, M)
        return np.concatenate([w @ x, wt.sum(axis=1), gW.transpose(0, 2, 1).reshape(w.shape[0], -1)], axis=1)


def _interval_dense(c: CoeffTensor, times, target, U, Udag, log_form: bool):
    """All C_k of an interval and the coefficient gradient of the objective, in one batch."""
    S = DenseBatch(c.vectors(times), c.L, c.alpha)
    V, P, N = S.v, S.prob, S.norm2
    phi0 = _dense_vector(target)
    A0 = np.vdot(V[0], phi0)
    Phi = (U @ V[:-1].T).T
    Chi = (Udag @ V[1:].T).T
    A = np.sum(np.conj(V[1:]) * Phi, axis=1)
    C = np.empty(len(times))
    C[0] = abs(A0) ** 2 / (N[0] * float(np.vdot(phi0, phi0).real))
    C[1:] = np.abs(A) ** 2 / (N[:-1] * N[1:])
    for k, value in enumerate(C):
        _check_value(value, f"C_{k}")
    # d objective / d vartheta(t) = sum over roles of weight_k * 2 C_k conj(g); g is linear in its weight vector
    s = 2.0 * fidelity_weights(C, log_form) * C
    w = np.empty_like(V)
    w[0] = s[0] * (V[0] * np.conj(phi0) / np.conj(A0) - P[0] / N[0])
    w[1:] = s[1:, None] * (V[1:] * np.conj(Phi) / np.conj(A)[:, None] - P[1:] / N[1:, None])
    w[:-1] += s[1:, None] * (V[:-1] * np.conj(Chi) / A[:, None] - P[:-1] / N[:-1, None])
    return C, chain_rule(np.conj(S.contract(w)), times, c.window)


def _dense_vector(target) -> np.ndarray:
    if isinstance(target, RbmParams):
        return DenseState(target).v
    v = np.asarray(target, dtype=np.complex128)
    if v.ndim != 1:
        raise DimensionError("target state must be a 1-d vector")
    return v


def _step_dense(s1: DenseState, s2: DenseState, U, Udag):
    """C and (dC/dvartheta', dC/dvartheta'') for the step s1 -> s2."""
    phi = U @ s1.v
    A = np.vdot(s2.v, phi)
    C = _check_value(abs(A) ** 2 / (s1.norm2 * s2.norm2), "C_k")
    g2 = s2.contract(s2.v * np.conj(phi) / np.conj(A) - s2.prob / s2.norm2)
    chi = Udag @ s2.v
    g1 = s1.contract(s1.v * np.conj(chi) / A - s1.prob / s1.norm2)
    return C, 2.0 * C * np.conj(g1), 2.0 * C * np.conj(g2)


def _anchor_dense(s: DenseState, phi):
    norm_phi = float(np.vdot(phi, phi).real)
    A = np.vdot(s.v, phi)
    C = _check_value(abs(A) ** 2 / (s.norm2 * norm_phi), "C_0")
    g = s.contract(s.v * np.conj(phi) / np.conj(A) - s.prob / s.norm2)
    return C, 2.0 * C * np.conj(g)


def _propagators(p: PropagatorSpec):
    return taylor_matrix(p), taylor_matrix(p.adjoint())


def step_fidelity_exact(c: CoeffTensor, t_prime: float, t_double_prime: float,
                        p: PropagatorSpec) -> StepFidelityReport:
    """C_k by summation over all 2^L configurations."""
    s1 = DenseState(c.materialize(t_prime))
    s2 = DenseState(c.materialize(t_double_prime))
    C, g1, g2 = _step_dense(s1, s2, *_propagators(p))
    return StepFidelityReport(C, g1, g2, t_prime, t_double_prime)


def step_fidelity_params(p1: RbmParams, p2: RbmParams, p: PropagatorSpec):
    """Exact C for a step between two explicit parameter sets, with both gradients."""
    C, g1, g2 = _step_dense(DenseState(p1), DenseState(p2), *_propagators(p))
    return C, g1, g2


# Monte Carlo -------------------------------------------------------------


def _local_overlap(samples: SampleSet, p_den: RbmParams, p_num: RbmParams, prop: PropagatorSpec | None):
    """C_loc(x) = sum_x' psi_num(x') / psi_den(x) <x|U|x'> for every sample (U = 1 when prop is None)."""
    codes = samples.flat_codes
    uniq, inv = np.unique(codes, return_inverse=True)
    log_den = log_amplitudes(p_den, codes_to_spins(uniq, samples.L))
    if prop is None:
        return np.exp(log_amplitudes(p_num, codes_to_spins(uniq, samples.L)) - log_den)[inv]
    rows, cols, amps = taylor_rows(uniq, prop)
    ucols, cinv = np.unique(cols, return_inverse=True)
    log_num = log_amplitudes(p_num, codes_to_spins(ucols, samples.L))[cinv]
    terms = amps * np.exp(log_num - log_den[rows])
    per_row = (np.bincount(rows, weights=terms.real, minlength=uniq.size)
               + 1j * np.bincount(rows, weights=terms.imag, minlength=uniq.size))
    return per_row[inv]


def _factor_mc(samples: SampleSet, p_den: RbmParams, p_num: RbmParams, prop):
    """Mean F of C_loc, the holomorphic log-derivative g for p_den, and per-sample C_loc."""
    cloc = _local_overlap(samples, p_den, p_num, prop)
    w = samples.normalized_weights()
    F = complex(np.sum(w * cloc))
    x = samples.spins().astype(np.float64)
    g = (contract_log_derivatives(p_den, x, w * np.conj(cloc)) / np.conj(F)
         - contract_log_derivatives(p_den, x, w))
    return F, g, cloc


def _combine_mc(s_a: SampleSet, s_b: SampleSet, fa, fb, what: str):
    (Fa, ga, ca), (Fb, gb, cb) = fa, fb
    C = _check_value((Fa * Fb).real, what)
    err = np.hypot(batch_standard_error((Fb * ca).real, s_a), batch_standard_error((Fa * cb).real, s_b))
    return C, 2.0 * C * np.conj(ga), 2.0 * C * np.conj(gb), float(err)


def step_fidelity_mc_params(p1: RbmParams, p2: RbmParams, prop: PropagatorSpec,
                            s_prime: SampleSet, s_double_prime: SampleSet):
    """(C, dC/dvartheta', dC/dvartheta'', standard error) estimated from samples of P' and P''."""
    f2 = _factor_mc(s_double_prime, p2, p1, prop)
    f1 = _factor_mc(s_prime, p1, p2, prop.adjoint())
    C, g2, g1, err = _combine_mc(s_double_prime, s_prime, f2, f1, "C_k")
    return C, g1, g2, err


def step_fidelity_mc(c: CoeffTensor, t_prime: float, t_double_prime: float, p: PropagatorSpec,
                     s_prime: SampleSet, s_double_prime: SampleSet) -> StepFidelityReport:
    """C_k with both expectation values replaced by sample means.

    The estimate is the real part of the product of the two factor means;
    its standard error follows from linearizing that product.
    """
    C, g1, g2, err = step_fidelity_mc_params(c.materialize(t_prime), c.materialize(t_double_prime),
                                             p, s_prime, s_double_prime)
    return StepFidelityReport(C, g1, g2, t_prime, t_double_prime, err)


def initial_overlap(c: CoeffTensor, t0: float, target, mode: str = "exact",
                    s_var: SampleSet | None = None, s_target: SampleSet | None = None) -> StepFidelityReport:
    """C_0: normalized squared overlap of the variational state at t0 with ``target``.

    ``target`` is a dense state vector or an :class:`RbmParams` snapshot.
    Monte Carlo mode needs an RbmParams target plus samples of both states.
    """
    params = c.materialize(t0)
    if mode == "exact":
        C, g = _anchor_dense(DenseState(params), _dense_vector(target))
        return StepFidelityReport(C, None, g, None, t0)
    if mode != "mc":
        raise ConfigError(f"unknown mode {mode!r}")
    if not isinstance(target, RbmParams):
        raise ConfigError("Monte Carlo anchors need a network snapshot as target")
    if s_var is None or s_target is None:
        raise ConfigError("Monte Carlo anchors need samples of both states")
    fv = _factor_mc(s_var, params, target, None)
    ft = _factor_mc(s_target, target, params, None)
    C, g, _, err = _combine_mc(s_var, s_target, fv, ft, "C_0")
    return StepFidelityReport(C, None, g, None, t0, err)


def interval_loss(c: CoeffTensor, t0: float, grid: TimeGrid, p: PropagatorSpec, mode: str = "exact",
                  target=None, *, log_form: bool = True, sampler: ChainConfig | None = None,
                  seed: int = 0, epoch: int = 0, dt: float | None = None, K: int | None = None):
    """Loss to minimize over [t0, t0 + tau] and its coefficient-space gradient.

    Returns ``(loss, grad, diagnostics)``.  With ``log_form`` the loss is
    -sum_k log C_k; otherwise -prod_k C_k.  ``dt`` overrides the grid step
    (it must match the propagator's) and ``K`` the number of steps, so K = 0
    leaves only the anchor term.
    """
    dt = grid.dt if dt is None else dt
    if not np.isclose(dt, p.dt, rtol=1e-12, atol=0.0):
        raise ConfigError(f"propagator step {p.dt} differs from grid step {dt}")
    K = int(round(grid.tau / dt)) if K is None else int(K)
    if K < 0:
        raise ConfigError(f"number of steps must be non-negative, got {K}")
    times = t0 + dt * np.arange(K + 1)

    if mode == "exact":
        values, grad = _interval_dense(c, times, target, *_propagators(p), log_form)
        errors = [0.0] * values.shape[0]
    elif mode == "mc":
        cfg = sampler or ChainConfig()
        reports: list[StepFidelityReport] = []
        params = [c.materialize(t) for t in times]
        sets = [sample(pk, cfg.reseeded(derive_seed(seed, epoch, k)), t)
                for k, (pk, t) in enumerate(zip(params, times))]
        if not isinstance(target, RbmParams):
            raise ConfigError("Monte Carlo mode needs a network snapshot as the interval target")
        s_tgt = sample(target, cfg.reseeded(derive_seed(seed, epoch, K + 1)), t0)
        reports.append(initial_overlap(c, t0, target, "mc", sets[0], s_tgt))
        for k in range(1, K + 1):
            C, g1, g2, err = step_fidelity_mc_params(params[k - 1], params[k], p, sets[k - 1], sets[k])
            reports.append(StepFidelityReport(C, g1, g2, times[k - 1], times[k], err))
        values = np.array([r.value for r in reports])
        grad = assemble_gradient([r.contributions() for r in reports], values, c.window, log_form=log_form)
        errors = [r.statistical_error for r in reports]
    else:
        raise ConfigError(f"unknown mode {mode!r}")

    if log_form:
        loss = -float(np.sum(np.log(values)))
    else:
        loss = -float(np.prod(values))
    diagnostics = {
        "C": values.tolist(),
        "errors": errors,
        "times": times.tolist(),
    }
    return loss, -grad, diagnostics
