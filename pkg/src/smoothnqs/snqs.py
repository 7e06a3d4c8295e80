"""The smooth ansatz: RBM parameters that are Chebyshev polynomials in time.

    vartheta_j(t) = sum_q T_q(r(t)) theta_{j,q}

Gradients of real losses with respect to complex parameters are stored
packed: real part = derivative along Re(z), imaginary part = derivative
along Im(z).  Because the basis values are real, this packing commutes with
the chain rule from vartheta to theta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CollapsedStateError, ConfigError
from .rbm import RbmParams, n_params
from .temporal_basis import WindowSpec, cheb_values, rescale, window_handoff


@dataclass
class CoeffTensor:
    coeffs: np.ndarray
    window: WindowSpec
    L: int
    alpha: int

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        expected = (n_params(self.L, self.alpha), self.window.Q)
        if self.coeffs.shape != expected:
            raise ConfigError(f"coefficient tensor has shape {self.coeffs.shape}, expected {expected}")
        if not np.all(np.isfinite(self.coeffs)):
            raise ConfigError("coefficient tensor has non-finite entries")

    @property
    def Q(self) -> int:
        return self.window.Q

    @property
    def n_params(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def zeros(cls, L: int, alpha: int, window: WindowSpec) -> "CoeffTensor":
        return cls(np.zeros((n_params(L, alpha), window.Q), dtype=np.complex128), window, L, alpha)

    @classmethod
    def initial(cls, L, alpha, window, t0=None, base=None, noise=1e-2, rng=None) -> "CoeffTensor":
        """Tensor whose parameters at ``t0`` equal ``base`` (zeros by default).

        Columns q >= 1 get complex Gaussian noise with rms modulus ``noise``;
        column 0 absorbs their contribution at t0 so the start is exact.
        """
        rng = np.random.default_rng(rng)
        t0 = window.t_start if t0 is None else t0
        N = n_params(L, alpha)
        coeffs = np.zeros((N, window.Q), dtype=np.complex128)
        if window.Q > 1 and noise > 0:
            coeffs[:, 1:] = noise / np.sqrt(2.0) * (rng.standard_normal((N, window.Q - 1))
                                     + 1j * rng.standard_normal((N, window.Q - 1)))
        basis = cheb_values(window.Q, rescale(t0, window))
        target = np.zeros(N, dtype=np.complex128) if base is None else base.flatten()
        coeffs[:, 0] = target - coeffs[:, 1:] @ basis[1:]
        return cls(coeffs, window, L, alpha)

    def copy(self) -> "CoeffTensor":
        return CoeffTensor(self.coeffs.copy(), self.window, self.L, self.alpha)

    def basis(self, times) -> np.ndarray:
        return cheb_values(self.Q, rescale(times, self.window))

    def vectors(self, times) -> np.ndarray:
        """Flattened parameters at each time, shape (len(times), N_p)."""
        return self.basis(np.atleast_1d(times)) @ self.coeffs.T

    def materialize(self, t: float) -> RbmParams:
        return RbmParams.unflatten(self.coeffs @ self.basis(t), self.L, self.alpha)

    def handoff(self, next_window: WindowSpec | None = None) -> "CoeffTensor":
        """Continue into the adjacent window with matched time derivatives."""
        next_window = self.window.next() if next_window is None else next_window
        return CoeffTensor(window_handoff(self.coeffs, self.window, next_window),
                           next_window, self.L, self.alpha)

    def real_view(self) -> np.ndarray:
        return np.stack([self.coeffs.real, self.coeffs.imag])

    def with_real_view(self, view) -> "CoeffTensor":
        return CoeffTensor(view[0] + 1j * view[1], self.window, self.L, self.alpha)


def materialize(c: CoeffTensor, t: float) -> RbmParams:
    return c.materialize(t)


def fidelity_weights(loss_values, log_form: bool = True) -> np.ndarray:
    """d objective / d C_k: 1/C_k for sum log C, prod_{j != k} C_j for prod C."""
    C = np.asarray(loss_values, dtype=np.float64)
    if np.any(~np.isfinite(C)) or np.any(C <= 0):
        raise CollapsedStateError(f"fidelity terms must be positive, got min {C.min() if C.size else None}")
    if log_form:
        return 1.0 / C
    return np.array([np.prod(np.delete(C, k)) for k in range(C.shape[0])])


def chain_rule(grads, times, window: WindowSpec) -> np.ndarray:
    """sum_n grads[n] ⊗ T(r(times[n])): parameter gradients at times -> coefficient gradient."""
    grads = np.asarray(grads, dtype=np.complex128).reshape(len(times), -1)
    return grads.T @ cheb_values(window.Q, rescale(np.asarray(times, dtype=np.float64), window))


def assemble_gradient(per_step, loss_values, window: WindowSpec, log_form: bool = True) -> np.ndarray:
    """Coefficient-space gradient of the interval loss.

    ``per_step[k]`` is a sequence of ``(t, dC_k/dvartheta(t))`` pairs, one for
    every time at which C_k depends on the parameters (two for a propagation
    step, one for the initial anchor).  ``loss_values[k]`` is C_k.

    With ``log_form`` the result is the gradient of sum_k log C_k; otherwise of
    prod_k C_k.  Either way the chain rule contributes g ⊗ T_q(r(t)).
    """
    if len(per_step) != np.shape(loss_values)[0]:
        raise ValueError("per_step and loss_values have different lengths")
    weights = fidelity_weights(loss_values, log_form)
    times, grads = [], []
    for wk, pairs in zip(weights, per_step):
        for t, g in pairs:
            times.append(t)
            grads.append(wk * np.asarray(g))
    if not grads:
        raise ValueError("no gradient contributions")
    return chain_rule(np.array(grads), times, window)
