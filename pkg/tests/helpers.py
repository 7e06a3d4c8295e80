"""Small oracles shared by the tests."""

import numpy as np
import scipy.linalg

from smoothnqs.exact_engine import dense_hamiltonian
from smoothnqs.rbm import RbmParams
from smoothnqs.snqs import CoeffTensor
from smoothnqs.temporal_basis import WindowSpec


def random_params(L, alpha, scale=0.3, seed=0):
    return RbmParams.random(L, alpha, scale, np.random.default_rng(seed))


def random_coeffs(L, alpha, Q, seed=0, scale=0.2, window=None):
    rng = np.random.default_rng(seed)
    N = L + alpha * L + alpha * L * L
    coeffs = scale * (rng.standard_normal((N, Q)) + 1j * rng.standard_normal((N, Q)))
    return CoeffTensor(coeffs, window or WindowSpec(0.0, 1.0, Q), L, alpha)


def dense_taylor(h, dt, order=2):
    """sum_n (-i dt H)^n / n! as a dense matrix."""
    H = dense_hamiltonian(h)
    out = np.eye(H.shape[0], dtype=np.complex128)
    term = np.eye(H.shape[0], dtype=np.complex128)
    for n in range(1, order + 1):
        term = term @ (-1j * dt * H) / n
        out = out + term
    return out


def dense_expm(h, dt):
    return scipy.linalg.expm(-1j * dt * dense_hamiltonian(h))


def central_difference(f, x0, step, points=5):
    """Derivative of scalar f at real x0 from a central stencil."""
    if points == 3:
        return (f(x0 + step) - f(x0 - step)) / (2 * step)
    return (f(x0 - 2 * step) - 8 * f(x0 - step) + 8 * f(x0 + step) - f(x0 + 2 * step)) / (12 * step)


def coefficient_fd_gradient(loss, c: CoeffTensor, step=1e-4):
    """Packed gradient d/dRe + i d/dIm of loss(c) by central differences over every coefficient."""
    out = np.zeros_like(c.coeffs)
    for idx in np.ndindex(*c.coeffs.shape):
        for unit, part in ((1.0, 1.0), (1j, 1j)):
            def f(s, idx=idx, unit=unit):
                cc = c.copy()
                cc.coeffs[idx] += s * unit
                return loss(cc)
            out[idx] += part * central_difference(f, 0.0, step)
    return out
