"""AdamW on the real and imaginary parts of a coefficient tensor."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import NonFiniteGradientError
from .snqs import CoeffTensor


@dataclass
class AdamWState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def for_params(cls, params: CoeffTensor, **hyper) -> "AdamWState":
        shape = (2,) + params.coeffs.shape
        return cls(np.zeros(shape), np.zeros(shape), **hyper)


def adamw_step(state: AdamWState, params: CoeffTensor, grad, lr: float | None = None):
    """One bias-corrected Adam step with decoupled weight decay.

    ``grad`` is the packed gradient (d/dRe + i d/dIm) of the minimized
    objective.  Returns new (state, params); the inputs are not modified.
    """
    grad = np.asarray(grad)
    if grad.shape != params.coeffs.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match parameters {params.coeffs.shape}")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradientError(
            "non-finite gradient", {"step": state.step_count, "bad_entries": int(np.sum(~np.isfinite(grad)))}
        )
    lr = state.learning_rate if lr is None else lr
    g = np.stack([grad.real, grad.imag])
    step = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * g
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    theta = params.real_view()
    if state.weight_decay:
        theta = theta * (1.0 - lr * state.weight_decay)
    theta = theta - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = replace(state, first_moment=m, second_moment=v, step_count=step)
    return new_state, params.with_real_view(theta)


def lr_schedule(epoch: int, base: float, policy: str = "constant", total_epochs: int = 1) -> float:
    """Learning rate at ``epoch``; cosine decays from base to base/100 at epoch total_epochs - 1."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    if policy == "constant":
        return base
    if policy == "cosine":
        floor = base / 100.0
        if total_epochs <= 1:
            return base
        frac = min(epoch, total_epochs - 1) / (total_epochs - 1)
        return floor + 0.5 * (base - floor) * (1.0 + math.cos(math.pi * frac))
    raise ValueError(f"unknown learning-rate policy {policy!r}")
