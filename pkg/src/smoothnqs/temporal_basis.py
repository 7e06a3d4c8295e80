"""Chebyshev temporal basis, time rescaling and window-to-window continuation.

Basis functions are indexed from zero: T_0 = 1, T_1 = r, T_2 = 2r^2 - 1, ...
A window [t_start, t_end] is mapped affinely onto r in [-1, 1]; times outside
the window extrapolate the polynomial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConfigError


@dataclass(frozen=True)
class WindowSpec:
    t_start: float
    t_end: float
    Q: int

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ConfigError(f"degenerate window [{self.t_start}, {self.t_end}]")
        if int(self.Q) != self.Q or self.Q < 1:
            raise ConfigError(f"basis size Q must be a positive integer, got {self.Q}")

    @property
    def width(self) -> float:
        return self.t_end - self.t_start

    @property
    def dr_dt(self) -> float:
        return 2.0 / self.width

    def next(self) -> "WindowSpec":
        """The adjacent window of equal width."""
        return WindowSpec(self.t_end, self.t_end + self.width, self.Q)


def rescale(t, w: WindowSpec):
    """r(t) = 2 (t - t_start) / (t_end - t_start) - 1."""
    return 2.0 * (np.asarray(t, dtype=np.float64) - w.t_start) / w.width - 1.0


def unscale(r, w: WindowSpec):
    return w.t_start + 0.5 * (np.asarray(r, dtype=np.float64) + 1.0) * w.width


def cheb_values(Q: int, r) -> np.ndarray:
    """(T_0(r), ..., T_{Q-1}(r)) along a trailing axis; r may be an array."""
    r = np.asarray(r, dtype=np.float64)
    out = np.empty(r.shape + (Q,))
    out[..., 0] = 1.0
    if Q > 1:
        out[..., 1] = r
    for q in range(1, Q - 1):
        out[..., q + 1] = 2.0 * r * out[..., q] - out[..., q - 1]
    return out


def cheb_derivatives(Q: int, n: int, r, dr_dt: float = 1.0) -> np.ndarray:
    """n-th time derivatives of T_0..T_{Q-1} at r, including the factor dr_dt**n.

    Uses the differentiated recurrence
    T_{q+1}^(n) = 2 r T_q^(n) + 2 n T_q^(n-1) - T_{q-1}^(n).
    """
    if n < 0:
        raise ValueError("derivative order must be non-negative")
    prev = cheb_values(Q, r)
    r = np.asarray(r, dtype=np.float64)
    for m in range(1, n + 1):
        cur = np.zeros_like(prev)
        if Q > 1:
            cur[..., 1] = 1.0 if m == 1 else 0.0
        for q in range(1, Q - 1):
            cur[..., q + 1] = 2.0 * r * cur[..., q] + 2.0 * m * prev[..., q] - cur[..., q - 1]
        prev = cur
    return prev * dr_dt**n


def derivative_matrix(Q: int, r: float, dr_dt: float) -> np.ndarray:
    """D[n, q] = d^n T_q / dt^n at r for n, q in 0..Q-1."""
    return np.stack([cheb_derivatives(Q, n, r, dr_dt) for n in range(Q)])


def window_handoff(theta_prev, w_prev: WindowSpec, w_next: WindowSpec) -> np.ndarray:
    """Coefficients in ``w_next`` whose 0..Q-1 time derivatives match ``theta_prev`` at the seam.

    ``theta_prev`` has the basis index on its last axis.  The seam is
    ``w_prev.t_end`` and must coincide with ``w_next.t_start``.  Row n of the
    new-window derivative matrix vanishes for q < n, so the system is solved
    top-down by back substitution.
    """
    if w_prev.Q != w_next.Q:
        raise ConfigError(f"basis sizes differ across windows: {w_prev.Q} vs {w_next.Q}")
    if not math.isclose(w_prev.t_end, w_next.t_start, rel_tol=1e-12, abs_tol=1e-12):
        raise ConfigError(f"windows are not contiguous: {w_prev.t_end} vs {w_next.t_start}")
    theta_prev = np.asarray(theta_prev)
    if theta_prev.shape[-1] != w_prev.Q:
        raise ConfigError(f"coefficients have {theta_prev.shape[-1]} basis columns, window has Q={w_prev.Q}")
    Q = w_prev.Q
    old = derivative_matrix(Q, 1.0, w_prev.dr_dt)
    new = derivative_matrix(Q, -1.0, w_next.dr_dt)
    flat = theta_prev.reshape(-1, Q)
    rhs = old @ flat.T
    solved = solve_triangular(new, rhs, lower=False)
    return solved.T.reshape(theta_prev.shape)


@dataclass(frozen=True)
class TimeGrid:
    """Nested time scales: step dt, optimization interval tau, basis window T, final time t_max."""

    dt: float
    tau: float
    T: float
    t_max: float

    def __post_init__(self):
        problems = grid_violations(self.dt, self.tau, self.T, self.t_max)
        if problems:
            raise ConfigError(problems)

    @property
    def K(self) -> int:
        return int(round(self.tau / self.dt))

    @property
    def intervals_per_window(self) -> int:
        return int(round(self.T / self.tau))

    @property
    def n_intervals(self) -> int:
        return int(round(self.t_max / self.tau))

    @property
    def n_steps(self) -> int:
        return self.n_intervals * self.K

    def interval_start(self, m: int) -> float:
        return float(self.dt * (m * self.K))

    def interval_times(self, m: int) -> np.ndarray:
        """t_0 .. t_K of interval m, as dt times the global step index."""
        return self.dt * (m * self.K + np.arange(self.K + 1))

    def window_index(self, m: int) -> int:
        """0-based index of the window containing interval m."""
        return m // self.intervals_per_window

    def window(self, index: int, Q: int) -> WindowSpec:
        return WindowSpec(index * self.T, (index + 1) * self.T, Q)

    def with_dt(self, dt: float) -> "TimeGrid":
        return TimeGrid(dt, self.tau, self.T, self.t_max)


def is_multiple(a: float, b: float, tol: float = 1e-9) -> bool:
    ratio = a / b
    return abs(ratio - round(ratio)) <= tol * max(1.0, abs(ratio))


def grid_violations(dt, tau, T, t_max) -> list[str]:
    out = []
    for name, val in (("dt", dt), ("tau", tau), ("T", T)):
        if not val > 0:
            out.append(f"grid.{name} = {val} must be positive")
    if t_max < 0:
        out.append(f"grid.t_max = {t_max} must be non-negative")
    if out:
        return out
    if not is_multiple(tau, dt):
        out.append(f"grid.tau = {tau} is not an integer multiple of grid.dt = {dt}")
    if not is_multiple(T, tau):
        out.append(f"grid.T = {T} is not an integer multiple of grid.tau = {tau}")
    if t_max > 0 and not is_multiple(t_max, tau):
        out.append(f"grid.t_max = {t_max} is not an integer multiple of grid.tau = {tau}")
    return out
