"""Acceptance criteria, each run at its stated tolerance.

Every test prints exactly one ``PASS criterion n: ...`` or
``FAIL criterion n: ...`` line; the lines are repeated in the pytest
terminal summary under "acceptance criteria".  Criteria 5 and 6 share
their s-NQS runs.  Criterion 9 is the full-scale run and only executes
with ``--run-full-scale``.

    pytest tests/test_acceptance.py -s
"""

import itertools
import time
from functools import lru_cache

import numpy as np
import pytest
from scipy.stats import chisquare

from smoothnqs.cli import load_config_text
from smoothnqs.config import parse_config
from smoothnqs.driver import exact_trajectory, predict_untrained, ptvmc_baseline, run_evolution
from smoothnqs.exact_engine import build_initial_state, densify_rbm, exact_unitary, infidelity
from smoothnqs.loss import initial_overlap, interval_loss, step_fidelity_exact, step_fidelity_mc
from smoothnqs.propagator import PropagatorSpec, taylor_matrix
from smoothnqs.sampler import ChainConfig, derive_seed, sample
from smoothnqs.snqs import CoeffTensor
from smoothnqs.spin_model import HamiltonianSpec
from smoothnqs.temporal_basis import TimeGrid, WindowSpec, derivative_matrix, window_handoff

from helpers import coefficient_fd_gradient, random_coeffs, random_params

SEEDS = range(5)
Q_LADDER = (2, 3, 5, 7)


def desk_config(**changes):
    """L = 6, alpha = 5, hx = hz = 0.3, dt = 0.01, tau = 0.1, exact sums, evolved to t = 1.0."""
    return parse_config(load_config_text("desk")).replace(**changes)


@lru_cache(maxsize=None)
def desk_run(Q: int, seed: int):
    t = time.perf_counter()
    rec = run_evolution(desk_config(Q=Q, seed=seed))
    return rec.final_infidelity(), time.perf_counter() - t


@lru_cache(maxsize=None)
def desk_baseline(seed: int):
    t = time.perf_counter()
    rec = ptvmc_baseline(desk_config(seed=seed))
    return rec.final_infidelity(), time.perf_counter() - t


@pytest.mark.criterion(1)
def test_criterion_1_gradient_matches_finite_differences(verdict):
    start = time.perf_counter()
    worst, count = 0.0, 0
    for i, (L, Q, K) in enumerate(itertools.product((2, 3, 4), (1, 2, 3), (0, 1, 3))):
        rng = np.random.default_rng(100 + i)
        dt = 0.05
        tau = max(K, 1) * dt
        grid = TimeGrid(dt, tau, 4 * tau, 4 * tau)
        prop = PropagatorSpec(dt, HamiltonianSpec(L, 1.0, 0.3, 0.3))
        c = random_coeffs(L, 1, Q, seed=200 + i, scale=0.3, window=WindowSpec(0.0, 4 * tau, Q))
        target = rng.standard_normal(2 ** L) + 1j * rng.standard_normal(2 ** L)

        def loss(cc):
            return interval_loss(cc, tau, grid, prop, "exact", target, K=K)[0]

        _, grad, _ = interval_loss(c, tau, grid, prop, "exact", target, K=K)
        fd = coefficient_fd_gradient(loss, c)
        # every real component: d/dRe in the real part, d/dIm in the imaginary part
        a = np.concatenate([grad.real.ravel(), grad.imag.ravel()])
        b = np.concatenate([fd.real.ravel(), fd.imag.ravel()])
        worst = max(worst, float(np.max(np.abs(a - b) / np.abs(b))))
        count += 1
    elapsed = time.perf_counter() - start
    verdict(1, count >= 20 and worst <= 1e-6 and elapsed <= 60,
            f"{count} instances, worst componentwise relative error {worst:.2e} (<= 1e-6), {elapsed:.1f} s (<= 60 s)")


@pytest.mark.criterion(2)
def test_criterion_2_taylor_order_two(verdict):
    start = time.perf_counter()
    ratios = []
    for L in (4, 6, 8):
        h = HamiltonianSpec(L, 1.0, 0.3, 0.3)
        err = [np.linalg.norm(taylor_matrix(PropagatorSpec(dt, h, 2)).toarray() - exact_unitary(h, dt), 2)
               for dt in (0.02, 0.01, 0.005)]
        ratios += [err[0] / err[1], err[1] / err[2]]
    elapsed = time.perf_counter() - start
    ok = all(7 <= r <= 9 for r in ratios) and elapsed <= 60
    verdict(2, ok, f"error ratios {min(ratios):.4f}..{max(ratios):.4f} (in [7, 9]) for L = 4, 6, 8, "
                   f"{elapsed:.1f} s (<= 60 s)")


@pytest.mark.criterion(3)
def test_criterion_3_window_handoff(verdict):
    rng = np.random.default_rng(3)
    theta = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
    w1 = WindowSpec(0.0, 2.0, 3)
    out = window_handoff(theta, w1, w1.next())
    t1, t2, t3 = theta.T
    expected = np.stack([t1 + 2 * t2 + 8 * t3, t2 + 8 * t3, t3], axis=1)
    worked = float(np.abs(out - expected).max())
    seam = 0.0
    for Q in range(1, 8):
        for trial in range(5):
            theta = rng.standard_normal((8, Q)) + 1j * rng.standard_normal((8, Q))
            w = WindowSpec(0.0, 2.0, Q)
            new = window_handoff(theta, w, w.next())
            left = derivative_matrix(Q, 1.0, w.dr_dt) @ theta.T
            right = derivative_matrix(Q, -1.0, w.next().dr_dt) @ new.T
            seam = max(seam, float(np.abs(left - right).max()))
    verdict(3, worked <= 1e-12 and seam <= 1e-8,
            f"Q=3 worked transform off by {worked:.1e}; value and derivatives 1..Q-1 match to {seam:.1e} "
            f"(<= 1e-8) for Q = 1..7")


@pytest.mark.criterion(4)
def test_criterion_4_exact_start(verdict):
    worst_inf, worst_c0 = 0.0, 0.0
    for L in range(1, 9):
        c = CoeffTensor.zeros(L, 2, WindowSpec(0.0, 2.0, 3))
        phi = build_initial_state(L)
        for t0 in (0.0, 0.7, 2.0):
            worst_inf = max(worst_inf, infidelity(densify_rbm(c.materialize(t0)), phi))
            worst_c0 = max(worst_c0, abs(initial_overlap(c, t0, phi).value - 1.0))
    verdict(4, worst_inf <= 1e-12 and worst_c0 <= 1e-12,
            f"zero tensor: infidelity {worst_inf:.1e} (<= 1e-12), |C0 - 1| = {worst_c0:.1e} for L = 1..8")


@pytest.mark.criterion(5)
@pytest.mark.slow
def test_criterion_5_desk_scale_infidelity(verdict):
    results = {(Q, s): desk_run(Q, s) for Q in Q_LADDER for s in SEEDS}
    inf = {Q: [results[Q, s][0] for s in SEEDS] for Q in Q_LADDER}
    elapsed = sum(r[1] for r in results.values())
    medians = [float(np.median(inf[Q])) for Q in Q_LADDER]
    monotone = all(b <= a for a, b in zip(medians, medians[1:]))
    q3, q7 = max(inf[3]), max(inf[7])
    ok = q3 <= 1e-2 and q7 <= 1e-3 and monotone and elapsed <= 1800
    med = ", ".join(f"Q={Q}: {m:.2e}" for Q, m in zip(Q_LADDER, medians))
    verdict(5, ok, f"worst seed Q=3 {q3:.2e} (<= 1e-2), Q=7 {q7:.2e} (<= 1e-3); medians {med} "
                   f"({'non-increasing' if monotone else 'NOT non-increasing'}); {elapsed / 60:.1f} min (<= 30)")


@pytest.mark.criterion(6)
@pytest.mark.slow
def test_criterion_6_beats_step_by_step_baseline(verdict):
    wins, details, elapsed = 0, [], 0.0
    for s in SEEDS:
        snqs, t1 = desk_run(7, s)
        base, t2 = desk_baseline(s)
        elapsed += t1 + t2
        wins += snqs < base
        details.append(f"{snqs:.1e}/{base:.1e}")
    verdict(6, wins >= 4 and elapsed <= 2700,
            f"Q=7 below baseline in {wins}/5 seeds (>= 4); s-NQS/baseline {' '.join(details)}; "
            f"{elapsed / 60:.1f} min (<= 45)")


@pytest.mark.criterion(7)
@pytest.mark.slow
def test_criterion_7_monte_carlo_consistency(verdict):
    start = time.perf_counter()
    L = 8
    c = random_coeffs(L, 1, 3, seed=7, scale=0.2, window=WindowSpec(0.0, 1.0, 3))
    prop = PropagatorSpec(0.01, HamiltonianSpec(L, 1.0, 0.3, 0.3))
    t1, t2 = 0.3, 0.31
    exact = step_fidelity_exact(c, t1, t2, prop).value
    cfg = ChainConfig(64, 64, 100, 2)  # 2^12 samples per factor
    hits = 0
    for trial in range(100):
        s1 = sample(c.materialize(t1), cfg.reseeded(derive_seed(trial, 0)), t1)
        s2 = sample(c.materialize(t2), cfg.reseeded(derive_seed(trial, 1)), t2)
        rep = step_fidelity_mc(c, t1, t2, prop, s1, s2)
        hits += abs(rep.value - exact) <= 3 * rep.statistical_error

    p = random_params(6, 2, scale=0.3, seed=12)
    prob = np.abs(densify_rbm(p)) ** 2
    prob /= prob.sum()
    s = sample(p, ChainConfig(4000, 250, 50, 4, seed=7))
    counts = np.bincount(s.flat_codes, minlength=64)
    pvalue = chisquare(counts, prob * counts.sum()).pvalue
    elapsed = time.perf_counter() - start
    verdict(7, hits >= 99 and pvalue > 1e-3 and elapsed <= 600,
            f"{hits}/100 trials within 3 SE (>= 99) at L=8; chi-square p = {pvalue:.3f} (> 1e-3) over "
            f"{counts.sum()} samples at L=6; {elapsed / 60:.1f} min (<= 10)")


@pytest.mark.criterion(8)
@pytest.mark.slow
def test_criterion_8_untrained_prediction(verdict):
    start = time.perf_counter()
    cfg = desk_config(Q=3, t_max=0.1)
    rec = run_evolution(cfg)
    c = rec.checkpoints[1].coeffs
    times = cfg.dt * np.arange(10, 41)
    rows = predict_untrained(c, times, (0.0, cfg.tau), HamiltonianSpec(cfg.L, cfg.J, cfg.hx, cfg.hz))
    at_tau = rows[0].infidelity
    beyond = max(r.infidelity for r in rows[1:])
    elapsed = time.perf_counter() - start
    verdict(8, beyond <= 10 * at_tau and elapsed <= 300,
            f"I(tau) = {at_tau:.2e}, max over (tau, 4 tau] = {beyond:.2e}, ratio {beyond / at_tau:.0f} (<= 10); "
            f"{elapsed:.0f} s (<= 300)")


@pytest.mark.criterion(9)
@pytest.mark.full_scale
def test_criterion_9_two_window_full_scale(verdict):
    start = time.perf_counter()
    cfg = parse_config(load_config_text("fig2")).replace(Q=7)
    rec = run_evolution(cfg)
    exact = {round(r.t, 9): r.sx_mid for r in exact_trajectory(cfg).rows}
    dev = max(abs(r.sx_mid - exact[round(r.t, 9)]) for r in rec.rows)
    windows = sorted(rec.checkpoints)
    elapsed = time.perf_counter() - start
    verdict(9, windows == [1, 2] and len(rec.rows) == 221 and dev <= 0.02,
            f"L=10, Q=7, windows {windows}, {len(rec.rows)} rows to t = 2.2; max |sx - exact| = {dev:.2e} "
            f"(<= 0.02); {elapsed / 3600:.2f} h")
