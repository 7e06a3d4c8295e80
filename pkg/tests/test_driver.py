import numpy as np
import pytest

from smoothnqs.config import RunConfig
from smoothnqs.driver import (TrainSettings, predict_untrained, ptvmc_baseline, refine_timestep, run_evolution,
                              seam_mismatch, train_interval)
from smoothnqs.exact_engine import build_initial_state
from smoothnqs.loss import interval_loss
from smoothnqs.propagator import PropagatorSpec
from smoothnqs.rbm import n_params
from smoothnqs.snqs import CoeffTensor
from smoothnqs.spin_model import HamiltonianSpec
from smoothnqs.temporal_basis import TimeGrid, WindowSpec

from helpers import random_coeffs

H6 = HamiltonianSpec(6, 1.0, 0.3, 0.3)
GRID6 = TimeGrid(0.01, 0.1, 2.0, 1.0)


def tiny_config(**kw):
    base = dict(L=2, hx=0.3, hz=0.3, alpha=1, Q=3, dt=0.01, tau=0.02, T=0.04, t_max=0.08, epochs=30)
    base.update(kw)
    return RunConfig(**base)


def fresh(L=6, alpha=5, Q=3, grid=GRID6, seed=0):
    return CoeffTensor.initial(L, alpha, grid.window(0, Q), t0=0.0, noise=1e-2, rng=seed)


def test_first_interval_reaches_small_loss():
    c, trace = train_interval(fresh(), 0.0, GRID6, PropagatorSpec(0.01, H6), "exact", build_initial_state(6),
                              TrainSettings(epochs=2000))
    assert trace.final_loss <= 1e-6
    assert len(trace.final_C) == GRID6.K + 1


def test_zero_length_interval_matches_target():
    c0 = CoeffTensor.zeros(6, 5, GRID6.window(0, 3))
    c, trace = train_interval(c0, 0.0, GRID6, PropagatorSpec(0.01, H6), "exact", build_initial_state(6),
                              TrainSettings(epochs=20), K=0)
    assert len(trace.final_C) == 1
    assert trace.final_C[0] >= 1 - 1e-10


def test_identical_seed_reproduces_epoch_trace():
    args = (0.0, GRID6, PropagatorSpec(0.01, H6), "exact", build_initial_state(6), TrainSettings(epochs=40))
    c1, t1 = train_interval(fresh(seed=3), *args)
    c2, t2 = train_interval(fresh(seed=3), *args)
    assert t1.losses == t2.losses
    assert np.array_equal(c1.coeffs, c2.coeffs)


def test_off_grid_prediction_is_continuous():
    c = random_coeffs(4, 2, 3, seed=1, scale=0.3, window=WindowSpec(0.0, 1.0, 3))
    dt = 0.01
    t0 = 0.3
    rows = predict_untrained(c, [t0 + dt, t0 + 1.5 * dt, t0 + 2 * dt])
    lo, mid, hi = (r.sx_mid for r in rows)
    bound = abs(hi - lo) + 1e-3
    assert min(lo, hi) - bound <= mid <= max(lo, hi) + bound
    assert not any(r.extrapolated for r in rows)


def test_prediction_flags_extrapolated_rows():
    c = random_coeffs(3, 1, 2, seed=0)
    rows = predict_untrained(c, [0.05, 0.1, 0.15], trained_range=(0.0, 0.1))
    assert [r.extrapolated for r in rows] == [False, False, True]


def test_prediction_beyond_window_equals_handoff_evaluation():
    w = WindowSpec(0.0, 0.5, 4)
    c = random_coeffs(3, 2, 4, seed=2, scale=0.2, window=w)
    nxt = c.handoff(w.next())
    times = [0.55, 0.7, 0.9]
    a = predict_untrained(c, times)
    b = predict_untrained(nxt, times)
    for ra, rb in zip(a, b):
        assert abs(ra.sx_mid - rb.sx_mid) <= 1e-10
    for t in times:
        assert np.allclose(c.materialize(t).flatten(), nxt.materialize(t).flatten(), rtol=0, atol=1e-10)


def test_prediction_reports_infidelity_against_exact():
    c = CoeffTensor.zeros(4, 1, WindowSpec(0.0, 1.0, 2))
    h = HamiltonianSpec(4, 1.0, 0.3, 0.3)
    rows = predict_untrained(c, [0.0, 0.2], hamiltonian=h)
    assert rows[0].infidelity <= 1e-12
    assert rows[0].sx_mid == pytest.approx(1.0, abs=1e-12)
    assert rows[1].infidelity > 0


def test_tmax_zero_gives_single_initial_row():
    rec = run_evolution(tiny_config(t_max=0.0))
    assert len(rec.rows) == 1
    assert rec.rows[0].t == 0.0
    assert rec.rows[0].sx_mid == pytest.approx(1.0, abs=1e-12)
    assert rec.rows[0].infidelity <= 1e-12


def test_run_rows_cover_grid_and_eval_times():
    cfg = tiny_config(t_max=0.04, eval_times=(0.015, 0.5))
    rec = run_evolution(cfg)
    ts = [r.t for r in rec.rows]
    assert np.all(np.diff(ts) > 0)
    assert np.allclose(ts, [0.0, 0.01, 0.015, 0.02, 0.03, 0.04])
    assert all(r.infidelity is not None for r in rec.rows)
    assert len(rec.interval_losses) == 2


def test_two_window_run_is_continuous_at_seam():
    rec = run_evolution(tiny_config())
    assert [s["window"] for s in rec.seam_checks] == [2]
    assert rec.seam_checks[0]["t"] == pytest.approx(0.04)
    assert rec.seam_checks[0]["mismatch"] <= 1e-9
    assert sorted(rec.checkpoints) == [1, 2]
    ck1, ck2 = rec.checkpoints[1], rec.checkpoints[2]
    assert (ck1.trained_start, ck1.trained_end, ck1.next_interval) == (0.0, pytest.approx(0.04), 2)
    assert ck2.coeffs.window.t_start == pytest.approx(0.04)
    assert ck2.trained_end == pytest.approx(0.08)


def test_seam_mismatch_detects_discontinuity():
    w = WindowSpec(0.0, 1.0, 3)
    c = random_coeffs(2, 1, 3, seed=4, window=w)
    good = c.handoff(w.next())
    assert seam_mismatch(c, good) <= 1e-12
    bad = good.copy()
    bad.coeffs[:, 2] += 0.1
    assert seam_mismatch(c, bad) > 1e-3


def test_run_is_deterministic():
    cfg = tiny_config(seed=5)
    a, b = run_evolution(cfg), run_evolution(cfg)
    assert [(r.t, r.sx_mid, r.infidelity) for r in a.rows] == [(r.t, r.sx_mid, r.infidelity) for r in b.rows]
    assert np.array_equal(a.checkpoints[2].coeffs.coeffs, b.checkpoints[2].coeffs.coeffs)


def test_coarse_start_beats_fresh_initialization():
    coarse = GRID6.with_dt(0.02)
    target = build_initial_state(6)
    c0 = fresh()
    cc, _ = train_interval(c0, 0.0, coarse, PropagatorSpec(0.02, H6), "exact", target, TrainSettings(epochs=500))
    fine_prop = PropagatorSpec(0.01, H6)
    loss_fresh = interval_loss(c0, 0.0, GRID6, fine_prop, "exact", target)[0]
    loss_warm = interval_loss(cc, 0.0, GRID6, fine_prop, "exact", target)[0]
    assert loss_warm <= loss_fresh / 10


def test_refine_keeps_coefficients_and_rejects_bad_grids():
    target = build_initial_state(6)
    c0 = fresh()
    out, trace = refine_timestep(c0, 0.0, GRID6, GRID6, PropagatorSpec(0.01, H6), "exact", target,
                                 TrainSettings(epochs=0))
    assert np.array_equal(out.coeffs, c0.coeffs)
    assert trace.epochs == 0
    with pytest.raises(ValueError):
        refine_timestep(c0, 0.0, GRID6.with_dt(0.02), TimeGrid(0.03, 0.03, 0.03, 0.03),
                        PropagatorSpec(0.03, H6), "exact", target, TrainSettings(epochs=0))


def test_halving_dt_doubles_loss_terms():
    coarse = GRID6.with_dt(0.02)
    assert GRID6.K == 2 * coarse.K
    target = build_initial_state(6)
    c = fresh()
    d_coarse = interval_loss(c, 0.0, coarse, PropagatorSpec(0.02, H6), "exact", target)[2]
    d_fine = interval_loss(c, 0.0, GRID6, PropagatorSpec(0.01, H6), "exact", target)[2]
    assert len(d_coarse["C"]) == coarse.K + 1
    assert len(d_fine["C"]) == GRID6.K + 1


def test_baseline_trivial_chain_stays_exact():
    # zero Hamiltonian: every step propagator is the identity, as for a zero step
    cfg = tiny_config(J=0.0, hx=0.0, hz=0.0, t_max=0.04, epochs=300)
    rec = ptvmc_baseline(cfg)
    assert len(rec.rows) == 5
    assert max(r.infidelity for r in rec.rows) <= 1e-8
    assert all(r.sx_mid == pytest.approx(1.0, abs=1e-6) for r in rec.rows)


def test_parameter_accounting():
    cfg = tiny_config()
    Np = n_params(cfg.L, cfg.alpha)
    run = run_evolution(cfg)
    base = ptvmc_baseline(cfg.replace(epochs=5))
    steps = round(cfg.t_max / cfg.dt)
    assert run.parameter_counts["snqs_per_window"] == cfg.Q * Np
    assert run.parameter_counts["ptvmc_equivalent"] == steps * Np
    assert base.parameter_counts["ptvmc_total"] == steps * Np
    assert base.parameter_counts["snqs_per_window"] == cfg.Q * Np


def test_baseline_tracks_exact_evolution_briefly():
    cfg = RunConfig(L=4, hx=0.3, hz=0.3, alpha=2, Q=1, dt=0.01, tau=0.01, T=0.05, t_max=0.05, epochs=300)
    rec = ptvmc_baseline(cfg)
    assert [r.t for r in rec.rows] == pytest.approx([0.0, 0.01, 0.02, 0.03, 0.04, 0.05])
    assert rec.rows[-1].infidelity < 1e-3
