"""Time evolution: interval training, window continuation, observables and the per-step baseline."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import CollapsedStateError, NonFiniteGradientError, TrainingAborted
from .exact_engine import MAX_DENSE_L, build_initial_state, densify_rbm, exact_states, infidelity, sx_mid
from .loss import interval_loss, step_fidelity_mc_params, step_fidelity_params
from .optimizer import AdamWState, adamw_step, lr_schedule
from .output import Checkpoint, emit_outputs, write_checkpoint
from .propagator import PropagatorSpec
from .rbm import RbmParams, n_params
from .sampler import ChainConfig, derive_seed, estimate_observable, sample, sigma_x_estimator
from .snqs import CoeffTensor
from .spin_model import HamiltonianSpec, middle_site
from .temporal_basis import TimeGrid, WindowSpec, derivative_matrix

log = logging.getLogger(__name__)

# stream identifiers mixed into derived seeds
_INIT, _TRAIN, _OBSERVE, _BASELINE = 1, 2, 3, 4


@dataclass
class Row:
    t: float
    sx_mid: float
    infidelity: float | None = None
    extrapolated: bool = False


@dataclass
class TrainSettings:
    epochs: int = 500
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    schedule: str = "constant"
    patience: int = 200
    tol: float = 1e-8
    rel_tol: float = 1e-10
    log_form: bool = True

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "TrainSettings":
        return cls(cfg.epochs, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay, cfg.schedule,
                   cfg.patience, cfg.tol, cfg.rel_tol, cfg.loss_form == "log")

    def new_state(self, params: CoeffTensor) -> AdamWState:
        return AdamWState.for_params(params, learning_rate=self.lr, beta1=self.beta1, beta2=self.beta2,
                                     epsilon=self.eps, weight_decay=self.weight_decay)


@dataclass
class IntervalTrace:
    losses: list = field(default_factory=list)
    stopped: str = "budget"
    final_loss: float = float("nan")
    final_C: list = field(default_factory=list)

    @property
    def epochs(self) -> int:
        return len(self.losses)


@dataclass
class RunRecord:
    method: str
    config: RunConfig
    rows: list = field(default_factory=list)
    interval_losses: list = field(default_factory=list)
    checkpoints: dict = field(default_factory=dict)
    seam_checks: list = field(default_factory=list)
    parameter_counts: dict = field(default_factory=dict)
    aborted: str | None = None

    @property
    def middle_site(self) -> int:
        return middle_site(self.config.L)

    def final_infidelity(self) -> float | None:
        return self.rows[-1].infidelity if self.rows else None


def _optimize(loss_fn, params: CoeffTensor, settings: TrainSettings, keep_best: bool = True):
    """Generic AdamW loop shared by interval training and the baseline."""
    trace = IntervalTrace()
    state = settings.new_state(params)
    best = (np.inf, params, None)
    running_min = []  # lowest loss seen up to each epoch
    current = params
    for epoch in range(settings.epochs + 1):
        try:
            loss, grad, diag = loss_fn(current, epoch)
        except CollapsedStateError as exc:
            raise TrainingAborted(f"collapsed state at epoch {epoch}: {exc}", best[1], exc) from exc
        if keep_best and loss < best[0]:
            best = (loss, current, diag)
        if not keep_best:
            best = (loss, current, diag)
        if epoch == settings.epochs:
            break
        trace.losses.append(loss)
        running_min.append(min(loss, running_min[-1]) if running_min else loss)
        if loss < settings.tol:
            trace.stopped = "tol"
            break
        if epoch >= settings.patience:
            ref = running_min[epoch - settings.patience]
            if ref - running_min[-1] <= settings.rel_tol * abs(ref):
                trace.stopped = "stall"
                break
        lr = lr_schedule(epoch, settings.lr, settings.schedule, settings.epochs)
        try:
            state, current = adamw_step(state, current, grad, lr)
        except NonFiniteGradientError as exc:
            raise TrainingAborted(f"non-finite gradient at epoch {epoch}", best[1], exc) from exc
    trace.final_loss = float(best[0])
    trace.final_C = list(best[2]["C"]) if best[2] else []
    return best[1], trace


def train_interval(c: CoeffTensor, t0: float, grid: TimeGrid, prop: PropagatorSpec, mode: str, target,
                   settings: TrainSettings, sampler: ChainConfig | None = None, seed: int = 0,
                   K: int | None = None):
    """Fit the coefficients to [t0, t0 + tau] by minimizing the interval loss.

    ``target`` is the state at t0 (dense vector or RbmParams) and must not
    change during training.  Returns (coefficients, trace); in exact mode the
    coefficients are those with the lowest loss seen.
    """
    def loss_fn(cc, epoch):
        return interval_loss(cc, t0, grid, prop, mode, target, log_form=settings.log_form,
                             sampler=sampler, seed=seed, epoch=epoch, K=K)

    return _optimize(loss_fn, c, settings, keep_best=(mode == "exact"))


def refine_timestep(c: CoeffTensor, t0: float, coarse: TimeGrid, fine: TimeGrid, prop_fine: PropagatorSpec,
                    mode: str, target, settings: TrainSettings, sampler=None, seed: int = 0):
    """Retrain coarse-grid coefficients on a finer step; the coefficients carry over unchanged."""
    if not (fine.dt <= coarse.dt and abs(coarse.dt / fine.dt - round(coarse.dt / fine.dt)) < 1e-9):
        raise ValueError(f"fine step {fine.dt} does not divide coarse step {coarse.dt}")
    return train_interval(c, t0, fine, prop_fine, mode, target, settings, sampler, seed)


def _observe(params: RbmParams, exact_state=None, sampler: ChainConfig | None = None, seed: int = 0):
    """(sx_mid, infidelity) with dense evaluation when the basis is enumerable."""
    if params.L <= MAX_DENSE_L:
        v = densify_rbm(params)
        inf = infidelity(exact_state, v) if exact_state is not None else None
        return sx_mid(v), inf
    cfg = (sampler or ChainConfig()).reseeded(seed)
    mean, _ = estimate_observable(sample(params, cfg), params, sigma_x_estimator(middle_site(params.L)))
    return mean.real, None


def predict_untrained(c: CoeffTensor, times, trained_range=None, hamiltonian: HamiltonianSpec | None = None,
                      sampler: ChainConfig | None = None, seed: int = 0) -> list[Row]:
    """Observables from the current coefficients at arbitrary times.

    Rows outside ``trained_range`` (t_lo, t_hi) are flagged extrapolated.
    Infidelity is reported when ``hamiltonian`` is given and L <= 14, with
    the exact state evolved from the paramagnetic state at t = 0.
    """
    times = np.asarray(times, dtype=np.float64)
    exact = None
    if hamiltonian is not None and c.L <= MAX_DENSE_L:
        exact = exact_states(hamiltonian, times)
    rows = []
    for i, t in enumerate(times):
        sx, inf = _observe(c.materialize(t), None if exact is None else exact[i], sampler,
                           derive_seed(seed, _OBSERVE, i))
        extrap = False
        if trained_range is not None:
            extrap = bool(t < trained_range[0] - 1e-12 or t > trained_range[1] + 1e-12)
        rows.append(Row(float(t), sx, inf, extrap))
    return rows


def seam_mismatch(old: CoeffTensor, new: CoeffTensor) -> float:
    """Largest relative mismatch of derivatives 0..Q-1 of the parameters at the seam."""
    Q = old.Q
    d_old = derivative_matrix(Q, 1.0, old.window.dr_dt) @ old.coeffs.T
    d_new = derivative_matrix(Q, -1.0, new.window.dr_dt) @ new.coeffs.T
    scale = max(1.0, float(np.abs(d_old).max()))
    return float(np.abs(d_old - d_new).max() / scale)


def _settings(cfg: RunConfig, settings: TrainSettings | None) -> TrainSettings:
    return TrainSettings.from_config(cfg) if settings is None else settings


def _hamiltonian(cfg: RunConfig) -> HamiltonianSpec:
    return HamiltonianSpec(cfg.L, cfg.J, cfg.hx, cfg.hz)


def _sampler(cfg: RunConfig) -> ChainConfig:
    return ChainConfig(cfg.n_chains, cfg.n_samples, cfg.burn_in, cfg.thinning, cfg.seed)


def _grid(cfg: RunConfig) -> TimeGrid:
    return TimeGrid(cfg.dt, cfg.tau, cfg.T, cfg.t_max)


def _interval_rows(cfg, c, times, extra, h, sampler, oracle, seed_base):
    times = np.union1d(times, extra)
    exact = exact_states(h, times) if oracle else None
    out = []
    for i, t in enumerate(times):
        sx, inf = _observe(c.materialize(t), None if exact is None else exact[i], sampler,
                           derive_seed(seed_base, i))
        out.append(Row(float(t), sx, inf, False))
    return out


def run_evolution(cfg: RunConfig, settings: TrainSettings | None = None, out_dir=None,
                  resume: Checkpoint | None = None, prior_rows=None, prior_losses=None) -> RunRecord:
    """Train interval after interval across all windows up to t_max.

    With ``out_dir`` each window's checkpoint is written as soon as that
    window is finished.  ``resume`` continues from a checkpoint; the rows and
    losses from before it are taken from ``prior_rows`` / ``prior_losses``.
    """
    settings = _settings(cfg, settings)
    grid, h = _grid(cfg), _hamiltonian(cfg)
    prop = PropagatorSpec(cfg.dt, h, cfg.order)
    sampler = _sampler(cfg)
    oracle = cfg.L <= MAX_DENSE_L
    coarse = grid.with_dt(cfg.coarse_dt) if cfg.coarse_dt and cfg.coarse_dt != cfg.dt else None
    coarse_prop = PropagatorSpec(cfg.coarse_dt, h, cfg.order) if coarse else None
    Np = n_params(cfg.L, cfg.alpha)
    record = RunRecord("snqs", cfg, parameter_counts={
        "N_p": Np, "Q": cfg.Q, "snqs_per_window": cfg.Q * Np,
        "windows": max(1, grid.window_index(max(grid.n_intervals - 1, 0)) + 1),
        "ptvmc_equivalent": grid.n_steps * Np, "steps": grid.n_steps,
    })

    if resume is None:
        c = CoeffTensor.initial(cfg.L, cfg.alpha, grid.window(0, cfg.Q), t0=0.0, noise=cfg.init_noise,
                                rng=derive_seed(cfg.seed, _INIT))
        start = 0
        sx0, inf0 = _observe(c.materialize(0.0), build_initial_state(cfg.L) if oracle else None,
                             sampler, derive_seed(cfg.seed, _OBSERVE, 0))
        record.rows.append(Row(0.0, sx0, inf0, False))
    else:
        c = resume.coeffs
        start = resume.next_interval
        record.rows.extend(prior_rows or [])
        record.interval_losses.extend(prior_losses or [])
    window_idx = round(c.window.t_start / grid.T)
    extra = np.asarray(cfg.eval_times, dtype=np.float64)

    for m in range(start, grid.n_intervals):
        t0 = grid.interval_start(m)
        w_idx = grid.window_index(m)
        if w_idx != window_idx:
            old = c
            c = c.handoff(grid.window(w_idx, cfg.Q))
            record.seam_checks.append({"window": w_idx + 1, "t": t0, "mismatch": seam_mismatch(old, c)})
            window_idx = w_idx
        if m == 0:
            target = build_initial_state(cfg.L) if cfg.mode == "exact" else RbmParams.zeros(cfg.L, cfg.alpha)
        else:
            target = c.materialize(t0)
        seed = derive_seed(cfg.seed, _TRAIN, m)
        try:
            if coarse is not None:
                c, _ = train_interval(c, t0, coarse, coarse_prop, cfg.mode, target, settings, sampler, seed)
            c, trace = train_interval(c, t0, grid, prop, cfg.mode, target, settings, sampler, seed)
        except TrainingAborted as exc:
            record.aborted = str(exc)
            if exc.last_good is not None:
                record.checkpoints[w_idx + 1] = Checkpoint(exc.last_good, w_idx + 1, m, c.window.t_start, t0)
            if out_dir is not None:
                emit_outputs(record, out_dir)
            exc.record = record
            raise
        t_end = t0 + cfg.tau
        times = grid.interval_times(m)[1:]
        in_interval = extra[(extra > t0 + 1e-12) & (extra <= t_end + 1e-12)]
        record.rows.extend(_interval_rows(cfg, c, times, in_interval, h, sampler, oracle,
                                          derive_seed(cfg.seed, _OBSERVE, m + 1)))
        record.interval_losses.append({
            "interval": m, "t0": t0, "loss": trace.final_loss, "epochs": trace.epochs,
            "stopped": trace.stopped, "C": trace.final_C,
        })
        log.info("interval %d [%.4g, %.4g]: loss %.3e after %d epochs (%s)", m, t0, t_end,
                 trace.final_loss, trace.epochs, trace.stopped)
        last_in_window = (m + 1 == grid.n_intervals) or grid.window_index(m + 1) != w_idx
        if last_in_window:
            ckpt = Checkpoint(c.copy(), w_idx + 1, m + 1, c.window.t_start, t_end)
            record.checkpoints[w_idx + 1] = ckpt
            if out_dir is not None:
                Path(out_dir).mkdir(parents=True, exist_ok=True)
                write_checkpoint(ckpt, out_dir)
    return record


def exact_trajectory(cfg: RunConfig) -> RunRecord:
    """Exact-diagonalization observables on the grid plus requested evaluation times."""
    grid, h = _grid(cfg), _hamiltonian(cfg)
    times = np.union1d(cfg.dt * np.arange(grid.n_steps + 1), np.asarray(cfg.eval_times, dtype=np.float64))
    record = RunRecord("exact", cfg)
    for t, v in zip(times, exact_states(h, times)):
        record.rows.append(Row(float(t), sx_mid(v), None, False))
    return record


def ptvmc_baseline(cfg: RunConfig, settings: TrainSettings | None = None) -> RunRecord:
    """Step-by-step projection: one fresh fit of the network per time step.

    Each step maximizes the single-step fidelity between the fixed previous
    network and the new one, warm-started from the previous parameters, with
    the same optimizer and propagator as the smooth run.
    """
    settings = _settings(cfg, settings)
    grid, h = _grid(cfg), _hamiltonian(cfg)
    prop = PropagatorSpec(cfg.dt, h, cfg.order)
    sampler = _sampler(cfg)
    oracle = cfg.L <= MAX_DENSE_L
    Np = n_params(cfg.L, cfg.alpha)
    record = RunRecord("ptvmc", cfg, parameter_counts={
        "N_p": Np, "steps": grid.n_steps, "ptvmc_total": grid.n_steps * Np, "snqs_per_window": cfg.Q * Np,
    })
    dummy = WindowSpec(0.0, 1.0, 1)
    params = RbmParams.zeros(cfg.L, cfg.alpha)
    times = cfg.dt * np.arange(grid.n_steps + 1)
    exact = exact_states(h, times) if oracle else None
    sx0, inf0 = _observe(params, exact[0] if oracle else None, sampler, derive_seed(cfg.seed, _OBSERVE, 0))
    record.rows.append(Row(0.0, sx0, inf0, False))

    # the all-zero start is a symmetric saddle; break it the way the smooth ansatz does
    rng = np.random.default_rng(derive_seed(cfg.seed, _INIT))
    kick = cfg.init_noise / np.sqrt(2.0) * (rng.standard_normal(Np) + 1j * rng.standard_normal(Np))
    for k in range(1, grid.n_steps + 1):
        prev = params
        start = CoeffTensor((prev.flatten() + (kick if k == 1 else 0.0))[:, None], dummy, cfg.L, cfg.alpha)
        seed = derive_seed(cfg.seed, _BASELINE, k)

        def loss_fn(cc, epoch, prev=prev, seed=seed):
            new = RbmParams.unflatten(cc.coeffs[:, 0], cfg.L, cfg.alpha)
            if cfg.mode == "exact":
                C, _, g2 = step_fidelity_params(prev, new, prop)
            else:
                s1 = sample(prev, sampler.reseeded(derive_seed(seed, epoch, 0)))
                s2 = sample(new, sampler.reseeded(derive_seed(seed, epoch, 1)))
                C, _, g2, _ = step_fidelity_mc_params(prev, new, prop, s1, s2)
            return -np.log(C), (-g2 / C)[:, None], {"C": [C]}

        try:
            best, trace = _optimize(loss_fn, start, settings, keep_best=(cfg.mode == "exact"))
        except TrainingAborted as exc:
            record.aborted = str(exc)
            exc.record = record
            raise
        params = RbmParams.unflatten(best.coeffs[:, 0], cfg.L, cfg.alpha)
        sx, inf = _observe(params, exact[k] if oracle else None, sampler, derive_seed(cfg.seed, _OBSERVE, k))
        record.rows.append(Row(float(times[k]), sx, inf, False))
        record.interval_losses.append({"step": k, "t": float(times[k]), "loss": trace.final_loss,
                                       "epochs": trace.epochs, "stopped": trace.stopped})
    return record
