"""Run configuration: an INI document with flat sections.

Physics parameters have no defaults; everything else does.  Example::

    [model]
    L = 10
    hx = 0.3
    hz = 0.3

    [ansatz]
    alpha = 5
    Q = 3

    [grid]
    dt = 0.01
    tau = 0.1
    T = 2.0
    t_max = 2.2
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass

from .errors import ConfigError
from .exact_engine import MAX_DENSE_L
from .temporal_basis import grid_violations, is_multiple

# (section, key, type, default); _REQUIRED marks physics parameters
_REQUIRED = object()

_SCHEMA = {
    "model": [("L", int, _REQUIRED), ("J", float, 1.0), ("hx", float, _REQUIRED), ("hz", float, _REQUIRED)],
    "ansatz": [("alpha", int, _REQUIRED), ("Q", int, _REQUIRED), ("init_noise", float, 1e-2)],
    "grid": [("dt", float, _REQUIRED), ("tau", float, _REQUIRED), ("T", float, _REQUIRED),
             ("t_max", float, _REQUIRED), ("coarse_dt", float, 0.0)],
    "run": [("mode", str, "exact"), ("seed", int, 0), ("order", int, 2), ("loss_form", str, "log"),
            ("eval_times", "floats", ()), ("output_dir", str, "out")],
    "sampler": [("n_chains", int, 16), ("n_samples", int, 256), ("burn_in", int, 100), ("thinning", int, 2)],
    "optimizer": [("lr", float, 1e-3), ("beta1", float, 0.9), ("beta2", float, 0.999), ("eps", float, 1e-8),
                  ("weight_decay", float, 0.0), ("epochs", int, 500), ("schedule", str, "constant"),
                  ("patience", int, 200), ("tol", float, 1e-8), ("rel_tol", float, 1e-10)],
}


@dataclass(frozen=True)
class RunConfig:
    L: int
    hx: float
    hz: float
    alpha: int
    Q: int
    dt: float
    tau: float
    T: float
    t_max: float
    J: float = 1.0
    init_noise: float = 1e-2
    coarse_dt: float = 0.0
    mode: str = "exact"
    seed: int = 0
    order: int = 2
    loss_form: str = "log"
    eval_times: tuple = ()
    output_dir: str = "out"
    n_chains: int = 16
    n_samples: int = 256
    burn_in: int = 100
    thinning: int = 2
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    epochs: int = 500
    schedule: str = "constant"
    patience: int = 200
    tol: float = 1e-8
    rel_tol: float = 1e-10

    def replace(self, **changes) -> "RunConfig":
        cfg = dataclasses.replace(self, **changes)
        problems = validate(cfg)
        if problems:
            raise ConfigError(problems)
        return cfg


def _convert(kind, raw: str):
    if kind == "floats":
        raw = raw.strip()
        return tuple(float(v) for v in raw.replace(",", " ").split()) if raw else ()
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw.strip()


def validate(cfg: RunConfig) -> list[str]:
    out = []
    if cfg.L < 1:
        out.append(f"model.L = {cfg.L} must be at least 1")
    if cfg.alpha < 1:
        out.append(f"ansatz.alpha = {cfg.alpha} must be at least 1")
    if cfg.Q < 1:
        out.append(f"ansatz.Q = {cfg.Q} must be at least 1")
    if cfg.mode not in ("exact", "mc"):
        out.append(f"run.mode = {cfg.mode!r} must be 'exact' or 'mc'")
    if cfg.mode == "exact" and cfg.L > MAX_DENSE_L:
        out.append(f"model.L = {cfg.L} exceeds {MAX_DENSE_L}, the limit for run.mode = exact")
    if cfg.order not in (1, 2, 3):
        out.append(f"run.order = {cfg.order} must be 1, 2 or 3")
    if cfg.loss_form not in ("log", "product"):
        out.append(f"run.loss_form = {cfg.loss_form!r} must be 'log' or 'product'")
    if cfg.schedule not in ("constant", "cosine"):
        out.append(f"optimizer.schedule = {cfg.schedule!r} must be 'constant' or 'cosine'")
    if cfg.epochs < 0:
        out.append(f"optimizer.epochs = {cfg.epochs} must be non-negative")
    if cfg.seed < 0:
        out.append(f"run.seed = {cfg.seed} must be non-negative")
    for name in ("n_chains", "n_samples", "thinning"):
        if getattr(cfg, name) < 1:
            out.append(f"sampler.{name} = {getattr(cfg, name)} must be positive")
    out.extend(grid_violations(cfg.dt, cfg.tau, cfg.T, cfg.t_max))
    if cfg.coarse_dt:
        if cfg.coarse_dt < cfg.dt or not is_multiple(cfg.coarse_dt, cfg.dt):
            out.append(f"grid.coarse_dt = {cfg.coarse_dt} is not an integer multiple of grid.dt = {cfg.dt}")
        elif cfg.tau > 0 and not is_multiple(cfg.tau, cfg.coarse_dt):
            out.append(f"grid.tau = {cfg.tau} is not an integer multiple of grid.coarse_dt = {cfg.coarse_dt}")
    return out


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration document; raises ConfigError listing every violation."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (T vs tau)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc

    problems, values = [], {}
    for section in parser.sections():
        if section not in _SCHEMA:
            problems.append(f"unknown section [{section}]")
            continue
        known = {k for k, _, _ in _SCHEMA[section]}
        for key in parser[section]:
            if key not in known:
                problems.append(f"unknown key {section}.{key}")
    for section, entries in _SCHEMA.items():
        for key, kind, default in entries:
            if parser.has_option(section, key):
                raw = parser.get(section, key)
                try:
                    values[key] = _convert(kind, raw)
                except ValueError:
                    problems.append(f"{section}.{key} = {raw!r} is not a valid {getattr(kind, '__name__', kind)}")
            elif default is _REQUIRED:
                problems.append(f"missing required {section}.{key}")
    if problems:
        raise ConfigError(problems)
    cfg = RunConfig(**values)
    problems = validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def render_config(cfg: RunConfig) -> str:
    """INI text that parses back to an identical RunConfig."""
    lines = []
    for section, entries in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, kind, _ in entries:
            val = getattr(cfg, key)
            if kind == "floats":
                text = ", ".join(repr(float(v)) for v in val)
            elif kind is float:
                text = repr(float(val))
            else:
                text = str(val)
            lines.append(f"{key} = {text}")
        lines.append("")
    return "\n".join(lines)


def config_dict(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["eval_times"] = list(cfg.eval_times)
    return d
