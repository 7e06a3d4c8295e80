"""Command-line entry point: ``snqs run|baseline|exact|evaluate|resume``.

Every subcommand writes plot-ready tables (trajectory.csv) plus a
manifest; nothing is rendered.  Exit status: 0 success, 2 bad
configuration or arguments, 3 missing/corrupt checkpoint, 4 training
aborted (partial outputs are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from threadpoolctl import threadpool_limits

from .config import RunConfig, parse_config
from .driver import RunRecord, exact_trajectory, predict_untrained, ptvmc_baseline, run_evolution
from .errors import CheckpointError, ConfigError, TrainingAborted
from .output import (emit_outputs, format_trajectory, latest_checkpoint, read_checkpoint, read_trajectory,
                     write_trajectory)
from .spin_model import HamiltonianSpec

log = logging.getLogger("smoothnqs")

EXIT_CONFIG, EXIT_CHECKPOINT, EXIT_ABORTED = 2, 3, 4


def load_config_text(name: str) -> str:
    """Text of a config file, or of a packaged config when ``name`` is e.g. ``fig2``."""
    path = Path(name)
    if path.is_file():
        return path.read_text(encoding="utf-8")
    packaged = resources.files("smoothnqs") / "configs" / f"{path.stem}.cfg"
    if path.suffix in ("", ".cfg") and path.parent == Path(".") and packaged.is_file():
        return packaged.read_text(encoding="utf-8")
    raise ConfigError(f"no config file {name!r} (packaged configs: {', '.join(packaged_configs())})")


def packaged_configs() -> list[str]:
    return sorted(p.name[:-4] for p in (resources.files("smoothnqs") / "configs").iterdir()
                  if p.name.endswith(".cfg"))


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "mode", None) is not None:
        changes["mode"] = args.mode
    if getattr(args, "out", None) is not None:
        changes["output_dir"] = args.out
    return cfg.replace(**changes) if changes else cfg


def _load(args) -> RunConfig:
    return _apply_overrides(parse_config(load_config_text(args.config)), args)


def _emit(record: RunRecord, out) -> None:
    paths = emit_outputs(record, out)
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))


def cmd_run(args) -> int:
    cfg = _load(args)
    record = run_evolution(cfg, out_dir=cfg.output_dir)
    _emit(record, cfg.output_dir)
    return 0


def cmd_baseline(args) -> int:
    cfg = _load(args)
    _emit(ptvmc_baseline(cfg), cfg.output_dir)
    return 0


def cmd_exact(args) -> int:
    cfg = _load(args)
    _emit(exact_trajectory(cfg), cfg.output_dir)
    return 0


def _parse_times(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a list of times") from None


def cmd_evaluate(args) -> int:
    source = Path(args.checkpoint) if args.checkpoint else latest_checkpoint(args.out or ".")
    ckpt = read_checkpoint(source)
    c = ckpt.coeffs
    hamiltonian = None
    if args.config:
        cfg = _load(args)
        if (cfg.L, cfg.alpha) != (c.L, c.alpha):
            raise ConfigError(f"config has L={cfg.L}, alpha={cfg.alpha}; checkpoint has L={c.L}, alpha={c.alpha}")
        hamiltonian = HamiltonianSpec(cfg.L, cfg.J, cfg.hx, cfg.hz)
    rows = predict_untrained(c, args.times, (ckpt.trained_start, ckpt.trained_end), hamiltonian, seed=args.seed or 0)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_trajectory(rows, Path(args.out) / "evaluation.csv")
    sys.stdout.write(format_trajectory(rows))
    return 0


def cmd_resume(args) -> int:
    out = Path(args.out)
    ckpt = read_checkpoint(latest_checkpoint(out))
    if args.config:
        cfg = _load(args)
    else:
        manifest_path = out / "manifest.json"
        if not manifest_path.is_file():
            raise CheckpointError(f"{manifest_path} is missing; pass --config")
        cfg = _apply_overrides(parse_config(json.loads(manifest_path.read_text())["config_text"]), args)
    prior_rows, prior_losses = [], []
    if (out / "trajectory.csv").is_file():
        prior_rows = [r for r in read_trajectory(out / "trajectory.csv") if r.t <= ckpt.trained_end + 1e-12]
    if (out / "manifest.json").is_file():
        prior_losses = [d for d in json.loads((out / "manifest.json").read_text())["interval_losses"]
                        if d["interval"] < ckpt.next_interval]
    log.info("resuming from %s at interval %d", latest_checkpoint(out), ckpt.next_interval)
    record = run_evolution(cfg, out_dir=out, resume=ckpt, prior_rows=prior_rows, prior_losses=prior_losses)
    _emit(record, out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snqs", description="Smooth neural quantum state dynamics.")
    parser.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP thread limit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress per interval")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="config file, or the name of a packaged config (" + ", ".join(packaged_configs()) + ")")
        p.add_argument("--out", help="output directory (overrides run.output_dir)")
        p.add_argument("--seed", type=int, help="overrides run.seed")
        p.add_argument("--mode", choices=("exact", "mc"), help="overrides run.mode")
        p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="BLAS/OpenMP thread limit")

    for name, func, text in [("run", cmd_run, "s-NQS evolution"), ("baseline", cmd_baseline, "p-tVMC baseline"),
                             ("exact", cmd_exact, "exact-diagonalization trajectory")]:
        p = sub.add_parser(name, help=text)
        common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", help="observables from a checkpoint at arbitrary times")
    common(p, config_required=False)
    p.add_argument("--checkpoint", help="checkpoint file (default: latest in --out)")
    p.add_argument("--times", type=_parse_times, required=True, help="comma- or space-separated times")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("resume", help="continue a run from its latest window checkpoint")
    common(p, config_required=False)
    p.set_defaults(func=cmd_resume)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "resume" and not args.out:
        print("snqs resume: --out is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except ConfigError as exc:
        print(f"snqs {args.command}: invalid configuration", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"snqs {args.command}: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except TrainingAborted as exc:
        record = getattr(exc, "record", None)
        if record is not None:
            emit_outputs(record, record.config.output_dir)
        print(f"snqs {args.command}: training aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED


if __name__ == "__main__":
    sys.exit(main())
