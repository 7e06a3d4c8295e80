"""Files written by a run: trajectory.csv, manifest.json and window_<n>.ckpt.

All writes go to a temporary file first and are renamed into place.
Floats are written with ``repr`` so they read back bit-for-bit.
"""

from __future__ import annotations

import json
import os
import platform
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_dict, render_config
from .errors import CheckpointError
from .snqs import CoeffTensor
from .temporal_basis import WindowSpec

CHECKPOINT_FORMAT = 1
MANIFEST_FORMAT = 1
CSV_HEADER = "t,sx_mid,infidelity,extrapolated"
_HEADER_KEYS = {"format_version", "L", "alpha", "Q", "window", "window_number", "next_interval", "trained", "shape"}


@dataclass
class Checkpoint:
    coeffs: CoeffTensor
    window_number: int
    next_interval: int
    trained_start: float
    trained_end: float


def _atomic_write(path: Path, text: str):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _num(v) -> str:
    """Shortest round-tripping decimal of a float."""
    return repr(float(v))


def checkpoint_name(window_number: int) -> str:
    return f"window_{window_number}.ckpt"


def write_checkpoint(ckpt: Checkpoint, directory) -> Path:
    c = ckpt.coeffs
    lines = [
        "# smoothnqs coefficient checkpoint",
        f"format_version {CHECKPOINT_FORMAT}",
        f"L {c.L}",
        f"alpha {c.alpha}",
        f"Q {c.Q}",
        f"window {_num(c.window.t_start)} {_num(c.window.t_end)}",
        f"window_number {ckpt.window_number}",
        f"next_interval {ckpt.next_interval}",
        f"trained {_num(ckpt.trained_start)} {_num(ckpt.trained_end)}",
        f"shape {c.coeffs.shape[0]} {c.coeffs.shape[1]}",
        "# one row per network parameter: re_0 im_0 re_1 im_1 ...",
    ]
    for row in c.coeffs:
        lines.append(" ".join(f"{_num(z.real)} {_num(z.imag)}" for z in row))
    path = Path(directory) / checkpoint_name(ckpt.window_number)
    _atomic_write(path, "\n".join(lines) + "\n")
    return path


def read_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint {path} does not exist")
    header, data = {}, []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key in _HEADER_KEYS:
            header[key] = rest.split()
        else:
            data.append([float(v) for v in line.split()])
    try:
        if int(header["format_version"][0]) != CHECKPOINT_FORMAT:
            raise CheckpointError(f"unsupported checkpoint format {header['format_version'][0]}")
        L, alpha, Q = int(header["L"][0]), int(header["alpha"][0]), int(header["Q"][0])
        n_rows, n_cols = (int(v) for v in header["shape"])
        arr = np.array(data, dtype=np.float64)
        if arr.shape != (n_rows, 2 * n_cols):
            raise CheckpointError(f"checkpoint body has shape {arr.shape}, header says {(n_rows, 2 * n_cols)}")
        window = WindowSpec(float(header["window"][0]), float(header["window"][1]), Q)
        coeffs = CoeffTensor(arr[:, 0::2] + 1j * arr[:, 1::2], window, L, alpha)
        return Checkpoint(coeffs, int(header["window_number"][0]), int(header["next_interval"][0]),
                          float(header["trained"][0]), float(header["trained"][1]))
    except (KeyError, IndexError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc


def latest_checkpoint(directory) -> Path:
    found = []
    for p in Path(directory).glob("window_*.ckpt"):
        m = re.fullmatch(r"window_(\d+)\.ckpt", p.name)
        if m:
            found.append((int(m.group(1)), p))
    if not found:
        raise CheckpointError(f"no window_<n>.ckpt files in {directory}")
    return max(found)[1]


def _fmt(v) -> str:
    return "" if v is None else _num(v)


def format_trajectory(rows) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(f"{_fmt(r.t)},{_fmt(r.sx_mid)},{_fmt(r.infidelity)},{int(bool(r.extrapolated))}")
    return "\n".join(lines) + "\n"


def write_trajectory(rows, path):
    _atomic_write(Path(path), format_trajectory(rows))


def read_trajectory(path):
    from .driver import Row

    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path} is not a trajectory table")
    rows = []
    for line in lines[1:]:
        t, sx, inf, ex = line.split(",")
        rows.append(Row(float(t), float(sx), float(inf) if inf else None, ex == "1"))
    return rows


def manifest(record) -> dict:
    cfg = record.config
    return {
        "format_version": MANIFEST_FORMAT,
        "method": record.method,
        "config": config_dict(cfg),
        "config_text": render_config(cfg),
        "seed": cfg.seed,
        "middle_site": record.middle_site,
        "rows": len(record.rows),
        "interval_losses": record.interval_losses,
        "seam_checks": record.seam_checks,
        "parameter_counts": record.parameter_counts,
        "aborted": record.aborted,
        "versions": {
            "smoothnqs": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }


def emit_outputs(record, directory) -> dict:
    """Write trajectory.csv, manifest.json and any window checkpoints held by ``record``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if not os.access(directory, os.W_OK):
        raise PermissionError(f"output directory {directory} is not writable")
    paths = {"trajectory": directory / "trajectory.csv", "manifest": directory / "manifest.json"}
    write_trajectory(record.rows, paths["trajectory"])
    _atomic_write(paths["manifest"], json.dumps(manifest(record), indent=2) + "\n")
    for number, ckpt in sorted(record.checkpoints.items()):
        paths[f"window_{number}"] = write_checkpoint(ckpt, directory)
    return paths
