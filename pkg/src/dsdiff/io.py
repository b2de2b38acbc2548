"""Plain-text file formats: run configs, analytic ``p0`` specs, datasets, logs.

Config files hold one ``key = value`` pair per line; ``#`` starts a comment.
Keys are the :class:`~dsdiff.trainer.RunConfig` fields plus a few
subcommand-specific extras (see :data:`EXTRA_KEYS`).
"""
from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Dict, Iterable, Tuple

import numpy as np

from .exceptions import InvalidStateError
from .state_process import DistTable, StateSpace
from .trainer import RunConfig, TrainingLog

# key -> default for options that are not part of RunConfig
EXTRA_KEYS: Dict[str, str] = {
    "n_grid": "100,1000,10000,100000",
    "seeds": "0,1,2,3,4",
    "verify_scale": "1.0",
    "verify_clip_C": "auto",
}


class ConfigError(ValueError):
    """Malformed config text, unknown key, or a missing required key."""


def valid_keys():
    return RunConfig.keys() + list(EXTRA_KEYS)


def parse_config_text(text: str) -> Dict[str, str]:
    """Flat ``key = value`` lines; later lines override earlier ones."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def parse_overrides(items: Iterable[str]) -> Dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        out[key] = value
    return out


def _coerce(field: dataclasses.Field, value: str):
    kind = type(field.default)
    try:
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
    except ValueError:
        raise ConfigError(f"key {field.name!r}: cannot parse {value!r} as {kind.__name__}") from None
    return value


def build_config(values: Dict[str, str]) -> Tuple[RunConfig, Dict[str, str]]:
    """Split raw key/values into a validated RunConfig and the extras."""
    known = set(valid_keys())
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s) {', '.join(unknown)}; valid keys are: "
                          + ", ".join(valid_keys()))
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    kwargs = {k: _coerce(fields[k], v) for k, v in values.items() if k in fields}
    extras = dict(EXTRA_KEYS)
    extras.update({k: v for k, v in values.items() if k in EXTRA_KEYS})
    try:
        cfg = RunConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg, extras


def load_run_config(path=None, overrides: Dict[str, str] | None = None):
    """Read ``path`` (optional), apply overrides, return ``(RunConfig, extras)``."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        values.update(parse_config_text(text))
    values.update(overrides or {})
    return build_config(values)


def format_config(cfg: RunConfig, extras: Dict[str, str] | None = None) -> str:
    """Inverse of :func:`parse_config_text` for a resolved config."""
    lines = [f"{k} = {getattr(cfg, k)}" for k in RunConfig.keys()]
    lines += [f"{k} = {v}" for k, v in (extras or {}).items()]
    return "\n".join(lines) + "\n"


def parse_int_list(text: str, key: str):
    try:
        vals = [int(float(s)) for s in text.replace(" ", "").split(",") if s]
    except ValueError:
        raise ConfigError(f"key {key!r}: expected a comma-separated list of integers") from None
    if not vals:
        raise ConfigError(f"key {key!r}: empty list")
    return vals


# -- analytic p0 specs ---------------------------------------------------------

def parse_p0(spec: str, space: StateSpace) -> DistTable:
    """Build a DistTable from ``uniform``, ``delta:<state>``, ``product:<...>`` or ``table:<path>``.

    ``product`` takes ``S`` comma-separated weights per coordinate, coordinates
    separated by ``;``; a single coordinate is replicated ``d`` times.
    ``delta`` takes the symbols of one state separated by commas or spaces.
    ``table`` points at a text file with ``S**d`` weights in state-index order.
    """
    spec = spec.strip()
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "uniform":
        return DistTable(np.full(space.size, 1.0 / space.size), space)
    if kind == "delta":
        try:
            x = np.array([int(s) for s in arg.replace(",", " ").split()])
        except ValueError:
            raise ConfigError(f"p0 delta spec needs integer symbols, got {arg!r}") from None
        try:
            idx = space.index_of(x)
        except (InvalidStateError, ValueError) as exc:
            raise ConfigError(f"p0 delta spec: {exc}") from None
        p = np.zeros(space.size)
        p[idx] = 1.0
        return DistTable(p, space)
    if kind == "product":
        try:
            rows = [[float(v) for v in part.split(",")] for part in arg.split(";") if part.strip()]
        except ValueError:
            raise ConfigError(f"p0 product spec has a non-numeric weight: {arg!r}") from None
        if len(rows) == 1:
            rows = rows * space.d
        marg = np.array(rows, dtype=float)
        if marg.shape != (space.d, space.S) or np.any(marg < 0):
            raise ConfigError(f"p0 product spec needs {space.d} rows of {space.S} nonnegative weights")
        marg = marg / marg.sum(axis=1, keepdims=True)
        return DistTable.product(marg)
    if kind == "table":
        try:
            w = np.loadtxt(arg.strip(), ndmin=1).ravel()
        except OSError as exc:
            raise ConfigError(f"p0 table: {exc}") from None
        if w.size != space.size or np.any(w < 0) or w.sum() <= 0:
            raise ConfigError(f"p0 table needs {space.size} nonnegative weights, found {w.size}")
        return DistTable.from_unnormalized(w, space)
    raise ConfigError(f"unknown p0 spec {spec!r}; use uniform, delta:, product: or table:")


# -- datasets and logs ------------------------------------------------------------

def write_states(path, states: np.ndarray):
    """One state per line, symbols separated by single spaces."""
    states = np.asarray(states, dtype=np.int64)
    with open(path, "w") as fh:
        for row in states:
            fh.write(" ".join(map(str, row.tolist())) + "\n")


def read_states(path, space: StateSpace | None = None) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([int(s) for s in line.split()])
            except ValueError:
                raise InvalidStateError(f"{path}:{lineno}: non-integer symbol") from None
    d = space.d if space is not None else (len(rows[0]) if rows else 0)
    if any(len(r) != d for r in rows):
        raise InvalidStateError(f"{path}: rows must all have {d} symbols")
    out = np.array(rows, dtype=np.int64).reshape(len(rows), d)
    if space is not None and len(out):
        space.check_states(out)
    return out


TRAIN_LOG_HEADER = "epoch,k,t_drawn,loss"


def write_training_log(log: TrainingLog, path):
    """One row per (epoch, k): mean drawn time and mean minibatch loss."""
    with open(path, "w") as fh:
        fh.write(TRAIN_LOG_HEADER + "\n")
        for epoch, k, t, loss in log.epoch_rows():
            fh.write(f"{epoch},{k},{t!r},{loss!r}\n")


def read_training_log(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if header != TRAIN_LOG_HEADER:
            raise ValueError(f"unexpected training-log header {header!r}")
        rows = []
        for line in fh:
            e, k, t, loss = line.strip().split(",")
            rows.append((int(e), int(k), float(t), float(loss)))
    return rows
