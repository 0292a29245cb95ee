"""Flat ``key = value`` run configuration shared by the command-line tools.

Keys are the field names of :class:`NetConfig` and :class:`TrainConfig`
(``init_sigma`` sets both) plus ``preset`` (light or full) and ``dtype``
(float32 or float64). Lines starting with ``#`` are comments. The stage
ladder is written ``max_nodes_ladder = 0:200, 5:300``.
"""

from __future__ import annotations

import os
import types
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

from bindpose.net import NetConfig
from bindpose.trainer import TrainConfig

SEED_ENV = "BINDPOSE_SEED"
EXTRA_KEYS = {"preset": str, "dtype": str}


class ConfigError(ValueError):
    pass


def _field_types(cls) -> dict[str, type]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in fields(cls)}


NET_KEYS = _field_types(NetConfig)
TRAIN_KEYS = _field_types(TrainConfig)
KNOWN_KEYS = sorted(set(NET_KEYS) | set(TRAIN_KEYS) | set(EXTRA_KEYS))


def _convert(key: str, raw: str, kind) -> object:
    if key == "max_nodes_ladder":
        try:
            steps = []
            for part in raw.split(","):
                start, n = part.split(":")
                steps.append((int(start), int(n)))
            return tuple(steps)
        except ValueError:
            raise ConfigError(f"{key}: expected 'epoch:max_nodes, ...', got {raw!r}") from None
    args = typing.get_args(kind)
    if args and (typing.get_origin(kind) in (typing.Union, types.UnionType)):
        if raw.lower() in ("none", ""):
            return None
        kind = next(a for a in args if a is not type(None))
    try:
        if kind is bool:
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError
            return raw.lower() in ("true", "1")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return str(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {getattr(kind, '__name__', kind)}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict[str, object]:
    out: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        kind = EXTRA_KEYS.get(key) or NET_KEYS.get(key) or TRAIN_KEYS[key]
        out[key] = _convert(key, raw, kind)
    return out


@dataclass
class RunConfig:
    net: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dtype: str = "float32"
    seed_source: str = "default"

    def to_dict(self) -> dict:
        return {"net": self.net.to_dict(), "train": self.train.to_dict(), "dtype": self.dtype,
                "seed": self.train.seed, "seed_source": self.seed_source}


def resolve_seed(cli_seed: int | None, file_seed: int | None) -> tuple[int, str]:
    if cli_seed is not None:
        return int(cli_seed), "flag"
    if file_seed is not None:
        return int(file_seed), "config"
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env), "env"
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0, "default"


def build_run_config(values: dict[str, object], cli_seed: int | None = None) -> RunConfig:
    values = dict(values)
    preset = values.pop("preset", "light")
    if preset not in ("light", "full"):
        raise ConfigError(f"preset must be light or full, got {preset!r}")
    dtype = values.pop("dtype", "float32")
    if dtype not in ("float32", "float64"):
        raise ConfigError(f"dtype must be float32 or float64, got {dtype!r}")
    seed, source = resolve_seed(cli_seed, values.pop("seed", None))
    net_kw = {k: v for k, v in values.items() if k in NET_KEYS}
    train_kw = {k: v for k, v in values.items() if k in TRAIN_KEYS}
    try:
        net = NetConfig.full(**net_kw) if preset == "full" else NetConfig.light(**net_kw)
        train = TrainConfig(seed=seed, **train_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(net, train, dtype, source)


def load_run_config(path: str | Path | None, cli_seed: int | None = None) -> RunConfig:
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values = parse_config_text(path.read_text(), str(path))
    return build_run_config(values, cli_seed)
