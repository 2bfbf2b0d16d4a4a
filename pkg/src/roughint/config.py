"""Run configuration: a flat INI file with one section per command.

Example::

    [sample]
    H = 0.35
    d = 2
    n = 256
    T = 1
    seed = 7

    [solve-sde]
    driver = fbm
    d = 2
    field = rotation
    field.theta = 1, 0.5
    y0 = 1, 0

Keys are case-sensitive.  Keys in ``[DEFAULT]`` apply to every section.
Keys of the form ``field.<name>`` are passed to the vector-field catalog.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .errors import ConfigError

WORKERS_ENV = "ROUGHINT_WORKERS"

DEFAULTS: Dict[str, Dict[str, str]] = {
    "sample": {"H": "0.35", "d": "1", "n": "256", "T": "1", "seed": "0"},
    "lift": {"driver": "fbm", "H": "0.35", "d": "2", "n": "64", "T": "1", "seed": "0",
             "delays": ""},
    "validate": {"driver": "fbm", "H": "0.35", "d": "3", "n": "128", "T": "1", "seed": "0",
                 "delays": "", "fault_cell": "0", "fault_eps": "1e-3"},
    "solve-sde": {"driver": "fbm", "H": "0.35", "d": "1", "n": "256", "T": "1", "seed": "0",
                  "field": "linear", "y0": "1", "method": "march", "tol": "1e-12",
                  "max_iter": "200"},
    "solve-dde": {"driver": "fbm", "H": "0.35", "d": "1", "n": "256", "T": "1", "seed": "0",
                  "field": "delay-linear", "delays": "0.25", "xi": "1"},
    "convergence": {"driver": "linear", "H": "0.35", "d": "1", "T": "1", "seed": "0",
                    "field": "linear", "y0": "1", "ladder": "16, 32, 64, 128",
                    "reference": "auto", "refine": "16", "samples": "1"},
    "mc-area": {"mode": "area", "H": "0.3", "v1": "0", "v2": "0", "N": "2000", "n": "1024",
                "tau": "1", "d": "1", "seed": "0", "level": "2", "cells": "16",
                "taus": "0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125"},
}

COMMANDS = tuple(DEFAULTS)


@dataclass
class RunConfig:
    """Parameters of one command invocation (strings until read by a getter)."""

    command: str
    values: Dict[str, str]
    out: Path = Path(".")
    workers: int = 1
    field_params: Dict[str, str] = field(default_factory=dict)

    def _raw(self, key: str) -> str:
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(f"[{self.command}] missing key {key!r}") from None

    def get_str(self, key: str) -> str:
        return self._raw(key).strip()

    def get_float(self, key: str) -> float:
        raw = self._raw(key)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"[{self.command}] {key} = {raw!r} is not a number") from None

    def get_int(self, key: str) -> int:
        raw = self._raw(key)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"[{self.command}] {key} = {raw!r} is not an integer") from None

    def get_floats(self, key: str) -> List[float]:
        return parse_floats(self._raw(key), f"[{self.command}] {key}")

    def get_ints(self, key: str) -> List[int]:
        vals = self.get_floats(key)
        if any(v != int(v) for v in vals):
            raise ConfigError(f"[{self.command}] {key} must list integers")
        return [int(v) for v in vals]

    def field_kwargs(self) -> dict:
        """Catalog parameters: scalars as floats, comma lists as float lists."""
        out = {}
        for k, v in self.field_params.items():
            vals = parse_floats(v, f"[{self.command}] field.{k}")
            out[k] = vals[0] if len(vals) == 1 else vals
        return out


def parse_floats(raw: str, what: str) -> List[float]:
    """Parse ``"1, 2.5"`` or ``"[1, 2.5]"`` into floats (empty string -> [])."""
    s = raw.strip().strip("[]").strip()
    if not s:
        return []
    try:
        return [float(tok) for tok in s.replace(";", ",").split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"{what} = {raw!r} is not a list of numbers") from None


def resolve_workers(flag: Optional[int], configured: Optional[str]) -> int:
    """Worker count: command-line flag, then environment, then config, then 1."""
    for source, raw in (("--workers", flag), (WORKERS_ENV, os.environ.get(WORKERS_ENV)),
                        ("workers", configured)):
        if raw is None or raw == "":
            continue
        try:
            k = int(raw)
        except ValueError:
            raise ConfigError(f"{source} = {raw!r} is not an integer") from None
        if k < 1:
            raise ConfigError(f"{source} must be at least 1")
        return k
    return 1


def load_config(command: str, path: Optional[str] = None, overrides: Sequence[str] = (),
                seed: Optional[int] = None, workers: Optional[int] = None,
                out: Optional[str] = None) -> RunConfig:
    """Merge built-in defaults, the config file section and ``key=value`` overrides."""
    if command not in DEFAULTS:
        raise ConfigError(f"unknown command {command!r}")
    values = dict(DEFAULTS[command])
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
        cp.optionxform = str
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except configparser.Error as exc:
            msg = " ".join(str(exc).split())
            raise ConfigError(f"malformed config {path}: {msg}") from None
        values.update(cp.defaults())
        if cp.has_section(command):
            values.update({k: v for k, v in cp.items(command)})
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    if seed is not None:
        if seed < 0:
            raise ConfigError("--seed must be non-negative")
        values["seed"] = str(seed)
    fparams = {k[len("field."):]: v for k, v in values.items() if k.startswith("field.")}
    plain = {k: v for k, v in values.items() if not k.startswith("field.")}
    cfg = RunConfig(
        command,
        plain,
        Path(out if out is not None else plain.get("out", ".")),
        resolve_workers(workers, plain.get("workers")),
        fparams,
    )
    return cfg
