"""INI experiment configs with strict key checking.

Each command reads its own section (``[train]``, ``[ablate]``, ``[sde]``,
``[landscape]``, ``[sweep]``, ``[capacity]``); an optional ``[experiment]``
section supplies ``seed`` and ``out``. Run keys (see
:class:`~icnn_lift.training.RunConfig`) are accepted in every training
section. Unknown keys and malformed values raise :class:`ConfigError` with
the offending line number.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import fields

from .sde_sim import SDEConfig
from .training import RunConfig

COMMANDS = ("train", "ablate", "sde", "landscape", "sweep", "capacity")


class ConfigError(ValueError):
    """Invalid configuration; carries a ``path:line:`` prefix when known."""


RUN_KEYS = {f.name: f for f in fields(RunConfig)}
SDE_KEYS = {f.name: f for f in fields(SDEConfig)}

COMMAND_KEYS = {
    "train": {},
    "ablate": {"architectures": "list", "include_pgd": "bool", "seeds": "int"},
    "sweep": {"methods": "list", "targets": "list", "seeds": "int"},
    "capacity": {"wide_width": "int", "wide_layers": "int", "seeds": "int"},
    "landscape": {"anchor_backend": "str", "other_backend": "str", "resolution": "int",
                  "extent": "float", "spaces": "list"},
    "sde": {},
}
EXPERIMENT_KEYS = {"seed": "int", "out": "str"}
REQUIRED = {"train": ("target",)}

_RUN_TYPES = {
    "backend": "str", "admm_schedule": "str", "admm_rho": "float?", "target": "str",
    "target_params": "dict", "loss": "str", "iterations": "int", "batch_size": "int", "lr": "float",
    "seed": "int", "hidden_width": "int?", "n_layers": "int", "strong_convexity": "float?",
    "n_cond": "int", "hyper_point_sizes": "ints", "hyper_pool_sizes": "ints", "train_size": "int",
    "val_size": "int", "test_size": "int", "val_every": "int", "window": "int",
    "history_stride": "int", "snapshot_stride": "int", "grid_step": "float",
    "train_grid_step": "float?", "grid_n_2d": "int", "init_jitter": "float", "diag_batches": "int",
    "probe_pairs": "int", "sigma_s": "float",
}
_SDE_TYPES = {
    "w0": "float", "ws": "float", "replicates": "int", "max_steps": "int", "dt": "float",
    "sigma_obj": "float", "sigma_jac_grid": "floats", "chunk": "int", "barrier_height": "float?",
}
assert set(_RUN_TYPES) == set(RUN_KEYS), "run key table out of date"
assert set(_SDE_TYPES) == set(SDE_KEYS), "sde key table out of date"


def _convert(kind, raw):
    raw = raw.strip()
    optional = kind.endswith("?")
    if optional:
        kind = kind[:-1]
        if raw.lower() in ("", "none"):
            return None
    if kind == "str":
        return raw
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "list":
        return tuple(p.strip() for p in raw.split(",") if p.strip())
    if kind == "ints":
        return tuple(int(p) for p in raw.split(",") if p.strip())
    if kind == "floats":
        return tuple(float(p) for p in raw.split(",") if p.strip())
    if kind == "dict":
        out = {}
        for item in filter(None, (p.strip() for p in raw.split(","))):
            if ":" not in item:
                raise ValueError(f"expected name:value, got {item!r}")
            k, v = item.split(":", 1)
            out[k.strip()] = float(v)
        return out
    raise AssertionError(kind)


def _line_index(text):
    """Map ``(section, key)`` to 1-based line numbers by scanning the raw text."""
    lines = {}
    section = None
    sec_re = re.compile(r"^\s*\[([^\]]+)\]\s*$")
    key_re = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")
    for no, line in enumerate(text.splitlines(), 1):
        m = sec_re.match(line)
        if m:
            section = m.group(1).strip()
            lines[(section, None)] = no
            continue
        if line.strip().startswith(("#", ";")) or not line.strip():
            continue
        m = key_re.match(line)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip().lower()), no)
    return lines


class ExperimentConfig:
    """Parsed config file: ``sections[name] -> {key: typed value}``."""

    def __init__(self, sections, path="<config>", lines=None):
        self.sections = sections
        self.path = path
        self.lines = lines or {}

    @property
    def seed(self):
        return self.sections.get("experiment", {}).get("seed", 0)

    @property
    def out(self):
        return self.sections.get("experiment", {}).get("out")

    def section(self, name):
        return dict(self.sections.get(name, {}))

    def error(self, section, key, msg):
        line = self.lines.get((section, key)) or self.lines.get((section, None))
        where = f"{self.path}:{line}: " if line else f"{self.path}: "
        return ConfigError(where + msg)

    def run_config(self, section, **override):
        vals = {k: v for k, v in self.section(section).items() if k in RUN_KEYS}
        vals.setdefault("seed", self.seed)
        vals.update(override)
        try:
            return RunConfig(**vals)
        except ValueError as err:
            raise self.error(section, None, f"[{section}] {err}") from None

    def sde_config(self):
        vals = {k: v for k, v in self.section("sde").items() if k in SDE_KEYS}
        try:
            return SDEConfig(**vals)
        except ValueError as err:
            raise self.error("sde", None, f"[sde] {err}") from None


def parse_config(text, path="<config>") -> ExperimentConfig:
    lines = _line_index(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=path)
    except configparser.Error as err:
        raise ConfigError(f"{path}: {err}") from None
    cfg = ExperimentConfig({}, path, lines)
    for sec in cp.sections():
        if sec == "experiment":
            allowed = EXPERIMENT_KEYS
        elif sec == "sde":
            allowed = _SDE_TYPES
        elif sec in COMMANDS:
            allowed = {**_RUN_TYPES, **COMMAND_KEYS[sec]}
        else:
            raise cfg.error(sec, None, f"unknown section [{sec}]; expected experiment or one of {', '.join(COMMANDS)}")
        vals = {}
        for key, raw in cp.items(sec):
            if key not in allowed:
                raise cfg.error(sec, key, f"unknown key {key!r} in [{sec}]")
            try:
                vals[key] = _convert(allowed[key], raw)
            except ValueError as err:
                raise cfg.error(sec, key, f"bad value for {key!r} in [{sec}]: {err}") from None
        cfg.sections[sec] = vals
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"{path}: cannot read config: {err.strerror}") from None
    return parse_config(text, str(path))


def require(cfg: ExperimentConfig, command: str):
    """Check the command's section exists and holds its required keys."""
    if command not in cfg.sections:
        raise ConfigError(f"{cfg.path}: missing section [{command}]")
    for key in REQUIRED.get(command, ()):
        if key not in cfg.sections[command]:
            raise cfg.error(command, None, f"missing required key {key!r} in [{command}]")
