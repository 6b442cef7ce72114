"""Flat key-value experiment configs.

Grammar: one ``key = value`` per line, ``#`` starts a comment, blank lines
ignored. Keys are dotted paths (``train.steps``); values are typed by shape:
int, float, bool (``true``/``false``), comma-separated list, else string.
Unknown keys are rejected so typos fail loudly instead of silently using a
default.
"""

from __future__ import annotations

import numpy as np

from .agents import agent_kinds, make_agent
from .disturbance import Kind, Site
from .env import TASK_CARTPOLE, TASK_QUADROTOR, make_env
from .errors import ConfigError

# key -> (expected type or tuple of types, default). list defaults are tuples
# so configs stay hashable.
SCHEMA = {
    "task": (str, TASK_CARTPOLE),
    "agent": (str, "ppo"),
    "seed": (int, 0),
    "seeds": (tuple, ()),                 # overrides seed for multi-seed runs
    "workers": (int, 1),
    "out.dir": (str, "results"),
    "train.steps": (int, 100_000),
    "train.eval_interval": (int, 10_000),
    "train.eval_episodes": (int, 5),
    "train.stop_return": (float, -1.0),   # < 0 disables early stopping
    "train.disturbance.site": (str, ""),
    "train.disturbance.kind": (str, ""),
    "train.disturbance.level": (float, 0.0),
    "eval.episodes": (int, 25),
    "disturbance.site": (str, "dynamics"),
    "disturbance.kind": (str, "none"),
    "disturbance.level": (float, 0.0),
    "disturbance.onset_step": (int, 2),
    "disturbance.width_steps": (int, 2),
    "disturbance.period_steps": (int, 50),
    "sweep.levels": (tuple, ()),
    "heatmap.train_levels": (tuple, ()),
    "heatmap.test_levels": (tuple, ()),
    "ablate.kind": (str, "dr_range"),
    "weights.state": (tuple, ()),         # diagonal override, empty = task default
    "weights.action": (tuple, ()),
    "checkpoint.path": (str, ""),
    "plot.out": (str, ""),
}

HYPER_PREFIX = "hyper."


def _parse_scalar(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return tuple(_parse_scalar(t.strip()) for t in text.split(",") if t.strip())
    return _parse_scalar(text)


def parse(path: str) -> dict:
    """Read a config file into a typed dict; raises ConfigError with the
    offending line number on malformed input."""
    config = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            if key in config:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            config[key] = parse_value(value)
    return config


def resolve(config: dict | None = None, overrides: dict | None = None) -> dict:
    """Defaults, then file values, then command-line overrides.

    The result contains every schema key, so two runs with the same resolved
    config are byte-identical regardless of which layer supplied each value.
    """
    out = {key: default for key, (_, default) in SCHEMA.items()}
    for layer in (config or {}), (overrides or {}):
        for key, value in layer.items():
            if key in SCHEMA:
                expected, default = SCHEMA[key]
                if expected is tuple and not isinstance(value, tuple):
                    value = (value,)
                elif expected is float and isinstance(value, (int, bool)):
                    value = float(value)
                elif expected is str and not isinstance(value, str):
                    raise ConfigError(f"{key}: expected a string, got {value!r}")
                out[key] = value
            elif key.startswith(HYPER_PREFIX):
                out[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
    return out


def hyper_overrides(config: dict) -> dict:
    return {k[len(HYPER_PREFIX):]: v for k, v in config.items()
            if k.startswith(HYPER_PREFIX)}


def validate(config: dict) -> list[str]:
    """Typed invariant checks; returns human-readable problem list (empty = valid)."""
    problems = []
    task = config.get("task")
    if task not in (TASK_CARTPOLE, TASK_QUADROTOR):
        problems.append(f"task: unknown task {task!r}")
        return problems

    env = make_env(task)
    kind = config.get("agent")
    if kind not in agent_kinds():
        problems.append(f"agent: unknown kind {kind!r}; known: {agent_kinds()}")

    def check_int(key, minimum):
        v = config.get(key)
        if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
            problems.append(f"{key}: must be an integer >= {minimum}, got {v!r}")

    check_int("train.steps", 1)
    check_int("train.eval_interval", 1)
    check_int("train.eval_episodes", 1)
    check_int("eval.episodes", 1)
    check_int("workers", 1)
    check_int("disturbance.onset_step", 0)
    check_int("disturbance.width_steps", 1)
    check_int("disturbance.period_steps", 2)

    for prefix in ("disturbance", "train.disturbance"):
        site_name = config.get(f"{prefix}.site")
        kind_name = config.get(f"{prefix}.kind")
        if prefix == "train.disturbance" and not site_name and not kind_name:
            continue
        try:
            site = Site(site_name)
        except ValueError:
            problems.append(f"{prefix}.site: unknown site {site_name!r}")
            continue
        try:
            Kind(kind_name)
        except ValueError:
            problems.append(f"{prefix}.kind: unknown kind {kind_name!r}")
        level = config.get(f"{prefix}.level")
        if not isinstance(level, (int, float)) or isinstance(level, bool) or level < 0:
            problems.append(f"{prefix}.level: must be a number >= 0, got {level!r}")
        # site dimensionality is fixed by the task; record it for the reader
        _ = env.site_dims()[site]

    for key in ("sweep.levels", "heatmap.train_levels", "heatmap.test_levels"):
        levels = config.get(key, ())
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 0
                   for v in levels):
            problems.append(f"{key}: levels must be numbers >= 0, got {levels!r}")
        elif any(b < a for a, b in zip(levels, levels[1:])):
            problems.append(f"{key}: levels must be non-decreasing, got {levels!r}")

    for key, dim in (("weights.state", env.state_dim), ("weights.action", env.action_dim)):
        diag = config.get(key, ())
        if diag:
            if len(diag) != dim:
                problems.append(f"{key}: expected {dim} entries for {task}, got {len(diag)}")
            elif any(v < 0 for v in diag):
                # diagonal weight matrices are PSD iff every entry is >= 0
                problems.append(f"{key}: entries must be >= 0 for a PSD cost, got {diag!r}")

    seeds = config.get("seeds", ())
    if not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        problems.append(f"seeds: must be integers, got {seeds!r}")

    if kind in agent_kinds():
        try:
            make_agent(kind, env, 0, hyper_overrides(config))
        except ConfigError as exc:
            problems.append(f"hyper: {exc}")
    return problems


def seeds_of(config: dict) -> list[int]:
    seeds = config.get("seeds", ())
    return list(seeds) if seeds else [int(config.get("seed", 0))]


def format_resolved(config: dict) -> str:
    lines = []
    for key in sorted(config):
        value = config[key]
        if isinstance(value, tuple):
            value = ", ".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines)
