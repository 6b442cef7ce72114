"""Experiment orchestration: training runs, disturbance sweeps, train-by-test
heat maps, ablation tables, and CSV persistence.

Everything is a pure function of (config, seeds): episode streams are keyed
substreams, evaluation episode ``e`` uses ``substream(seed, "eval", e)``, and
heat-map rows share the sweep code path so the clean-trained row matches the
one-dimensional sweep bit-exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics, streams
from .agents import dr_wrap, make_agent
from .disturbance import DR_CARTPOLE, DR_QUADROTOR, DisturbanceSpec, Kind, Site
from .env import TASK_CARTPOLE, TASK_QUADROTOR, make_env
from .errors import ConfigError, DomainError, UsageError

SCHEMA_VERSION = 1
N_EVAL_DEFAULT = 25

RESULTS_COLUMNS = ["task", "agent", "seed", "site", "kind", "train_level",
                   "test_level", "param_overrides", "n_episodes", "mean_return",
                   "std_return", "mean_rmse", "std_rmse", "mean_len"]

DR_TABLE = {TASK_CARTPOLE: DR_CARTPOLE, TASK_QUADROTOR: DR_QUADROTOR}

# Ablation grids
DR_RANGE_GRID = ["default", "low", "mid", "high"]
ADVERSARY_SCALE_GRID = [0.01, 0.1, 0.5, 1.0]
CVAR_ALPHA_GRID = [0.1, 0.3, 0.5, 1.0]


@dataclass(frozen=True)
class EvalSummary:
    returns: tuple          # episode returns (sum of rewards)
    lengths: tuple
    rmses: tuple

    @property
    def n(self):
        return len(self.returns)

    @property
    def normalized(self):
        return tuple(r / l for r, l in zip(self.returns, self.lengths))

    @property
    def mean_return(self):
        return metrics.avg_normalized_return(list(zip(self.returns, self.lengths)))

    @property
    def std_return(self):
        return float(np.std(self.normalized))

    @property
    def mean_rmse(self):
        return float(np.mean(self.rmses))

    @property
    def std_rmse(self):
        return float(np.std(self.rmses))

    @property
    def mean_len(self):
        return float(np.mean(self.lengths))


@dataclass
class EvalRecord:
    task: str
    agent: str
    seed: int
    site: str
    kind: str
    train_level: float
    test_level: float
    param_overrides: str    # "name=value;..." applied on top of nominal params
    returns: tuple
    lengths: tuple
    rmses: tuple
    failed: bool = False

    @classmethod
    def from_summary(cls, summary, **fields):
        return cls(returns=summary.returns, lengths=summary.lengths,
                   rmses=summary.rmses, **fields)

    def row(self):
        s = EvalSummary(self.returns, self.lengths, self.rmses)
        return [self.task, self.agent, self.seed, self.site, self.kind,
                repr(float(self.train_level)), repr(float(self.test_level)),
                self.param_overrides, s.n, repr(s.mean_return), repr(s.std_return),
                repr(s.mean_rmse), repr(s.std_rmse), repr(s.mean_len)]


def site_dim(task: str, site: Site) -> int:
    env = make_env(task)
    return env.site_dims()[site]


def parse_overrides(text: str) -> dict:
    if not text:
        return {}
    out = {}
    for item in text.split(";"):
        name, _, value = item.partition("=")
        out[name.strip()] = float(value)
    return out


def format_overrides(overrides: dict) -> str:
    return ";".join(f"{k}={v}" for k, v in sorted(overrides.items()))


def _as_specs(disturbance):
    if disturbance is None:
        return ()
    if isinstance(disturbance, DisturbanceSpec):
        return (disturbance,)
    return tuple(disturbance)


def build_env(task, mode="train", disturbance=None, param_overrides: dict | None = None):
    env = make_env(task, mode=mode, disturbances=_as_specs(disturbance))
    if param_overrides:
        env.set_params(**param_overrides)
    return env


# -- training ----------------------------------------------------------------

def train(task, agent_kind, seed, train_steps, hyper=None,
          train_disturbance: DisturbanceSpec | None = None,
          eval_interval=10_000, eval_episodes=5, stop_return=None,
          checkpoint_path=None):
    """Train one agent; returns (agent, learning-curve rows, failed flag).

    Curve rows are (env_step, normalized return, rmse) measured with the
    deterministic policy. A run that diverges (non-finite loss or parameters)
    is returned with ``failed=True`` instead of raising.
    """
    env = build_env(task, "train", train_disturbance)
    agent = make_agent(agent_kind, env, seed, hyper)
    if agent_kind == "ppo_dr":
        dr_wrap(agent, DR_TABLE[task][agent.hyper.dr_range])

    curve = []
    failed = False
    steps = 0
    iteration = 0
    next_eval = 0
    while steps < train_steps:
        if steps >= next_eval:
            summary = evaluate(agent, task, n=eval_episodes, seed=seed)
            curve.append((steps, summary.mean_return, summary.mean_rmse))
            next_eval += eval_interval
            if stop_return is not None and summary.mean_return >= stop_return:
                break
        try:
            n, _ = agent.train_iteration(env, seed, iteration)
        except DomainError:
            failed = True
            break
        steps += n
        iteration += 1
    if not failed:
        summary = evaluate(agent, task, n=eval_episodes, seed=seed)
        curve.append((steps, summary.mean_return, summary.mean_rmse))
    if checkpoint_path is not None:
        agent.save(checkpoint_path)
    return agent, curve, failed


def load_agent(checkpoint_path, task):
    """Rebuild an agent of the checkpointed kind for ``task`` and load weights."""
    from .nn import load_checkpoint

    _, header = load_checkpoint(checkpoint_path)
    kind = header.get("agent")
    env = make_env(task)
    if int(header.get("obs_dim", env.obs_dim)) != env.obs_dim:
        raise UsageError(
            f"checkpoint was trained for obs_dim {header.get('obs_dim')}, "
            f"task {task!r} has obs_dim {env.obs_dim}")
    hyper = {k[len("hyper."):]: v for k, v in header.items() if k.startswith("hyper.")}
    agent = make_agent(kind, env, 0, hyper)
    agent.load(checkpoint_path)
    return agent


# -- evaluation --------------------------------------------------------------

def evaluate(agent, task, disturbance=None, param_overrides: dict | None = None,
             n=N_EVAL_DEFAULT, seed=0) -> EvalSummary:
    """N episodes with the deterministic policy from the fixed eval initial state.

    ``disturbance`` is a spec, a sequence of specs on distinct sites, or None.
    Episode e uses RNG substream (seed, "eval", e): noise realizations differ
    across episodes but the whole summary is reproducible.
    """
    returns, lengths, rmses = [], [], []
    for e in range(n):
        env = build_env(task, "eval", disturbance, param_overrides)
        obs = env.reset(streams.substream(seed, "eval", e))
        done = False
        total = 0.0
        states, refs = [], []
        step = 0
        while not done:
            s, ref = env.rmse_pair(env.state, step)
            states.append(s)
            refs.append(ref)
            obs, reward, done, info = env.step(agent.act(obs))
            total += reward
            step += 1
        returns.append(total)
        lengths.append(step)
        rmses.append(metrics.rmse(states, refs))
    return EvalSummary(tuple(returns), tuple(lengths), tuple(rmses))


def _parallel_map(fn, jobs, workers=1):
    if workers <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda j: fn(*j), jobs))


def sweep_1d(agent, task, site: Site, kind: Kind, levels, n=N_EVAL_DEFAULT,
             seed=0, train_level=0.0, agent_label=None, workers=1,
             spec_kwargs=None) -> list[EvalRecord]:
    """One evaluation per disturbance level, rows sorted by level."""
    if len(levels) == 0:
        raise ConfigError("sweep levels must be non-empty")
    levels = sorted(levels)
    dim = site_dim(task, site)
    label = agent_label or agent.kind

    def cell(level):
        spec = DisturbanceSpec(site=site, kind=kind, level=level, dim=dim,
                               **(spec_kwargs or {}))
        summary = evaluate(agent, task, spec, n=n, seed=seed)
        return EvalRecord.from_summary(
            summary, task=task, agent=label, seed=seed, site=site.value,
            kind=kind.value, train_level=train_level, test_level=level,
            param_overrides="")

    return _parallel_map(cell, [(l,) for l in levels], workers)


def heatmap(task, agent_kind, site: Site, train_levels, test_levels, seed=0,
            train_steps=100_000, hyper=None, n=N_EVAL_DEFAULT, workers=1,
            checkpoint_dir=None) -> list[EvalRecord]:
    """Train one agent per training noise level, test each on every level.

    Training injects white noise at the row's level on ``site``; testing
    reuses :func:`sweep_1d`, so the level-0 row equals the plain sweep of a
    clean-trained agent bit-exactly under shared seeds.
    """
    if len(train_levels) == 0 or len(test_levels) == 0:
        raise ConfigError("heatmap level lists must be non-empty")
    dim = site_dim(task, site)
    records = []
    for train_level in sorted(train_levels):
        spec = DisturbanceSpec(site=site, kind=Kind.WHITE_NOISE,
                               level=train_level, dim=dim)
        ckpt = None
        if checkpoint_dir is not None:
            ckpt = os.path.join(checkpoint_dir,
                                f"{agent_kind}_train{train_level:g}.ckpt")
        agent, _, failed = train(task, agent_kind, seed, train_steps, hyper,
                                 train_disturbance=spec, checkpoint_path=ckpt)
        if failed:
            for test_level in sorted(test_levels):
                records.append(EvalRecord(
                    task=task, agent=agent_kind, seed=seed, site=site.value,
                    kind=Kind.WHITE_NOISE.value, train_level=train_level,
                    test_level=test_level, param_overrides="", returns=(),
                    lengths=(), rmses=(), failed=True))
            continue
        records.extend(sweep_1d(agent, task, site, Kind.WHITE_NOISE, test_levels,
                                n=n, seed=seed, train_level=train_level,
                                agent_label=agent_kind, workers=workers))
    return records


# -- ablations ---------------------------------------------------------------

# Test conditions mirroring the domain-randomization ablation's row set:
# nominal, parameter scalings, observation+action noise, random tap force.
def _ablation_conditions(task):
    obs_dim = site_dim(task, Site.OBSERVATION)
    act_dim = site_dim(task, Site.ACTION)
    return [
        ("default", None, None),
        ("params_x1.5", None, 1.5),
        ("params_x8", None, 8.0),
        ("obs_act_noise",
         [DisturbanceSpec(site=Site.OBSERVATION, kind=Kind.WHITE_NOISE,
                          level=0.1, dim=obs_dim),
          DisturbanceSpec(site=Site.ACTION, kind=Kind.WHITE_NOISE,
                          level=1.0, dim=act_dim)], None),
        ("tap_force",
         [DisturbanceSpec(site=Site.DYNAMICS, kind=Kind.UNIFORM_NOISE,
                          level=1.0, dim=2)], None),
    ]


def _scaled_overrides(task, factor):
    if factor is None:
        return {}
    nominal = make_env(task).params
    names = [f.name for f in dataclasses.fields(nominal) if f.name != "gravity"]
    if task == TASK_QUADROTOR:
        names = [n for n in names if n in ("mass", "inertia_yy")]
    return {name: getattr(nominal, name) * factor for name in names}


def _evaluate_conditions(agent, task, label, seed, n):
    records = []
    for cond_name, specs, scale in _ablation_conditions(task):
        overrides = _scaled_overrides(task, scale)
        env_specs = specs or []
        summary = evaluate(agent, task, env_specs, overrides, n=n, seed=seed)
        site = "+".join(s.site.value for s in env_specs) if env_specs else ""
        kind = "+".join(s.kind.value for s in env_specs) if env_specs else cond_name
        level = env_specs[0].level if env_specs else 0.0
        records.append(EvalRecord.from_summary(
            summary, task=task, agent=label, seed=seed, site=site, kind=kind,
            train_level=0.0, test_level=level,
            param_overrides=format_overrides(overrides)))
    return records


def ablate(kind, task=TASK_CARTPOLE, seed=0, train_steps=50_000, n=N_EVAL_DEFAULT,
           hyper=None) -> list[EvalRecord]:
    """Train the grid of variants for one ablation and evaluate each on the
    shared condition set. ``kind`` is dr_range, adversary_scale, or cvar_alpha."""
    hyper = dict(hyper or {})
    variants = []
    if kind == "dr_range":
        variants.append(("ppo", "ppo", hyper))
        for r in DR_RANGE_GRID:
            variants.append((f"ppo_dr[{r}]", "ppo_dr", {**hyper, "dr_range": r}))
    elif kind == "adversary_scale":
        variants.append(("ppo", "ppo", hyper))
        for agent_kind in ("rarl", "rap"):
            for s in ADVERSARY_SCALE_GRID:
                variants.append((f"{agent_kind}[{s}]", agent_kind,
                                 {**hyper, "adversary_scale": s}))
    elif kind == "cvar_alpha":
        variants.append(("ppo", "ppo", hyper))
        for s in CVAR_ALPHA_GRID:
            variants.append((f"wcpg[{s}]", "wcpg",
                             {**hyper, "alpha_low": s, "alpha_high": s}))
        for s in CVAR_ALPHA_GRID:
            variants.append((f"raac[{s}]", "raac", {**hyper, "alpha": s}))
    else:
        raise ConfigError(f"unknown ablation kind {kind!r}")

    records = []
    for label, agent_kind, overrides in variants:
        agent, _, failed = train(task, agent_kind, seed, train_steps, overrides)
        if failed:
            for cond_name, _, _ in _ablation_conditions(task):
                records.append(EvalRecord(
                    task=task, agent=label, seed=seed, site="", kind=cond_name,
                    train_level=0.0, test_level=0.0, param_overrides="",
                    returns=(), lengths=(), rmses=(), failed=True))
            continue
        records.extend(_evaluate_conditions(agent, task, label, seed, n))
    return records


# -- persistence -------------------------------------------------------------

def fingerprint(config: dict) -> str:
    text = "\n".join(f"{k} = {config[k]}" for k in sorted(config))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def persist(records, directory, config: dict | None = None):
    """Write results.csv (aggregates), episodes.csv (per-episode data), and a
    manifest with the resolved config and its fingerprint."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "results.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(RESULTS_COLUMNS + ["failed"])
        for rec in records:
            writer.writerow(rec.row() + [int(rec.failed)])
    with open(os.path.join(directory, "episodes.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["record", "episode", "episode_return", "length", "rmse"])
        for i, rec in enumerate(records):
            for e, (r, l, m) in enumerate(zip(rec.returns, rec.lengths, rec.rmses)):
                writer.writerow([i, e, repr(r), l, repr(m)])
    config = dict(config or {})
    with open(os.path.join(directory, "manifest.txt"), "w") as f:
        f.write(f"schema = {SCHEMA_VERSION}\n")
        for k in sorted(config):
            f.write(f"{k} = {config[k]}\n")
        f.write(f"fingerprint = {fingerprint(config)}\n")


def load(directory) -> list[EvalRecord]:
    """Inverse of :func:`persist`; raises on unknown schema version."""
    manifest_path = os.path.join(directory, "manifest.txt")
    with open(manifest_path) as f:
        first = f.readline().strip()
    if first != f"schema = {SCHEMA_VERSION}":
        raise UsageError(f"unsupported results schema: {first!r}")
    with open(os.path.join(directory, "results.csv"), newline="") as f:
        rows = list(csv.reader(f))
    header, rows = rows[0], rows[1:]
    if header[:len(RESULTS_COLUMNS)] != RESULTS_COLUMNS:
        raise UsageError("results.csv header does not match the documented schema")
    episodes = {}
    with open(os.path.join(directory, "episodes.csv"), newline="") as f:
        ep_rows = list(csv.reader(f))[1:]
    for rec_i, _, r, l, m in ep_rows:
        episodes.setdefault(int(rec_i), []).append((float(r), int(l), float(m)))
    records = []
    for i, row in enumerate(rows):
        eps = episodes.get(i, [])
        records.append(EvalRecord(
            task=row[0], agent=row[1], seed=int(row[2]), site=row[3], kind=row[4],
            train_level=float(row[5]), test_level=float(row[6]),
            param_overrides=row[7],
            returns=tuple(e[0] for e in eps), lengths=tuple(e[1] for e in eps),
            rmses=tuple(e[2] for e in eps), failed=bool(int(row[14]))))
    return records


def aggregate_curves(curves) -> list[tuple]:
    """Merge per-seed learning curves into (step, mean, std, n_seeds) rows."""
    by_step = {}
    for curve in curves:
        for step, ret, _rmse in curve:
            by_step.setdefault(step, []).append(ret)
    return [(step, float(np.mean(vals)), float(np.std(vals)), len(vals))
            for step, vals in sorted(by_step.items())]


def write_curve(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "mean_metric", "std_metric", "n_seeds"])
        for step, mean, std, n in rows:
            writer.writerow([step, repr(mean), repr(std), n])
