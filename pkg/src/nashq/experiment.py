"""Config-driven experiments: build a game, train, verify, write artifacts.

A config is a JSON document with a ``version`` field. Unknown keys are
errors. The resolved config, with every default filled in, is written next
to the artifacts and is enough to reproduce them byte for byte.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import InvalidGameError, load_game, derive_seed
from .envs import (GridworldSpec, RandomGameSpec, blind_state_maps, build_gridworld,
                   build_spurious_game, canonical_games, generate_random_game)
from .equilibrium import SolverFailure
from .learning.agents import PartialInfoAgent, RandomAgent
from .learning.runners import (evaluate_greedy, inference_agent, run_agents, run_episodic,
                               run_full_info)
from .learning.schedules import ExplorationSchedule, LearningRateSchedule
from .learning.trace import CHECKPOINT_COLUMNS, write_rows_csv
from .verify import (certificate_document, certify_nash, convergence_metric, marginal_consistency,
                     reconstruct_full_q, run_fingerprint)

CONFIG_VERSION = 1
LEARNERS = ("partial_info", "full_info", "fictitious", "inference", "random")
ENV_KINDS = ("random_game", "gridworld", "spurious", "canonical", "json")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


def _err(path, msg):
    return ConfigError(f"{path}: {msg}")


def _check_keys(d, allowed, path):
    if not isinstance(d, dict):
        raise _err(path, f"expected an object, got {type(d).__name__}")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise _err(path, f"unknown keys {unknown}; allowed {sorted(allowed)}")


def _int(v, path, minimum=1):
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise _err(path, f"must be an integer >= {minimum}, got {v!r}")
    return v


def _num(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _err(path, f"must be a number, got {v!r}")
    return float(v)


_ENV_FIELDS = {
    "random_game": {"d1", "d2", "d_s", "h", "gamma_1", "gamma_2", "seed"},
    "gridworld": {"width", "height", "start_1", "start_2", "target_1", "target_2",
                  "max_episode_len", "gamma"},
    "spurious": {"base", "n_states", "seed", "gamma_1", "gamma_2"},
    "canonical": {"name", "gamma_1", "gamma_2"},
    "json": {"path", "sha256"},
}


def resolve_environment(env, base_dir="."):
    """Validate an environment section and fill its defaults."""
    path = "environment"
    if not isinstance(env, dict) or "kind" not in env:
        raise _err(path, "must be an object with a 'kind' field")
    kind = env["kind"]
    if kind not in ENV_KINDS:
        raise _err(path + ".kind", f"must be one of {list(ENV_KINDS)}, got {kind!r}")
    fields = _ENV_FIELDS[kind]
    _check_keys(env, fields | {"kind"}, path)
    body = {k: v for k, v in env.items() if k != "kind"}
    for k in ("gamma", "gamma_1", "gamma_2", "h"):
        if k in body:
            v = _num(body[k], f"{path}.{k}")
            ok = 0.0 <= v <= 1.0 if k == "h" else 0.0 < v < 1.0
            if not ok:
                rng = "[0, 1]" if k == "h" else "(0, 1)"
                raise _err(f"{path}.{k}", f"must lie in {rng}, got {v!r}")
    try:
        if kind == "random_game":
            return dict(kind=kind, **RandomGameSpec(**body).to_dict())
        if kind == "gridworld":
            return dict(kind=kind, **GridworldSpec(**body).to_dict())
        if kind == "canonical":
            names = canonical_games()
            name = body.get("name")
            if name not in names:
                raise _err(f"{path}.name", f"must be one of {sorted(names)}, got {name!r}")
            return {"kind": kind, "name": name, "gamma_1": body.get("gamma_1", 0.9),
                    "gamma_2": body.get("gamma_2", 0.9)}
        if kind == "spurious":
            names = canonical_games()
            base = body.get("base", "prisoners_dilemma")
            if base not in names:
                raise _err(f"{path}.base", f"must be one of {sorted(names)}, got {base!r}")
            return {"kind": kind, "base": base, "n_states": _int(body.get("n_states", 4),
                                                                 f"{path}.n_states", 2),
                    "seed": _int(body.get("seed", 0), f"{path}.seed", 0),
                    "gamma_1": body.get("gamma_1", 0.9), "gamma_2": body.get("gamma_2", 0.8)}
        p = body.get("path")
        if not isinstance(p, str):
            raise _err(f"{path}.path", "must be a string")
        full = os.path.abspath(os.path.join(base_dir, p))
        if not os.path.exists(full):
            raise _err(f"{path}.path", f"file not found: {full}")
        try:
            digest = load_game(full).fingerprint()
        except (OSError, json.JSONDecodeError, InvalidGameError) as exc:
            raise _err(f"{path}.path", f"cannot load game: {exc}") from exc
        if "sha256" in body and body["sha256"] != digest:
            raise _err(f"{path}.sha256", "game file changed since the config was resolved")
        return {"kind": kind, "path": full, "sha256": digest}
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise _err(path, str(exc)) from exc


def build_environment(env):
    """Game for a resolved environment section."""
    kind = env["kind"]
    body = {k: v for k, v in env.items() if k != "kind"}
    if kind == "random_game":
        return generate_random_game(RandomGameSpec(**body))
    if kind == "gridworld":
        return build_gridworld(GridworldSpec(**body))
    if kind == "canonical":
        return canonical_games()[env["name"]].stochastic(env["gamma_1"], env["gamma_2"])
    if kind == "spurious":
        base = canonical_games()[env["base"]].bimatrix
        return build_spurious_game(base, env["n_states"], env["seed"], env["gamma_1"],
                                   env["gamma_2"])
    return load_game(env["path"])


_TOP_KEYS = {"version", "name", "environment", "learners", "schedule", "exploration", "n_steps",
             "n_episodes", "max_episode_len", "checkpoint_every", "seed", "certify_tol",
             "selector", "observation", "inference", "eval_rollouts", "output_dir"}


@dataclass
class ExperimentConfig:
    environment: dict
    learners: tuple = ("partial_info", "partial_info")
    schedule: dict = field(default_factory=dict)
    exploration: dict = field(default_factory=dict)
    n_steps: int | None = 4000
    n_episodes: int | None = None
    max_episode_len: int = 200
    checkpoint_every: int = 50
    seed: int = 0
    certify_tol: float = 0.05
    selector: str = "lemke_howson"
    observation: tuple = ("full", "full")
    inference: dict = field(default_factory=dict)
    eval_rollouts: int = 100
    name: str = ""
    version: int = CONFIG_VERSION
    output_dir: str | None = None

    @property
    def episodic(self):
        return self.n_episodes is not None

    def resolved(self):
        """Snapshot dict; excludes ``output_dir`` so it reproduces anywhere."""
        d = asdict(self)
        d.pop("output_dir")
        d["learners"] = list(self.learners)
        d["observation"] = list(self.observation)
        return d


def parse_config(raw, base_dir="."):
    """Validate a config dict and return an :class:`ExperimentConfig` with defaults filled."""
    _check_keys(raw, _TOP_KEYS, "config")
    if raw.get("version") != CONFIG_VERSION:
        raise _err("version", f"must be {CONFIG_VERSION}, got {raw.get('version')!r}")
    if "environment" not in raw:
        raise _err("environment", "required")
    env = resolve_environment(raw["environment"], base_dir)

    learners = raw.get("learners", ["partial_info", "partial_info"])
    if not isinstance(learners, list) or len(learners) != 2:
        raise _err("learners", "must be a list of two learner names")
    for i, name in enumerate(learners):
        if name not in LEARNERS:
            raise _err(f"learners[{i}]", f"must be one of {list(LEARNERS)}, got {name!r}")
    if ("full_info" in learners) and learners != ["full_info", "full_info"]:
        raise _err("learners", "full_info couples both players' updates; use it for both")
    if learners.count("inference") + learners.count("fictitious") > 1:
        raise _err("learners", "at most one player may use an opponent model")

    n_steps = raw.get("n_steps")
    n_episodes = raw.get("n_episodes")
    if n_steps is not None and n_episodes is not None:
        raise _err("n_steps", "give either n_steps or n_episodes, not both")
    if n_episodes is not None:
        _int(n_episodes, "n_episodes")
        if "full_info" in learners:
            raise _err("learners", "episodic training supports marginal, opponent-model and random learners")
    else:
        n_steps = _int(4000 if n_steps is None else n_steps, "n_steps")
    episodic = n_episodes is not None

    default_sched = {"kind": "constant", "value": 0.5} if episodic else {"kind": "global_stair",
                                                                          "width": 250}
    sched_raw = raw.get("schedule", default_sched)
    _check_keys(sched_raw, {"kind", "width", "offset", "value"}, "schedule")
    try:
        sched = LearningRateSchedule(**sched_raw).to_dict()
    except (TypeError, ValueError) as exc:
        raise _err("schedule", str(exc)) from exc
    expl_raw = raw.get("exploration", {})
    _check_keys(expl_raw, {"epsilon_min", "decay"}, "exploration")
    try:
        expl = ExplorationSchedule(**expl_raw).to_dict()
    except (TypeError, ValueError) as exc:
        raise _err("exploration", str(exc)) from exc

    observation = raw.get("observation", ["full", "full"])
    if not isinstance(observation, list) or len(observation) != 2 or \
            any(o not in ("full", "blind") for o in observation):
        raise _err("observation", "must be two entries from ['full', 'blind']")
    if "blind" in observation and env["kind"] != "gridworld":
        raise _err("observation", "blind observation is defined for the gridworld only")
    for i, o in enumerate(observation):
        if o == "blind" and learners[i] != "partial_info":
            raise _err(f"observation[{i}]", "only partial_info learners can be blind")

    inf_raw = raw.get("inference", {})
    _check_keys(inf_raw, {"refresh_every", "history_cap"}, "inference")
    inference = {"refresh_every": _int(inf_raw.get("refresh_every", 100), "inference.refresh_every"),
                 "history_cap": _int(inf_raw.get("history_cap", 100_000), "inference.history_cap")}

    default_max_len = env.get("max_episode_len", 200)
    tol = _num(raw.get("certify_tol", 0.05), "certify_tol")
    if tol <= 0:
        raise _err("certify_tol", "must be positive")
    selector = raw.get("selector", "lemke_howson")
    if selector not in ("lemke_howson", "support_enumeration"):
        raise _err("selector", f"unknown selector {selector!r}")
    output_dir = raw.get("output_dir")
    if output_dir is not None:
        output_dir = os.path.abspath(os.path.join(base_dir, output_dir))
    return ExperimentConfig(
        environment=env, learners=tuple(learners), schedule=sched, exploration=expl,
        n_steps=None if episodic else n_steps, n_episodes=n_episodes,
        max_episode_len=_int(raw.get("max_episode_len", default_max_len), "max_episode_len"),
        checkpoint_every=_int(raw.get("checkpoint_every", 100 if episodic else 50),
                              "checkpoint_every"),
        seed=_int(raw.get("seed", 0), "seed", 0), certify_tol=tol, selector=selector,
        observation=tuple(observation), inference=inference,
        eval_rollouts=_int(raw.get("eval_rollouts", 100), "eval_rollouts"),
        name=str(raw.get("name", "")), output_dir=output_dir)


def load_config(path):
    """Read and validate a JSON config file; syntax errors report line and column."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"{path}: file not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return parse_config(raw, os.path.dirname(os.path.abspath(path)))


def _start_state(game):
    return int((game.metadata or {}).get("start_state", 0))


def _make_agents(cfg, game):
    sched = LearningRateSchedule.from_dict(cfg.schedule)
    maps = (None, None)
    if "blind" in cfg.observation:
        spec = GridworldSpec(**{k: v for k, v in cfg.environment.items() if k != "kind"})
        blind = blind_state_maps(spec)
        maps = tuple(blind[i] if cfg.observation[i] == "blind" else None for i in range(2))
    agents = []
    for i, name in enumerate(cfg.learners):
        if name == "partial_info":
            m = maps[i]
            n_obs = game.n_states if m is None else max(m) + 1
            agents.append(PartialInfoAgent(game.n_actions[i], n_obs, game.gammas[i], sched, 1e-9, m))
        elif name == "random":
            agents.append(RandomAgent(game.n_actions[i]))
        else:
            method = "em_filter" if name == "inference" else "empirical_frequency"
            try:
                agents.append(inference_agent(game, i, method, sched, 1e-9,
                                              cfg.inference["refresh_every"],
                                              cfg.inference["history_cap"]))
            except ValueError as exc:
                raise _err(f"learners[{i}]", str(exc)) from exc
    return agents


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    certificate: dict
    checkpoint_rows: list
    late_reward: tuple
    output_dir: str | None = None
    wall_seconds: float = 0.0
    files: dict = field(default_factory=dict)


def execute(cfg):
    """Train and verify; returns the artifacts as in-memory objects."""
    game = build_environment(cfg.environment)
    sched = LearningRateSchedule.from_dict(cfg.schedule)
    expl = ExplorationSchedule.from_dict(cfg.exploration)
    start = _start_state(game)
    tables_kind = ["marginal", "marginal"]
    models = (None, None)
    if cfg.learners[0] == "full_info":
        res = run_full_info(game, sched, expl, cfg.selector, cfg.n_steps, cfg.seed,
                            cfg.checkpoint_every, start)
        tables = res.tables
        ck_tables = [c.tables for c in res.checkpoints]
        tables_kind = ["joint", "joint"]
        agents = None
    else:
        agents = _make_agents(cfg, game)
        if cfg.episodic:
            res = run_episodic(game, agents, cfg.n_episodes, start, expl, cfg.seed,
                               cfg.max_episode_len, cfg.checkpoint_every)
        else:
            res = run_agents(game, agents, cfg.n_steps, expl, cfg.seed, start, cfg.checkpoint_every)
            models = res.models
        tables = res.tables
        ck_tables = [c.tables for c in res.checkpoints]

    profile = res.profile
    recon = reconstruct_full_q(game, profile)
    cert = certify_nash(game, profile, cfg.certify_tol)

    def comparable(i, table):
        # blind tables are indexed by observation; expand them to states
        m = getattr(agents[i], "state_map", None) if agents else None
        return table if m is None else table[np.asarray(m)]

    ck_rows = []
    for ck, tabs in zip(res.checkpoints, ck_tables):
        row = [ck.t]
        for i in range(2):
            if cfg.learners[i] in ("random", "inference", "fictitious"):
                row.append(float("nan"))
            else:
                row.append(convergence_metric(comparable(i, tabs[i]), recon, ck.profile, i))
        ck_rows.append(row)

    extra = {"learners": list(cfg.learners)}
    consistency = []
    for i in range(2):
        if tables_kind[i] == "marginal" and cfg.learners[i] == "partial_info":
            consistency.append(marginal_consistency(comparable(i, tables[i]), recon, profile, i))
        else:
            consistency.append(None)
    extra["marginal_consistency"] = consistency
    extra["final_metric"] = ck_rows[-1][1:] if ck_rows else None
    if cfg.episodic:
        ev = evaluate_greedy(game, agents, start, cfg.eval_rollouts, cfg.seed, cfg.max_episode_len)
        joint = ev[:, 0] + ev[:, 1]
        extra["evaluation"] = {"rollouts": cfg.eval_rollouts,
                               "success_rate": float(np.mean(joint == 2 * GridworldSpec.reward_goal))
                               if cfg.environment["kind"] == "gridworld" else None,
                               "mean_return_1": float(ev[:, 0].mean()),
                               "mean_return_2": float(ev[:, 1].mean())}
    extra["n_fallbacks"] = getattr(res, "n_fallbacks", 0)
    doc = certificate_document(cert, recon, run_fingerprint(game, cfg.seed, sched), extra)

    trace = res.trace
    if cfg.episodic:
        n = len(trace)
        tail = slice(n - max(1, n // 10), n)
        steps = trace.column("steps")[tail].sum()
        late = tuple(float(trace.column(f"return_{i}")[tail].sum() / max(steps, 1)) for i in (1, 2))
    else:
        n = len(trace)
        tail = slice(n - max(1, n // 10), n)
        late = tuple(float(trace.column(f"r{i}")[tail].mean()) for i in (1, 2))
    doc["late_mean_reward"] = list(late)

    tables_doc = {
        "kinds": tables_kind,
        "tables": [np.asarray(t).tolist() for t in tables],
        "profile": profile.to_dict(),
        "opponent_models": [None if m is None else {"method": m.method, "pi_hat": m.pi_hat.tolist()}
                            for m in models],
        "game_sha256": game.fingerprint(),
    }
    return game, res, doc, ck_rows, tables_doc, late


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1, allow_nan=True)
        fh.write("\n")


def run_experiment(cfg, output_dir=None):
    """Run ``cfg`` and write its artifacts into ``output_dir``.

    Files: ``config.resolved.json``, ``trace.csv``, ``checkpoints.csv``,
    ``certificate.json`` and ``tables.json``. Identical config and seed give
    byte-identical files.
    """
    out = output_dir or cfg.output_dir
    if out is None:
        raise ConfigError("output_dir: required (config field or --out)")
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    game, res, doc, ck_rows, tables_doc, late = execute(cfg)
    wall = time.perf_counter() - t0
    files = {
        "config": os.path.join(out, "config.resolved.json"),
        "trace": os.path.join(out, "trace.csv"),
        "checkpoints": os.path.join(out, "checkpoints.csv"),
        "certificate": os.path.join(out, "certificate.json"),
        "tables": os.path.join(out, "tables.json"),
    }
    _dump(cfg.resolved(), files["config"])
    res.trace.to_csv(files["trace"])
    write_rows_csv(files["checkpoints"], CHECKPOINT_COLUMNS, ck_rows)
    _dump(doc, files["certificate"])
    _dump(tables_doc, files["tables"])
    return ExperimentResult(cfg, doc, ck_rows, late, out, wall, files)


def _run_one(args):
    cfg, seed = args
    cfg = ExperimentConfig(**dict(asdict(cfg), seed=seed))
    t0 = time.perf_counter()
    _, _, doc, ck_rows, _, late = execute(cfg)
    return doc, late, time.perf_counter() - t0


RUN_COLUMNS = ("config", "seed", "gap_1", "gap_2", "passed", "metric_1", "metric_2",
               "late_reward_1", "late_reward_2")
SUMMARY_STATS = ("gap_1", "gap_2", "metric_1", "metric_2", "late_reward_1", "late_reward_2")


def compare_learners(configs, n_seeds=1, output_dir=".", jobs=1):
    """Run every config over ``n_seeds`` seeds and write comparison tables.

    With one seed the config's own seed is used; otherwise seed ``k`` is
    ``derive_seed(config.seed, k)``. Writes ``runs.csv`` (one row per run),
    ``summary.csv`` (mean and sample standard deviation across seeds) and
    ``timing.csv`` (wall-clock, kept apart so the other files stay
    reproducible).
    """
    if not configs:
        raise ConfigError("compare: at least one config is required")
    env0 = configs[0].environment
    for k, c in enumerate(configs[1:], 1):
        if c.environment != env0:
            raise ConfigError(f"configs[{k}].environment: differs from configs[0]")
    names = [c.name or f"config{k}" for k, c in enumerate(configs)]
    tasks = []
    for name, c in zip(names, configs):
        seeds = [c.seed] if n_seeds == 1 else [derive_seed(c.seed, k) for k in range(n_seeds)]
        tasks.extend((name, c, s) for s in seeds)
    work = [(c, s) for _, c, s in tasks]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_one, work))
    else:
        outcomes = [_run_one(w) for w in work]

    rows, timing = [], []
    for (name, _, seed), (doc, late, wall) in zip(tasks, outcomes):
        metric = doc.get("final_metric") or [float("nan"), float("nan")]
        rows.append([name, seed, doc["gap_1"], doc["gap_2"], int(doc["passed"]), metric[0],
                     metric[1], late[0], late[1]])
        timing.append([name, seed, wall])
    os.makedirs(output_dir, exist_ok=True)
    write_rows_csv(os.path.join(output_dir, "runs.csv"), RUN_COLUMNS, rows)
    write_rows_csv(os.path.join(output_dir, "timing.csv"), ("config", "seed", "wall_seconds"), timing)

    summary = []
    header = ["config", "n_seeds", "pass_rate"]
    for s in SUMMARY_STATS:
        header += [f"{s}_mean", f"{s}_std"]
    for name in names:
        sub = np.array([r[2:] for r in rows if r[0] == name], dtype=float)
        line = [name, len(sub), float(sub[:, 2].mean())]
        cols = {"gap_1": 0, "gap_2": 1, "metric_1": 3, "metric_2": 4, "late_reward_1": 5,
                "late_reward_2": 6}
        for s in SUMMARY_STATS:
            v = sub[:, cols[s]]
            line += [float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else float("nan")]
        summary.append(line)
    write_rows_csv(os.path.join(output_dir, "summary.csv"), header, summary)
    return rows, summary


def generate_game_file(spec_path, out_path):
    """Build the game described by an environment JSON file and save it."""
    from .core import save_game

    try:
        with open(spec_path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"{spec_path}: file not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{spec_path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if isinstance(raw, dict) and "environment" in raw and "kind" not in raw:
        raw = raw["environment"]
    env = resolve_environment(raw, os.path.dirname(os.path.abspath(spec_path)))
    game = build_environment(env)
    save_game(game, out_path)
    return game


__all__ = ["ConfigError", "ExperimentConfig", "SolverFailure", "compare_learners", "execute",
           "generate_game_file", "load_config", "parse_config", "run_experiment"]
