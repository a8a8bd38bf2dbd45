"""Experiment driver: synthetic datasets, training runs, metrics, reports.

Everything here is deterministic given (config, seed, dataset): goal
sampling, per-episode environment seeds, exploration, and network init all
derive from independent seed-sequence streams, so rerunning a cell
reproduces its CSV byte for byte.
"""

from __future__ import annotations

import csv
import io
import time
from collections import namedtuple
from dataclasses import dataclass, field
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy import stats as scipy_stats

from .core import ActionCatalogue, RunConfig, UserGoal
from .env import DialogueEnv, feature_length
from .kb import KbTable
from .policy import (AdamState, QNetwork, ReplayBuffer, TrainingDiverged,
                     sync_target, train_step, warm_start_act)
from .rescue import EpisodeLog, episode_with_ddr
from .user_sim import sample_goal, validate_goal

AGENTS = ("dqn", "ddr-ig", "ddr-se")
_AGENT_RESCUE = {"dqn": "none", "ddr-ig": "ig", "ddr-se": "se"}

# Slot names for generated domains; extended mechanically past eight.
BASE_SLOTS = ("genre", "city", "theater", "date", "time", "rating", "price",
              "format")


class GenerationError(ValueError):
    """The dataset spec cannot be satisfied."""


@dataclass(frozen=True)
class DatasetSpec:
    slots: int = 8
    values_min: int = 3
    values_max: int = 6
    entries: int = 120
    goals: int = 128
    booking_prob: float = 0.5


def _slot_names(count: int) -> tuple[str, ...]:
    names = list(BASE_SLOTS[:count])
    names += [f"slot{i}" for i in range(len(names), count)]
    return tuple(names)


def generate_dataset(spec: DatasetSpec, seed: int) -> tuple[KbTable, list[UserGoal]]:
    """Deterministic table of distinct rows plus satisfiable goals."""
    if spec.slots < 2 or spec.entries < 2:
        raise GenerationError("need at least 2 slots and 2 entries")
    rng = np.random.default_rng(seed)
    schema = _slot_names(spec.slots)
    cardinalities = [int(rng.integers(spec.values_min, spec.values_max + 1))
                     for _ in schema]
    capacity = 1
    for c in cardinalities:
        capacity *= c
    if capacity < spec.entries:
        raise GenerationError(
            f"{spec.entries} distinct rows requested but only {capacity} "
            "value combinations exist")

    values = {slot: [f"{slot}_{j}" for j in range(cardinalities[i])]
              for i, slot in enumerate(schema)}
    seen: set[tuple[str, ...]] = set()
    rows = []
    while len(rows) < spec.entries:
        row = tuple(values[slot][int(rng.integers(cardinalities[i]))]
                    for i, slot in enumerate(schema))
        if row not in seen:
            seen.add(row)
            rows.append(dict(zip(schema, row)))
    table = KbTable.of(schema, rows)
    goals = [sample_goal(table, rng, spec.booking_prob)
             for _ in range(spec.goals)]
    assert all(validate_goal(g, table) for g in goals)
    return table, goals


def epsilon_at(epoch: int, config: RunConfig) -> float:
    """Linear decay from epsilon_start to epsilon_end over the training run."""
    if config.train_epochs <= 1:
        return config.epsilon_end
    frac = min(epoch / (config.train_epochs - 1), 1.0)
    return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start)


EpisodeStat = namedtuple("EpisodeStat", "success reached_zero")


def metrics_from_episodes(episodes) -> dict[str, float]:
    """SR, AE, AT from (success, return, length) triples."""
    total = len(episodes)
    if total == 0:
        raise ValueError("no episodes to score")
    succ = sum(1 for s, _, _ in episodes if s)
    return {
        "sr": succ / total,
        "ae": sum(r for _, r, _ in episodes) / total,
        "at": sum(l for _, _, l in episodes) / total,
    }


def _episode_seed(root: np.random.SeedSequence) -> int:
    return int(root.spawn(1)[0].generate_state(1, np.uint64)[0])


def evaluate_policy(net: QNetwork, table: KbTable, goals: list[UserGoal],
                    episodes: int, config: RunConfig, seed: int = 0
                    ) -> dict[str, float]:
    """Greedy rollouts without rescue; no buffer writes, no updates."""
    env = DialogueEnv(table, config)
    rng = np.random.default_rng(seed)  # only consumed if epsilon were nonzero
    triples = []
    root = np.random.SeedSequence([seed, 0xE7A1])
    for i in range(episodes):
        goal = goals[i % len(goals)]
        log, _, outcome = episode_with_ddr(
            env, net, config, rng, goal, _episode_seed(root), epsilon=0.0,
            rescue_mode="none", episode_id=i)
        triples.append((log.success, log.episode_return, log.length))
    return metrics_from_episodes(triples)


def dead_end_stats(per_seed_logs) -> dict:
    """Fraction of failed episodes whose match count hit zero, per Table-4.

    Accepts one list per seed of objects with ``success`` and
    ``reached_zero`` attributes. Seeds without failures are not applicable
    and are excluded from the mean rather than counted as zero.
    """
    per_seed = []
    for logs in per_seed_logs:
        failed = [log for log in logs if not log.success]
        if not failed:
            per_seed.append(None)
            continue
        per_seed.append(sum(1 for log in failed if log.reached_zero) / len(failed))
    usable = [r for r in per_seed if r is not None]
    if not usable:
        return {"ratio": None, "stddev": None, "per_seed": per_seed}
    return {
        "ratio": float(np.mean(usable)),
        "stddev": float(np.std(usable)),
        "per_seed": per_seed,
    }


def n_trace(net: QNetwork, table: KbTable, goals: list[UserGoal], goal_id: int,
            config: RunConfig, seed: int = 0) -> list[tuple[int, int]]:
    """Greedy rollout of one pinned goal, emitting (turn, n) pairs."""
    if not 0 <= goal_id < len(goals):
        raise ValueError(f"goal id {goal_id} outside 0..{len(goals) - 1}")
    env = DialogueEnv(table, config)
    rng = np.random.default_rng(seed)
    log, _, _ = episode_with_ddr(env, net, config, rng, goals[goal_id],
                                 seed, epsilon=0.0, rescue_mode="none")
    return [(0, log.initial_n)] + [(row["turn"], row["n"]) for row in log.rows]


def trace_to_csv(trace, agent: str, goal_id: int) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["turn", "n", "agent", "goal_id"])
    for turn, n in trace:
        writer.writerow([turn, n, agent, goal_id])
    return out.getvalue()


@dataclass
class EpochRecord:
    epoch: int
    sr: float
    ae: float
    at: float
    dead_end_ratio: float | None
    loss: float


@dataclass
class RunResult:
    """Everything one training run produces."""

    config: RunConfig
    records: list[EpochRecord]
    train_stats: list[EpisodeStat]
    net: QNetwork
    wall_seconds: float = 0.0
    episode_logs: list[EpisodeLog] = field(default_factory=list)

    @property
    def final_sr(self) -> float:
        return self.records[-1].sr

    @property
    def sr_curve(self) -> list[float]:
        return [r.sr for r in self.records]

    def dead_end_ratio(self) -> float | None:
        failed = [s for s in self.train_stats if not s.success]
        if not failed:
            return None
        return sum(1 for s in failed if s.reached_zero) / len(failed)


def train_run(config: RunConfig, table: KbTable, goals: list[UserGoal],
              keep_logs: bool = False) -> RunResult:
    """Warm start, then epochs of collection and buffer sweeps."""
    started = time.perf_counter()
    root = np.random.SeedSequence(config.seed)
    net_ss, explore_ss, goal_ss, env_root, batch_ss, eval_ss = root.spawn(6)
    catalogue = ActionCatalogue(table.schema)
    input_dim = feature_length(len(table.schema), len(catalogue))
    net = QNetwork.init(input_dim, len(catalogue), config.hidden_dim,
                        dueling=(config.dqn_variant == "dueling"),
                        rng=np.random.default_rng(net_ss))
    target = sync_target(net)
    opt = AdamState(config.learning_rate)
    buffer = ReplayBuffer(config.buffer_capacity)
    explore_rng = np.random.default_rng(explore_ss)
    goal_rng = np.random.default_rng(goal_ss)
    batch_rng = np.random.default_rng(batch_ss)
    eval_seed = int(np.random.default_rng(eval_ss).integers(2 ** 31))
    env = DialogueEnv(table, config)

    def pick_goal() -> UserGoal:
        return goals[int(goal_rng.integers(len(goals)))]

    episode_id = 0
    for _ in range(config.warm_start_epochs):
        for _ in range(config.dialogues_per_epoch):
            _, experiences, _ = episode_with_ddr(
                env, None, config, explore_rng, pick_goal(),
                _episode_seed(env_root), epsilon=0.0, actor=warm_start_act,
                rescue_mode="none", episode_id=episode_id)
            for exp in experiences:
                buffer.push(exp)
            episode_id += 1

    records: list[EpochRecord] = []
    train_stats: list[EpisodeStat] = []
    kept_logs: list[EpisodeLog] = []
    last_good = net.copy()
    since_update = 0
    try:
        for epoch in range(config.train_epochs):
            eps = epsilon_at(epoch, config)
            if epoch % max(config.target_sync_every, 1) == 0:
                target = sync_target(net)
            losses = []
            epoch_stats: list[EpisodeStat] = []
            for _ in range(config.dialogues_per_epoch):
                log, experiences, _ = episode_with_ddr(
                    env, net, config, explore_rng, pick_goal(),
                    _episode_seed(env_root), epsilon=eps,
                    episode_id=episode_id)
                episode_id += 1
                for exp in experiences:
                    buffer.push(exp)
                    since_update += 1
                    if (config.update_every_experiences
                            and since_update >= config.update_every_experiences):
                        since_update = 0
                        losses.append(train_step(
                            net, target, buffer.sample(config.batch_size, batch_rng),
                            config.discount, config.dqn_variant, opt))
                epoch_stats.append(EpisodeStat(log.success, log.reached_zero))
                if keep_logs:
                    kept_logs.append(log)
            if not config.update_every_experiences:
                for batch in buffer.epoch_batches(config.batch_size, batch_rng):
                    losses.append(train_step(net, target, batch,
                                             config.discount,
                                             config.dqn_variant, opt))
            train_stats.extend(epoch_stats)
            last_good = net.copy()
            if (epoch + 1) % config.eval_every == 0 or epoch == config.train_epochs - 1:
                metrics = evaluate_policy(net, table, goals,
                                          config.eval_episodes, config,
                                          seed=eval_seed + epoch)
                epoch_failed = [s for s in epoch_stats if not s.success]
                ratio = (sum(1 for s in epoch_failed if s.reached_zero)
                         / len(epoch_failed)) if epoch_failed else None
                records.append(EpochRecord(
                    epoch + 1, metrics["sr"], metrics["ae"], metrics["at"],
                    ratio, float(np.mean(losses)) if losses else 0.0))
    except TrainingDiverged as exc:
        exc.last_good_net = last_good
        raise

    return RunResult(config, records, train_stats, net,
                     time.perf_counter() - started, kept_logs)


def agent_config(base: RunConfig, agent: str, seed: int | None = None) -> RunConfig:
    """Specialize a base config for one of the named agents."""
    if agent not in _AGENT_RESCUE:
        raise ValueError(f"unknown agent {agent!r}; expected one of {AGENTS}")
    overrides = {"rescue_mode": _AGENT_RESCUE[agent]}
    if seed is not None:
        overrides["seed"] = seed
    return base.replace(**overrides)


def _run_cell(args) -> "RunResult":
    config, table, goals = args
    return train_run(config, table, goals)


def run_grid(configs: list[RunConfig], table: KbTable, goals: list[UserGoal],
             workers: int | None = None) -> list[RunResult]:
    """Run independent cells, optionally in parallel processes."""
    jobs = [(config, table, goals) for config in configs]
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell, jobs))
    return [_run_cell(job) for job in jobs]


def paired_one_sided_p(improved, baseline) -> float:
    """p-value that the paired mean of ``improved`` exceeds ``baseline``."""
    result = scipy_stats.ttest_rel(improved, baseline, alternative="greater")
    return float(result.pvalue)


# ---------------------------------------------------------------------------
# File emission. Floats are written with repr so reading the CSV back
# reproduces the in-memory values exactly.

def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def run_result_csv(result: RunResult) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["agent", "variant", "noise", "seed", "epoch", "sr", "ae",
                     "at", "dead_end_ratio", "loss"])
    agent = {v: k for k, v in _AGENT_RESCUE.items()}[result.config.rescue_mode]
    for rec in result.records:
        writer.writerow([
            agent, result.config.dqn_variant,
            _fmt(result.config.slot_error_rate), result.config.seed,
            rec.epoch, _fmt(rec.sr), _fmt(rec.ae), _fmt(rec.at),
            _fmt(rec.dead_end_ratio), _fmt(rec.loss)])
    return out.getvalue()


def run_result_summary(result: RunResult) -> dict:
    return {
        "config": result.config.to_json(),
        "final": {
            "epoch": result.records[-1].epoch,
            "sr": result.final_sr,
            "ae": result.records[-1].ae,
            "at": result.records[-1].at,
        },
        "dead_end_ratio": result.dead_end_ratio(),
        "train_episodes": len(result.train_stats),
        "wall_seconds": result.wall_seconds,
    }


def parse_run_csv(text: str) -> list[dict]:
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        parsed = dict(row)
        for key in ("sr", "ae", "at", "loss"):
            parsed[key] = float(row[key])
        parsed["epoch"] = int(row["epoch"])
        parsed["seed"] = int(row["seed"])
        parsed["dead_end_ratio"] = (None if row["dead_end_ratio"] == "n/a"
                                    else float(row["dead_end_ratio"]))
        rows.append(parsed)
    return rows


def aggregate_report(rows: list[dict]) -> list[dict]:
    """Mean and stddev per (agent, variant, noise, epoch) across seeds."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = (row["agent"], row["variant"], row["noise"], row["epoch"])
        groups.setdefault(key, []).append(row)
    report = []
    for key in sorted(groups):
        agent, variant, noise, epoch = key
        members = groups[key]
        entry = {"agent": agent, "variant": variant, "noise": noise,
                 "epoch": epoch, "seeds": len(members)}
        for metric in ("sr", "ae", "at"):
            values = [m[metric] for m in members]
            entry[f"{metric}_mean"] = float(np.mean(values))
            entry[f"{metric}_std"] = float(np.std(values))
        ratios = [m["dead_end_ratio"] for m in members
                  if m["dead_end_ratio"] is not None]
        entry["dead_end_ratio_mean"] = float(np.mean(ratios)) if ratios else None
        entry["dead_end_ratio_std"] = float(np.std(ratios)) if ratios else None
        report.append(entry)
    return report


def report_csv(report: list[dict]) -> str:
    out = io.StringIO()
    fieldnames = ["agent", "variant", "noise", "epoch", "seeds",
                  "sr_mean", "sr_std", "ae_mean", "ae_std", "at_mean",
                  "at_std", "dead_end_ratio_mean", "dead_end_ratio_std"]
    writer = csv.DictWriter(out, fieldnames=fieldnames)
    writer.writeheader()
    for entry in report:
        writer.writerow({k: _fmt(entry[k]) for k in fieldnames})
    return out.getvalue()
