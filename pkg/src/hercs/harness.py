"""Experiment orchestration: train/evaluate epochs, multi-seed suites, outputs.

Each seed owns independent random streams derived from ``(seed, purpose)``:
training env resets, exploration noise, batch sampling, network init and
k-means seeding. Evaluation goals come from ``(seed, EVAL, epoch)`` so
every algorithm is scored on the same goals at a given epoch.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .cluster import GoalClusterer, is_partition
from .envs import make_env
from .learner import TrainConfig, TrainingDiverged, make_agent
from .plotting import write_band_chart
from .replay import EpisodeBuffer, EpisodeRecorder
from .sampling import CS_ALGOS, BatchSampler, SamplerConfig

log = logging.getLogger(__name__)

_TRAIN_ENV, _EXPLORE, _SAMPLER, _INIT, _KMEANS, _EVAL = range(1, 7)

SEED_CSV_HEADER = ["seed", "epoch", "success_rate", "cluster_version", "wall_time_ms"]
AGG_CSV_HEADER = ["epoch", "mean_success_rate", "min_success_rate", "max_success_rate", "n_seeds"]


def stream(seed: int, *purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *purpose]))


@dataclass
class ExperimentConfig:
    env: str = "bitflip:10"
    algo: str = "her"
    epochs: int = 50
    cycles_per_epoch: int = 10
    episodes_per_cycle: int = 4
    optimizer_steps: int = 40
    eval_episodes: int = 20
    seeds: Tuple[int, ...] = (1, 2, 3, 4, 5)
    batch_size: int = 256
    k: int = 4
    fgb_capacity: int = 100
    future_p: float = 0.8
    buffer_capacity: int = 1000
    energy_epsilon: float = 1e-4
    kmeans_max_iters: int = 100
    kmeans_tol: float = 1e-6
    gamma: float = 0.98
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    polyak_tau: float = 0.05
    exploration_eps: float = 0.2
    action_noise_sigma: float = 0.1
    target_clip: bool = True
    hidden: Tuple[int, ...] = (64, 64)
    record_wall_time: bool = False
    workers: int = 1

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(self.algo, self.batch_size, self.k, self.future_p, self.energy_epsilon)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            gamma=self.gamma, lr_actor=self.lr_actor, lr_critic=self.lr_critic,
            polyak_tau=self.polyak_tau, exploration_eps=self.exploration_eps,
            action_noise_sigma=self.action_noise_sigma, target_clip=self.target_clip,
            hidden=tuple(self.hidden),
        )

    def problems(self) -> List[str]:
        out = []
        try:
            make_env(self.env)
        except ValueError as exc:
            out.append(str(exc))
        out += self.sampler_config().problems()
        out += self.train_config().problems()
        for name in ("epochs", "cycles_per_epoch", "episodes_per_cycle", "buffer_capacity",
                     "fgb_capacity", "workers", "kmeans_max_iters"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1")
        if self.optimizer_steps < 0:
            out.append("optimizer_steps must be >= 0")
        if self.eval_episodes < 1:
            out.append("eval_episodes >= 1 required")
        if not self.seeds:
            out.append("seeds must be non-empty")
        elif len(set(self.seeds)) != len(self.seeds):
            out.append("seeds must be distinct")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ValueError("invalid config: " + "; ".join(problems))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class EpochMetrics:
    seed: int
    epoch: int
    success_rate: float
    successes: int
    eval_episodes: int
    cluster_model_version: int = 0
    bucket_sizes: List[int] = field(default_factory=list)
    wall_time: float = 0.0


def rollout(env, agent, explore: bool, rng):
    """Run one full episode. Returns the recorded episode and the final step result."""
    obs = env.reset()
    rec = EpisodeRecorder(obs)
    result = None
    for _ in range(env.spec.horizon):
        action = agent.act(obs, explore, rng)
        result = env.step(action)
        rec.add(action, result)
        obs = result.observation
    return rec.finish(), result


def evaluate(policy, env, eval_episodes: int, rng) -> float:
    """Fraction of greedy episodes whose final step meets the goal."""
    return _evaluate_count(policy, env, eval_episodes, rng) / eval_episodes


def _evaluate_count(policy, env, eval_episodes, rng) -> int:
    env.seed(rng)
    wins = 0
    for _ in range(eval_episodes):
        _, last = rollout(env, policy, explore=False, rng=rng)
        wins += bool(last.is_success)
    return wins


class SeedRun:
    """All mutable state of one (config, seed) training run."""

    def __init__(self, cfg: ExperimentConfig, seed: int):
        self.cfg, self.seed = cfg, seed
        self.env = make_env(cfg.env, seed=stream(seed, _TRAIN_ENV))
        self.eval_env = make_env(cfg.env)
        self.spec = self.env.spec
        self.replay = EpisodeBuffer(self.spec, cfg.buffer_capacity)
        self.clusterer = None
        if cfg.algo in CS_ALGOS:
            self.clusterer = GoalClusterer(cfg.k, cfg.fgb_capacity, cfg.kmeans_max_iters,
                                           cfg.kmeans_tol, rng=stream(seed, _KMEANS))
        self.sampler = BatchSampler(cfg.sampler_config(), self.replay, self.clusterer)
        self.agent = make_agent(self.spec, cfg.train_config(), rng=stream(seed, _INIT))
        self.explore_rng = stream(seed, _EXPLORE)
        self.sampler_rng = stream(seed, _SAMPLER)
        self.epoch = 0
        self.refits: List[dict] = []
        self.losses: List[float] = []

    @property
    def cluster_version(self) -> int:
        return self.clusterer.model.version if self.clusterer else 0

    @property
    def bucket_sizes(self) -> List[int]:
        return self.clusterer.index.sizes if self.clusterer else []

    def collect(self, n_episodes: int):
        for _ in range(n_episodes):
            episode, _ = rollout(self.env, self.agent, True, self.explore_rng)
            self.replay.store_episode(episode)
            self.agent.observe_episode(episode)
            if self.clusterer is not None and self.clusterer.observe(episode, self.replay):
                event = {"seed": self.seed, "epoch": self.epoch,
                         "version": self.clusterer.model.version,
                         "bucket_sizes": self.clusterer.index.sizes}
                self.refits.append(event)
                log.info("refit %s", json.dumps(event))

    def train(self, n_steps: int):
        for _ in range(n_steps):
            batch = self.sampler.sample(self.sampler_rng)
            self.losses.append(self.agent.update(batch))
            if not self.agent.all_finite():
                raise TrainingDiverged("training diverged")
        self.agent.sync_target()

    def partition_ok(self) -> bool:
        if self.clusterer is None or not self.clusterer.model.fitted:
            return True
        return is_partition(self.clusterer.index, self.replay.ids)


def run_epoch(run: SeedRun) -> EpochMetrics:
    cfg = run.cfg
    start = time.perf_counter()
    for _ in range(cfg.cycles_per_epoch):
        run.collect(cfg.episodes_per_cycle)
        run.train(cfg.optimizer_steps)
    wins = _evaluate_count(run.agent, run.eval_env, cfg.eval_episodes,
                           stream(run.seed, _EVAL, run.epoch))
    metrics = EpochMetrics(
        seed=run.seed, epoch=run.epoch, success_rate=wins / cfg.eval_episodes,
        successes=wins, eval_episodes=cfg.eval_episodes,
        cluster_model_version=run.cluster_version, bucket_sizes=list(run.bucket_sizes),
        wall_time=time.perf_counter() - start,
    )
    run.epoch += 1
    return metrics


def run_seed(cfg: ExperimentConfig, seed: int) -> Tuple[List[EpochMetrics], List[dict]]:
    run = SeedRun(cfg, seed)
    metrics = []
    for _ in range(cfg.epochs):
        metrics.append(run_epoch(run))
        log.debug("seed %d epoch %d success %.2f", seed, metrics[-1].epoch,
                  metrics[-1].success_rate)
    return metrics, run.refits


def _run_seed_safe(cfg, seed):
    try:
        return run_seed(cfg, seed)
    except Exception as exc:
        raise RuntimeError(f"seed {seed} failed: {exc}") from exc


def seed_csv(metrics: Sequence[EpochMetrics], record_wall_time: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SEED_CSV_HEADER)
    for m in metrics:
        wall = f"{m.wall_time * 1000:.0f}" if record_wall_time else ""
        w.writerow([m.seed, m.epoch, repr(m.success_rate), m.cluster_model_version, wall])
    return buf.getvalue()


@dataclass
class SuiteSummary:
    algo: str
    seeds: List[int]
    epochs: np.ndarray
    rates: np.ndarray  # (n_seeds, epochs)
    per_seed: Dict[int, List[EpochMetrics]] = field(default_factory=dict)

    @property
    def mean(self) -> np.ndarray:
        return self.rates.mean(axis=0)

    @property
    def min(self) -> np.ndarray:
        return self.rates.min(axis=0)

    @property
    def max(self) -> np.ndarray:
        return self.rates.max(axis=0)

    @property
    def auc(self) -> float:
        """Area under the mean curve, normalized by the number of epochs."""
        return float(self.mean.mean())

    def band_width(self, last: int = 10) -> float:
        return float(np.mean((self.max - self.min)[-last:]))

    def aggregate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(AGG_CSV_HEADER)
        for e, mu, lo, hi in zip(self.epochs, self.mean, self.min, self.max):
            w.writerow([int(e), repr(float(mu)), repr(float(lo)), repr(float(hi)), len(self.seeds)])
        return buf.getvalue()

    def chart_series(self) -> dict:
        return {"x": self.epochs.tolist(), "mean": self.mean.tolist(),
                "min": self.min.tolist(), "max": self.max.tolist()}


def summarize(algo: str, per_seed: Dict[int, List[EpochMetrics]]) -> SuiteSummary:
    seeds = sorted(per_seed)
    rates = np.array([[m.success_rate for m in per_seed[s]] for s in seeds])
    epochs = np.array([m.epoch for m in per_seed[seeds[0]]])
    return SuiteSummary(algo, seeds, epochs, rates, per_seed)


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}-g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def run_suite(cfg: ExperimentConfig, out_dir=None) -> SuiteSummary:
    """Run every seed, aggregate, and (if ``out_dir``) write CSVs and a chart.

    Files written under ``out_dir/<algo>/``: ``seed_<s>.csv``,
    ``refits_seed_<s>.jsonl``, ``aggregate.csv`` and ``chart.svg``.
    """
    cfg.validate()
    seeds = list(cfg.seeds)
    results = {}
    if cfg.workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(seeds))) as pool:
            futures = {s: pool.submit(_run_seed_safe, cfg, s) for s in seeds}
            for s in seeds:
                results[s] = futures[s].result()
    else:
        for s in seeds:
            results[s] = _run_seed_safe(cfg, s)
    per_seed = {s: results[s][0] for s in seeds}
    summary = summarize(cfg.algo, per_seed)
    if out_dir is not None:
        d = Path(out_dir) / cfg.algo
        d.mkdir(parents=True, exist_ok=True)
        for s in seeds:
            (d / f"seed_{s}.csv").write_text(seed_csv(per_seed[s], cfg.record_wall_time))
            (d / f"refits_seed_{s}.jsonl").write_text(
                "".join(json.dumps(ev) + "\n" for ev in results[s][1]))
        (d / "aggregate.csv").write_text(summary.aggregate_csv())
        write_band_chart(d / "chart.svg", {cfg.algo: summary.chart_series()},
                         title=f"{cfg.env}: {cfg.algo}")
    return summary


def write_manifest(out_dir, cfg: ExperimentConfig, algos: Sequence[str], summaries=None):
    manifest = {
        "version": version_string(),
        "config": cfg.to_dict(),
        "algos": list(algos),
    }
    if summaries:
        manifest["auc"] = {s.algo: s.auc for s in summaries}
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def compare(cfg: ExperimentConfig, algos: Sequence[str], out_dir=None) -> List[SuiteSummary]:
    """Run one suite per algorithm on shared seeds and draw them on one chart."""
    summaries = []
    for algo in algos:
        summaries.append(run_suite(dataclasses.replace(cfg, algo=algo), out_dir))
    if out_dir is not None:
        out = Path(out_dir)
        write_band_chart(out / "comparison.svg", {s.algo: s.chart_series() for s in summaries},
                         title=f"{cfg.env}: success rate")
        (out / "summary.csv").write_text(summary_table(summaries))
        write_manifest(out, cfg, algos, summaries)
    return summaries


def summary_table(summaries: Sequence[SuiteSummary], last: int = 10) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algo", "auc", "final_mean", f"band_width_last{last}"])
    for s in summaries:
        w.writerow([s.algo, f"{s.auc:.4f}", f"{s.mean[-1]:.4f}", f"{s.band_width(last):.4f}"])
    return buf.getvalue()


def read_seed_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
