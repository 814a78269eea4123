"""End-to-end experiment loop: channels, scheduling, local training, aggregation.

Each round draws a fresh block-fading realization, runs the configured
policy, trains the scheduled UEs from the current global model, merges
their weights, advances the age counters, and records metrics. Every
random draw comes from a substream keyed by (master seed, purpose, round,
UE), so a run is a pure function of its config and runs sharing a seed see
identical topologies, fading, and SGD sampling regardless of policy.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import streams
from .allocation import RadioConfig
from .channel import ChannelConfig, ChannelRealization, sample_gains, sample_topology
from .errors import ConfigError, InvariantViolation
from .learning import (
    LearningConfig,
    LocalDataset,
    aggregate,
    evaluate,
    generate_synthetic,
    load_dataset_csv,
    load_idx,
    local_update,
    partition_dataset,
)
from .scheduler import (
    POLICIES,
    FairnessConfig,
    ScheduleDecision,
    abs_schedule,
    aou_objective,
    aou_step,
    maxpack_schedule,
    random_schedule,
    round_robin_schedule,
    validate_decision,
)

INIT_WEIGHT_SCALE = 0.01  # std of the Gaussian initial model


@dataclass(frozen=True)
class DataConfig:
    """Where the training pool comes from and how it is split across UEs."""

    source: str = "synthetic"  # synthetic | csv | idx
    partition: str = "iid"  # iid | shard
    test_fraction: float = 0.1  # held-out share for synthetic/csv sources
    num_samples: int = 2000
    dimension: int = 10
    margin: float = 1.0
    csv_path: str | None = None
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    digit_a: int = 3
    digit_b: int = 5

    def __post_init__(self):
        if self.source not in ("synthetic", "csv", "idx"):
            raise ConfigError(f"unknown data source '{self.source}'")
        if self.partition not in ("iid", "shard"):
            raise ConfigError(f"unknown partition scheme '{self.partition}'")
        if not 0 < self.test_fraction < 1:
            raise ConfigError(f"test_fraction must be in (0, 1), got {self.test_fraction}")
        if self.source == "synthetic":
            if self.num_samples < 2:
                raise ConfigError(f"num_samples must be >= 2, got {self.num_samples}")
            if self.dimension < 1:
                raise ConfigError(f"dimension must be >= 1, got {self.dimension}")
            if self.margin < 0:
                raise ConfigError(f"margin must be >= 0, got {self.margin}")
        if self.source == "csv" and not self.csv_path:
            raise ConfigError("csv source requires csv_path")
        if self.source == "idx":
            missing = [
                name
                for name in ("train_images", "train_labels", "test_images", "test_labels")
                if getattr(self, name) is None
            ]
            if missing:
                raise ConfigError(f"idx source requires {', '.join(missing)}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; the number of subchannels lives in ``channel``."""

    num_ues: int = 20
    rounds: int = 50
    master_seed: int = 0
    policy: str = "abs"
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    fairness: FairnessConfig = field(default_factory=FairnessConfig)
    learning: LearningConfig = field(default_factory=LearningConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self):
        if self.num_ues < 1:
            raise ConfigError(f"K must be >= 1, got {self.num_ues}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.master_seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.master_seed}")
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy '{self.policy}' (expected one of {POLICIES})")


@dataclass(frozen=True)
class RoundMetrics:
    """Per-round observables; ages are the decision-time values."""

    round_index: int
    accuracy: float
    scheduled_count: int
    mean_age: float
    max_age: int
    objective: float
    wall_time: float


@dataclass(frozen=True)
class RunResult:
    metrics: tuple[RoundMetrics, ...]
    final_weights: np.ndarray
    config: ExperimentConfig
    seed: int


def prepare_data(config: ExperimentConfig):
    """Build the per-UE training portions and the fixed test set."""
    seed = config.master_seed
    data = config.data
    if data.source == "idx":
        pool = load_idx(data.train_images, data.train_labels, data.digit_a, data.digit_b)
        test = load_idx(data.test_images, data.test_labels, data.digit_a, data.digit_b)
    else:
        if data.source == "synthetic":
            pool, _ = generate_synthetic(
                data.num_samples, data.dimension, data.margin, streams.substream(seed, streams.SYNTH_DATA)
            )
        else:
            pool = load_dataset_csv(data.csv_path)
        pool, test = _holdout_split(pool, data.test_fraction, streams.substream(seed, streams.TEST_SPLIT))
    if pool.size < config.num_ues:
        raise ConfigError(
            f"training pool of {pool.size} samples cannot cover K={config.num_ues} UEs"
        )
    portions = partition_dataset(
        pool, config.num_ues, data.partition, streams.substream(seed, streams.PARTITION)
    )
    return portions, test


def _holdout_split(pool: LocalDataset, fraction: float, rng) -> tuple[LocalDataset, LocalDataset]:
    n_test = max(1, int(round(fraction * pool.size)))
    if n_test >= pool.size:
        raise ConfigError("test_fraction leaves no training samples")
    perm = rng.permutation(pool.size)
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    return (
        LocalDataset(pool.features[train_idx], pool.labels[train_idx]),
        LocalDataset(pool.features[test_idx], pool.labels[test_idx]),
    )


def schedule_round(
    config: ExperimentConfig,
    ages: np.ndarray,
    realization: ChannelRealization,
    cursor: int,
    round_index: int,
) -> tuple[ScheduleDecision, int]:
    """Dispatch to the configured policy; returns the decision and new cursor."""
    if config.policy == "abs":
        return abs_schedule(ages, realization, config.radio, config.fairness), cursor
    if config.policy == "maxpack":
        return maxpack_schedule(realization, config.radio), cursor
    if config.policy == "round_robin":
        return round_robin_schedule(ages, realization, config.radio, cursor)
    rng = streams.substream(config.master_seed, streams.POLICY, round_index)
    return random_schedule(realization, config.radio, rng), cursor


def run(config: ExperimentConfig) -> RunResult:
    """Execute the full training loop for one seed."""
    seed = config.master_seed
    topology = sample_topology(
        config.num_ues, config.channel, streams.substream(seed, streams.TOPOLOGY)
    )
    portions, test = prepare_data(config)
    dim = test.dimension
    weights = INIT_WEIGHT_SCALE * streams.substream(seed, streams.MODEL_INIT).standard_normal(dim)
    ages = np.zeros(config.num_ues, dtype=np.int64)
    cursor = 0
    metrics = []
    for t in range(config.rounds):
        started = time.perf_counter()
        realization = sample_gains(
            topology, config.channel, streams.substream(seed, streams.FADING, t)
        )
        decision, cursor = schedule_round(config, ages, realization, cursor, t)
        validate_decision(decision, realization, config.radio)
        objective = aou_objective(ages, decision.selected, config.fairness.alpha)
        chosen = np.flatnonzero(decision.selected)
        if chosen.size:
            locals_ = [
                local_update(
                    weights, portions[k], config.learning, streams.substream(seed, streams.LOCAL_SGD, t, k)
                )
                for k in chosen
            ]
            weights = aggregate(locals_, [portions[k].size for k in chosen])
        # else: no upload this round; the global model is carried over unchanged
        new_ages = aou_step(ages, decision.selected)
        if not np.array_equal(new_ages == 0, decision.selected == 1):
            raise InvariantViolation("age vector inconsistent with the selection")
        metrics.append(
            RoundMetrics(
                round_index=t,
                accuracy=evaluate(weights, test),
                scheduled_count=decision.scheduled_count,
                mean_age=float(ages.mean()),
                max_age=int(ages.max()),
                objective=objective,
                wall_time=time.perf_counter() - started,
            )
        )
        ages = new_ages
    return RunResult(metrics=tuple(metrics), final_weights=weights, config=config, seed=seed)


def sweep(config: ExperimentConfig, seeds, max_workers: int | None = None):
    """Independent runs over a seed list; output is identical for any worker count."""
    seeds = list(seeds)
    if not seeds:
        raise ValueError("sweep requires at least one seed")
    configs = [replace(config, master_seed=s) for s in seeds]
    if max_workers is not None and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(run, configs))
    return [run(c) for c in configs]
