"""Throughput simulator for sharded data-parallel training.

Model: ``ranks`` are split into sharding groups of ``group_size``. Within a
group every microbatch ends in a blocking gather, so a group's microbatch
takes as long as its slowest member. After ``accum`` microbatches all groups
meet at an all-reduce, so the optimizer step takes as long as the slowest
group's accumulated time. Communication itself costs nothing.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


class Sampling(enum.Enum):
    NAIVE = "naive"   # every rank draws its own dataset
    TIED = "tied"     # one draw per sharding group


class Batching(enum.Enum):
    UNIFORM = "uniform"
    DIFFERENTIAL = "differential"


# under differential batching 2D microbatches get twice the samples, each
# with twice the history length: (batch multiplier, history multiplier)
DIFFERENTIAL_MULTIPLIER = {2: (2, 2), 3: (1, 1)}


@dataclass(frozen=True)
class ClusterConfig:
    ranks: int
    group_size: int

    def __post_init__(self):
        if self.ranks < 1 or self.group_size < 1 or self.ranks % self.group_size:
            raise ConfigError(f"group size {self.group_size} must divide {self.ranks} ranks")

    @property
    def groups(self) -> int:
        return self.ranks // self.group_size


@dataclass(frozen=True)
class Strategy:
    sampling: Sampling = Sampling.NAIVE
    batching: Batching = Batching.UNIFORM
    accum: int = 1

    def __post_init__(self):
        object.__setattr__(self, "sampling", Sampling(self.sampling))
        object.__setattr__(self, "batching", Batching(self.batching))
        if self.accum < 1:
            raise ConfigError("accumulation steps must be >= 1")

    @property
    def label(self) -> str:
        return f"{self.sampling.value}/{self.batching.value}/A={self.accum}"


@dataclass(frozen=True)
class Dataset:
    name: str
    dim: int
    tokens: int            # tokens per sample under uniform batching
    attention_share: float  # fraction of block cost spent outside linear layers
    encoder_share: float = 0.02

    def __post_init__(self):
        if self.dim not in (2, 3) or self.tokens <= 0:
            raise ConfigError(f"bad dataset entry {self}")
        if not 0 <= self.attention_share < 1 or self.encoder_share < 0:
            raise ConfigError(f"bad cost shares in {self}")


@dataclass(frozen=True)
class CostModel:
    datasets: tuple
    linear_cost: float = 1.0   # per token

    def __post_init__(self):
        if not self.datasets:
            raise ConfigError("catalog is empty")
        object.__setattr__(self, "datasets", tuple(self.datasets))

    def batch(self, batching: Batching) -> np.ndarray:
        if Batching(batching) is Batching.UNIFORM:
            return np.ones(len(self.datasets), dtype=int)
        return np.array([DIFFERENTIAL_MULTIPLIER[d.dim][0] for d in self.datasets])

    def history(self, batching: Batching) -> np.ndarray:
        if Batching(batching) is Batching.UNIFORM:
            return np.ones(len(self.datasets), dtype=int)
        return np.array([DIFFERENTIAL_MULTIPLIER[d.dim][1] for d in self.datasets])

    def microbatch_tokens(self, batching) -> np.ndarray:
        per_sample = self.history(batching) * np.array([d.tokens for d in self.datasets])
        return self.batch(batching) * per_sample

    def microbatch_cost(self, batching) -> np.ndarray:
        tokens = self.microbatch_tokens(batching)
        linear = tokens * self.linear_cost
        att = np.array([d.attention_share for d in self.datasets])
        enc = np.array([d.encoder_share for d in self.datasets])
        core = linear + linear * att / (1.0 - att)
        costs = core * (1.0 + enc)
        if np.any(costs <= 0):
            raise ConfigError("all microbatch costs must be positive")
        return costs


def reference_catalog(n2d: int = 14, n3d: int = 5) -> CostModel:
    """14 2D and 5 3D datasets at the token targets used in pretraining.

    2D: 32x32 tokens per frame, 3 history frames (6 frames and a doubled
    batch under differential batching); 3D: 16^3 tokens, 3 frames.
    Attention takes 5% of a block in 2D and 20% in 3D.
    """
    sets = [Dataset(f"2d_{i:02d}", 2, 32 * 32 * 3, 0.05) for i in range(n2d)]
    sets += [Dataset(f"3d_{i:02d}", 3, 16**3 * 3, 0.20) for i in range(n3d)]
    return CostModel(tuple(sets))


def parse_catalog(text: str) -> CostModel:
    """One dataset per line: ``name dim tokens attention_share [encoder_share]``."""
    sets = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) not in (4, 5):
            raise ConfigError(f"catalog line {lineno}: expected 4 or 5 columns, got {raw!r}")
        try:
            extra = [float(parts[4])] if len(parts) == 5 else []
            sets.append(Dataset(parts[0], int(parts[1]), int(parts[2]), float(parts[3]), *extra))
        except ValueError as exc:
            raise ConfigError(f"catalog line {lineno}: {exc}") from None
    return CostModel(tuple(sets))


def sample_assignment(strategy: Strategy, n_datasets: int, cluster: ClusterConfig,
                      rng, steps: int = 1) -> np.ndarray:
    """Dataset ids of shape ``(steps, accum, ranks)``."""
    if n_datasets < 1:
        raise ConfigError("catalog is empty")
    a = strategy.accum
    if strategy.sampling is Sampling.NAIVE:
        return rng.integers(n_datasets, size=(steps, a, cluster.ranks))
    per_group = rng.integers(n_datasets, size=(steps, a, cluster.groups))
    return np.repeat(per_group, cluster.group_size, axis=2)


def group_times(assignment, costs, cluster: ClusterConfig) -> np.ndarray:
    """``(steps, accum, groups)`` microbatch times (max over group members)."""
    c = np.asarray(costs)[assignment]
    return c.reshape(c.shape[:2] + (cluster.groups, cluster.group_size)).max(axis=-1)


def step_time(assignment, costs, cluster: ClusterConfig) -> np.ndarray:
    """Optimizer-step time per step: slowest group's accumulated time."""
    assignment = np.asarray(assignment)
    if assignment.ndim == 2:
        assignment = assignment[None]
    return group_times(assignment, costs, cluster).sum(axis=1).max(axis=1)


@dataclass
class ThroughputReport:
    strategy: Strategy
    steps: int
    samples: int
    tokens: int
    total_time: float
    busy_time: float
    assigned_cost: float
    idle_time: float
    idle_fraction: float
    mean_step_time: float
    mean_group_time: float

    @property
    def throughput(self) -> float:
        """Samples per unit simulated time."""
        return self.samples / self.total_time

    @property
    def token_throughput(self) -> float:
        return self.tokens / self.total_time


def simulate(strategy: Strategy, cost_model: CostModel, cluster: ClusterConfig,
             steps: int, seed: int, chunk: int = 4096) -> ThroughputReport:
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    rng = np.random.default_rng(seed)
    costs = cost_model.microbatch_cost(strategy.batching)
    batch = cost_model.batch(strategy.batching)
    tokens = cost_model.microbatch_tokens(strategy.batching)
    step_parts, busy_parts, assigned_parts, idle_parts, group_parts = [], [], [], [], []
    samples = token_count = 0
    done = 0
    while done < steps:
        n = min(chunk, steps - done)
        assign = sample_assignment(strategy, len(costs), cluster, rng, n)
        gt = group_times(assign, costs, cluster)
        st = gt.sum(axis=1).max(axis=1)
        per_rank = costs[assign]
        busy = per_rank.sum(axis=1)                  # (steps, ranks)
        step_parts.append(math.fsum(st))
        busy_parts.append(math.fsum(busy.ravel()))
        assigned_parts.append(math.fsum(per_rank.ravel()))
        idle_parts.append(math.fsum((st[:, None] - busy).ravel()))
        group_parts.append(math.fsum(gt.ravel()))
        samples += int(batch[assign].sum())
        token_count += int(tokens[assign].sum())
        done += n
    total = math.fsum(step_parts)
    idle = math.fsum(idle_parts)
    return ThroughputReport(
        strategy=strategy,
        steps=steps,
        samples=samples,
        tokens=token_count,
        total_time=total,
        busy_time=math.fsum(busy_parts),
        assigned_cost=math.fsum(assigned_parts),
        idle_time=idle,
        idle_fraction=idle / (cluster.ranks * total),
        mean_step_time=total / steps,
        mean_group_time=math.fsum(group_parts) / (steps * strategy.accum * cluster.groups),
    )


STACKED = (
    Strategy(Sampling.NAIVE, Batching.UNIFORM, 1),
    Strategy(Sampling.TIED, Batching.UNIFORM, 1),
    Strategy(Sampling.TIED, Batching.DIFFERENTIAL, 1),
    Strategy(Sampling.TIED, Batching.DIFFERENTIAL, 4),
)


def compare(cost_model: CostModel, cluster: ClusterConfig, steps: int, seeds,
            strategies=STACKED) -> list:
    """Mean throughput per strategy over seeds, as (strategy, samples/t, tokens/t)."""
    rows = []
    for strat in strategies:
        reps = [simulate(strat, cost_model, cluster, steps, s) for s in seeds]
        rows.append((
            strat,
            float(np.mean([r.throughput for r in reps])),
            float(np.mean([r.token_throughput for r in reps])),
        ))
    return rows
