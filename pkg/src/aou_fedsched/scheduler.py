"""Age-of-update state and the scheduling policies.

Each UE carries an integer age counting the rounds since the server last
received its parameters; the age resets to zero on a successful upload and
increments by one otherwise. The age-based policy (ABS) repeatedly picks,
among the UEs still able to meet the rate target on the remaining
spectrum, the one maximizing staleness_value(age) / channels_needed, then
removes its channels and recomputes the candidate list. MaxPack ignores
ages and packs the UEs needing the fewest channels; round-robin and
random selection are control baselines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator

from .allocation import (
    BUDGET_TOL,
    Allocation,
    RadioConfig,
    achieved_rate,
    build_candidate_list,
    min_subchannel_allocation,
)
from .channel import ChannelRealization
from .errors import ConfigError, InvariantViolation

POLICIES = ("abs", "maxpack", "round_robin", "random")

# Committed rates are re-verified with this slack against the target.
RATE_TOL = 1e-12


@dataclass(frozen=True)
class FairnessConfig:
    """Sensitivity of the server to staleness (exponent of the age transform)."""

    alpha: float = 1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")


@dataclass
class ScheduleDecision:
    """Outcome of one round's selection: who uploads, and on which channels."""

    selected: np.ndarray  # binary vector of length K
    allocations: dict[int, Allocation]  # committed allocation per selected UE
    order: tuple[int, ...] = ()  # UE ids in commit order
    objective_value: float | None = None  # staleness objective, when the policy knows alpha

    @property
    def scheduled_count(self) -> int:
        return int(self.selected.sum())


def f_alpha(x: float, alpha: float) -> float:
    """Staleness value of an age: x**(1-alpha)/(1-alpha), or log(1+x) at alpha=1.

    Strictly increasing in x for every alpha >= 0. For alpha > 1 the value
    at x=0 diverges to -inf, which orders a just-updated UE below every
    other candidate.
    """
    if x < 0:
        raise ValueError(f"age must be nonnegative, got {x}")
    if alpha == 1.0:
        return math.log1p(x)
    if x == 0.0 and alpha > 1.0:
        return float("-inf")
    try:
        return x ** (1.0 - alpha) / (1.0 - alpha)
    except OverflowError:
        # only reachable for alpha > 1 at vanishing age, where the value diverges
        return float("-inf")


def aou_step(ages: np.ndarray, selected: np.ndarray) -> np.ndarray:
    """Advance ages by one round: reset the selected UEs, increment the rest."""
    ages = np.asarray(ages)
    selected = np.asarray(selected)
    if ages.shape != selected.shape:
        raise ValueError("ages and selected must have equal length")
    return (ages + 1) * (1 - selected)


def aou_objective(ages: np.ndarray, selected: np.ndarray, alpha: float) -> float:
    """Sum of staleness values over the UEs left unscheduled this round."""
    ages = np.asarray(ages)
    selected = np.asarray(selected)
    if ages.shape != selected.shape:
        raise ValueError("ages and selected must have equal length")
    return float(sum(f_alpha(float(a), alpha) for a, s in zip(ages, selected) if not s))


def _greedy_rounds(realization: ChannelRealization, radio: RadioConfig, pick):
    """Shared commit loop: rebuild candidates, pick one, release its channels."""
    num_ues, num_subchannels = realization.gains.shape
    available = list(range(num_subchannels))
    selected = np.zeros(num_ues, dtype=np.int64)
    allocations: dict[int, Allocation] = {}
    order: list[int] = []
    while available:
        candidates = build_candidate_list(realization, tuple(available), radio)
        pool = [candidates.allocations[k] for k in candidates.members if not selected[k]]
        if not pool:
            break
        choice = pick(pool)
        selected[choice.ue_id] = 1
        allocations[choice.ue_id] = choice
        order.append(choice.ue_id)
        taken = set(choice.channels)
        available = [c for c in available if c not in taken]
    return selected, allocations, tuple(order)


def abs_schedule(
    ages: np.ndarray,
    realization: ChannelRealization,
    radio: RadioConfig,
    fairness: FairnessConfig,
) -> ScheduleDecision:
    """Age-based scheduling: maximize staleness value per occupied subchannel."""
    ages = np.asarray(ages)
    if len(ages) != realization.num_ues:
        raise ValueError("ages length must match the number of UEs")

    def pick(pool: list[Allocation]) -> Allocation:
        best = None
        best_score = None
        for alloc in pool:  # pool is in ascending UE order
            score = f_alpha(float(ages[alloc.ue_id]), fairness.alpha) / alloc.count
            if best is None or score > best_score or (
                score == best_score and alloc.count < best.count
            ):
                best, best_score = alloc, score
        return best

    selected, allocations, order = _greedy_rounds(realization, radio, pick)
    objective = aou_objective(ages, selected, fairness.alpha)
    return ScheduleDecision(selected, allocations, order, objective)


def maxpack_schedule(realization: ChannelRealization, radio: RadioConfig) -> ScheduleDecision:
    """Greedy packing baseline: always commit the UE needing fewest subchannels.

    This is a fewest-channels-first greedy maximizer of the per-round
    selection count, not an exact set-packing optimum.
    """

    def pick(pool: list[Allocation]) -> Allocation:
        best = None
        for alloc in pool:
            if best is None or alloc.count < best.count:
                best = alloc
        return best

    selected, allocations, order = _greedy_rounds(realization, radio, pick)
    return ScheduleDecision(selected, allocations, order)


def random_schedule(
    realization: ChannelRealization, radio: RadioConfig, rng: Generator
) -> ScheduleDecision:
    """Control baseline: commit a uniformly random member of the candidate list."""

    def pick(pool: list[Allocation]) -> Allocation:
        return pool[int(rng.integers(len(pool)))]

    selected, allocations, order = _greedy_rounds(realization, radio, pick)
    return ScheduleDecision(selected, allocations, order)


def round_robin_schedule(
    ages: np.ndarray,
    realization: ChannelRealization,
    radio: RadioConfig,
    cursor: int,
) -> tuple[ScheduleDecision, int]:
    """Cyclic baseline: walk UEs from the cursor, committing every feasible one.

    Infeasible UEs are skipped without consuming spectrum. Returns the
    decision and the advanced cursor (one past the last examined UE).
    """
    num_ues, num_subchannels = realization.gains.shape
    if not 0 <= cursor < num_ues:
        raise ValueError(f"cursor must be in [0, {num_ues}), got {cursor}")
    available = list(range(num_subchannels))
    selected = np.zeros(num_ues, dtype=np.int64)
    allocations: dict[int, Allocation] = {}
    order: list[int] = []
    last_examined = None
    for offset in range(num_ues):
        if not available:
            break
        k = (cursor + offset) % num_ues
        last_examined = offset
        alloc = min_subchannel_allocation(realization.gains[k], tuple(available), radio, ue_id=k)
        if alloc is None:
            continue
        selected[k] = 1
        allocations[k] = alloc
        order.append(k)
        taken = set(alloc.channels)
        available = [c for c in available if c not in taken]
    new_cursor = cursor if last_examined is None else (cursor + last_examined + 1) % num_ues
    return ScheduleDecision(selected, allocations, tuple(order)), new_cursor


def validate_decision(
    decision: ScheduleDecision,
    realization: ChannelRealization,
    radio: RadioConfig,
) -> None:
    """Assert the per-round constraint bundle; raises InvariantViolation on failure.

    Checks channel-set disjointness and range, per-UE rate and power-budget
    feasibility, and consistency between the selection vector and the
    committed allocations.
    """
    num_ues, num_subchannels = realization.gains.shape
    if set(np.flatnonzero(decision.selected)) != set(decision.allocations):
        raise InvariantViolation("selection vector disagrees with committed allocations")
    if decision.scheduled_count > min(num_ues, num_subchannels):
        raise InvariantViolation("more UEs scheduled than subchannels available")
    used: set[int] = set()
    for k, alloc in decision.allocations.items():
        channels = set(alloc.channels)
        if len(channels) != alloc.count:
            raise InvariantViolation(f"UE {k}: duplicate channels in allocation")
        if used & channels:
            raise InvariantViolation(f"UE {k}: channel sets not pairwise disjoint")
        if not channels <= set(range(num_subchannels)):
            raise InvariantViolation(f"UE {k}: channel index out of range")
        used |= channels
        if np.any(alloc.powers < 0):
            raise InvariantViolation(f"UE {k}: negative transmit power")
        if float(alloc.powers.sum()) > radio.max_power + BUDGET_TOL:
            raise InvariantViolation(f"UE {k}: power budget exceeded")
        rate = achieved_rate(
            realization.gains[k, list(alloc.channels)], alloc.powers, radio.rate_prefactor
        )
        if rate < radio.rate_target - RATE_TOL:
            raise InvariantViolation(f"UE {k}: committed rate below target")
        if abs(rate - alloc.rate) > 1e-9:
            raise InvariantViolation(f"UE {k}: stored rate inconsistent with gains and powers")
