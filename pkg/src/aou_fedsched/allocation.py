"""Water-filling power allocation and minimum-subchannel candidate construction.

A UE that wants to upload in a round must reach the rate target over its
assigned subchannels within its power budget. For a fixed set of n
channels sorted by descending gain g_1 >= ... >= g_n, the sum rate is
maximized by water-filling; the closed form used here is

    residual  = [P_max - sum_{j<n} (1/g_n - 1/g_j)]^+
    P_j       = residual / n + 1/g_n - 1/g_j

which spreads the residual budget evenly on top of the inverse-gain
deficits. When the bracket is positive the powers sum to exactly P_max;
when it clamps at zero the vector exceeds the budget (the level is pinned
at 1/g_n), so callers must reject it via the budget check.

The minimum-subchannel search tries n = 1, 2, ... over the n strongest
available gains and returns the first allocation that meets both the rate
target and the power budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .errors import ConfigError

# Slack on the power-budget feasibility check; committed allocations are
# guaranteed to satisfy sum(powers) <= max_power + BUDGET_TOL.
BUDGET_TOL = 1e-12


@dataclass(frozen=True)
class RadioConfig:
    """Uplink radio constraints shared by all UEs."""

    max_power: float = 1.0
    rate_target: float = 1.0
    rate_prefactor: float = 0.5  # multiplies each log term of the rate sum

    def __post_init__(self):
        if self.max_power <= 0:
            raise ConfigError(f"max_power must be > 0, got {self.max_power}")
        if self.rate_target < 0:
            raise ConfigError(f"rate_target must be >= 0, got {self.rate_target}")
        if self.rate_prefactor <= 0:
            raise ConfigError(f"rate_prefactor must be > 0, got {self.rate_prefactor}")


@dataclass(frozen=True)
class Allocation:
    """One UE's committed subchannels, per-channel powers, and achieved rate."""

    ue_id: int
    channels: tuple[int, ...]  # original subchannel indices, strongest first
    powers: np.ndarray  # aligned with channels
    rate: float  # nats per channel use

    @property
    def count(self) -> int:
        return len(self.channels)


@dataclass(frozen=True)
class CandidateList:
    """UEs able to meet the rate target on the currently available spectrum."""

    members: tuple[int, ...]  # ascending UE ids
    allocations: dict[int, Allocation]


def waterfill(ordered_gains, max_power: float) -> np.ndarray:
    """Power allocation over gains sorted descending, per the closed form above.

    Returns nonnegative powers, one per input gain. The caller is
    responsible for checking the budget when the bracket clamps.
    """
    gains = np.asarray(ordered_gains, dtype=float)
    if gains.ndim != 1 or gains.size == 0:
        raise ValueError("ordered_gains must be a nonempty 1-D sequence")
    if np.any(gains <= 0) or not np.all(np.isfinite(gains)):
        raise ValueError("gains must be strictly positive and finite")
    if np.any(np.diff(gains) > 0):
        raise ValueError("gains must be sorted in descending order")
    if max_power <= 0:
        raise ValueError(f"max_power must be > 0, got {max_power}")
    deficits = 1.0 / gains[-1] - 1.0 / gains  # >= 0, zero on the weakest channel
    residual = max(max_power - float(deficits[:-1].sum()), 0.0)
    return residual / gains.size + deficits


def achieved_rate(gains, powers, prefactor: float) -> float:
    """Sum rate prefactor * sum(log(1 + g*p)) in nats."""
    gains = np.asarray(gains, dtype=float)
    powers = np.asarray(powers, dtype=float)
    if gains.shape != powers.shape or gains.ndim != 1:
        raise ValueError("gains and powers must be 1-D sequences of equal length")
    if np.any(gains <= 0):
        raise ValueError("gains must be strictly positive")
    if np.any(powers < 0):
        raise ValueError("powers must be nonnegative")
    return prefactor * float(np.log1p(gains * powers).sum())


def min_subchannel_allocation(
    ue_gains, available, radio: RadioConfig, ue_id: int = -1
) -> Allocation | None:
    """Smallest feasible allocation for one UE, or None when infeasible.

    ``ue_gains`` is the UE's full gain row; ``available`` holds the original
    indices of the still-unassigned subchannels. Gain ties are broken toward
    the lower original index so the descending order is deterministic.
    """
    avail = sorted(available)
    gains_row = np.asarray(ue_gains, dtype=float)
    if not avail:
        return None
    gains = gains_row[avail]
    order = np.argsort(-gains, kind="stable")
    for n_star in range(1, len(avail) + 1):
        top = order[:n_star]
        powers = waterfill(gains[top], radio.max_power)
        total = float(powers.sum())
        if total > radio.max_power + BUDGET_TOL:
            # Clamped bracket; the overspend only grows with the subset size.
            return None
        rate = achieved_rate(gains[top], powers, radio.rate_prefactor)
        if rate >= radio.rate_target:
            channels = tuple(avail[i] for i in top)
            return Allocation(ue_id=ue_id, channels=channels, powers=powers, rate=rate)
    return None


def build_candidate_list(
    realization: ChannelRealization, available, radio: RadioConfig
) -> CandidateList:
    """Evaluate every UE independently against the available spectrum."""
    allocations = {}
    for k in range(realization.num_ues):
        alloc = min_subchannel_allocation(realization.gains[k], available, radio, ue_id=k)
        if alloc is not None:
            allocations[k] = alloc
    return CandidateList(members=tuple(sorted(allocations)), allocations=allocations)
