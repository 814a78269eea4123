"""Network topology and block-fading channel model.

UEs are scattered uniformly over a disc with the access point at the
origin. The uplink spectrum is split into N orthogonal subchannels; per
round, each UE sees an effective gain on subchannel n of

    G[k, n] = h[k, n] * d_k**(-beta) / noise_power

where h[k, n] is exponentially distributed channel power (Rayleigh fading
in amplitude) with the configured mean, constant within a round and
independent across rounds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator

from .errors import ConfigError


@dataclass(frozen=True)
class ChannelConfig:
    """Static parameters of the cell and the fading process."""

    num_subchannels: int = 5
    noise_power: float = 1.0
    cell_radius: float = 100.0
    min_distance: float = 1.0
    fading_mean: float = 1.0
    path_loss_exponent: float = 3.5

    def __post_init__(self):
        if self.num_subchannels < 1:
            raise ConfigError(f"num_subchannels must be >= 1, got {self.num_subchannels}")
        if self.noise_power <= 0:
            raise ConfigError(f"noise_power must be > 0, got {self.noise_power}")
        if self.min_distance <= 0:
            raise ConfigError(f"min_distance must be > 0, got {self.min_distance}")
        if self.cell_radius <= self.min_distance:
            raise ConfigError(
                f"cell_radius ({self.cell_radius}) must exceed min_distance ({self.min_distance})"
            )
        if self.fading_mean <= 0:
            raise ConfigError(f"fading_mean must be > 0, got {self.fading_mean}")


@dataclass(frozen=True)
class NetworkTopology:
    """UE placement relative to the access point at the origin."""

    positions: np.ndarray  # (K, 2) planar coordinates in meters
    distances: np.ndarray  # (K,) Euclidean distances to the origin
    path_loss_exponent: float

    @property
    def num_ues(self) -> int:
        return len(self.distances)


@dataclass(frozen=True)
class ChannelRealization:
    """Effective per-round subchannel gains, rows = UEs, columns = subchannels."""

    gains: np.ndarray  # (K, N), strictly positive

    @property
    def num_ues(self) -> int:
        return self.gains.shape[0]

    @property
    def num_subchannels(self) -> int:
        return self.gains.shape[1]


def path_loss(distance: float, beta: float) -> float:
    """Power-law attenuation distance**(-beta)."""
    if distance <= 0:
        raise ValueError(f"distance must be > 0, got {distance}")
    return float(distance) ** (-beta)


def sample_topology(num_ues: int, config: ChannelConfig, rng: Generator) -> NetworkTopology:
    """Drop UEs uniformly over the disc, clamping radii below min_distance."""
    if num_ues < 1:
        raise ConfigError(f"num_ues must be >= 1, got {num_ues}")
    # sqrt of a uniform gives an area-uniform radial density
    radii = config.cell_radius * np.sqrt(rng.random(num_ues))
    radii = np.maximum(radii, config.min_distance)
    angles = 2.0 * np.pi * rng.random(num_ues)
    positions = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
    return NetworkTopology(
        positions=positions, distances=radii, path_loss_exponent=config.path_loss_exponent
    )


def sample_gains(
    topology: NetworkTopology, config: ChannelConfig, rng: Generator
) -> ChannelRealization:
    """Draw one block-fading realization: exponential power fade times path loss over noise."""
    k, n = topology.num_ues, config.num_subchannels
    fades = rng.exponential(scale=config.fading_mean, size=(k, n))
    attenuation = topology.distances ** (-topology.path_loss_exponent)
    gains = fades * attenuation[:, None] / config.noise_power
    if not np.all(np.isfinite(gains)) or np.any(gains <= 0):
        raise ValueError("channel gains must be strictly positive and finite")
    return ChannelRealization(gains=gains)


def write_topology_csv(topology: NetworkTopology, path) -> None:
    """Dump UE placement as (ue_id, x, y, distance) rows for debugging."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ue_id", "x", "y", "distance"])
        for k in range(topology.num_ues):
            writer.writerow(
                [
                    k,
                    f"{topology.positions[k, 0]:.6g}",
                    f"{topology.positions[k, 1]:.6g}",
                    f"{topology.distances[k]:.6g}",
                ]
            )
