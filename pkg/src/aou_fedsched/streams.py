"""Deterministic random-substream derivation.

Every random draw in the package comes from a generator derived here. A
substream is identified by the master seed plus an integer path
``(purpose, *indices)``, e.g. ``(FADING, t)`` for round t's channel
realization or ``(LOCAL_SGD, t, k)`` for UE k's sampling in round t.
Distinct paths yield statistically independent streams, so results never
depend on evaluation order or parallelism.
"""

from numpy.random import Generator, PCG64, SeedSequence

# Purpose tags (first element of a substream path). Values are part of the
# reproducibility contract: changing them changes every simulation output.
TOPOLOGY = 0
FADING = 1
LOCAL_SGD = 2
MODEL_INIT = 3
SYNTH_DATA = 4
TEST_SPLIT = 5
PARTITION = 6
POLICY = 7


def substream(master_seed: int, *path: int) -> Generator:
    """Return an independent generator for the given (purpose, *indices) path."""
    if master_seed < 0:
        raise ValueError(f"master seed must be nonnegative, got {master_seed}")
    return Generator(PCG64(SeedSequence(master_seed, spawn_key=tuple(path))))
