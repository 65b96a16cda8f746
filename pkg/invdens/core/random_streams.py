"""
Counter-based random number streams.

Every stream is a Philox generator keyed by a SeedSequence built from the
master seed and a spawn key ``(replication, purpose)``. A replication's draws
therefore depend only on ``(master_seed, replication)`` and never on which
worker ran it or in what order.
"""

from enum import IntEnum
from typing import Union

import numpy as np

from invdens.core.exceptions import ParameterError

SeedLike = Union[int, np.random.Generator]

_U64_MAX = 2 ** 64 - 1


class StreamPurpose(IntEnum):
    """Independent sub-streams used inside a single replication."""
    LATENT = 0
    NOISE = 1
    BURN_IN = 2
    VALIDATION = 3


def validate_seed(seed: int) -> int:
    """Check that a seed fits an unsigned 64-bit integer."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ParameterError("seed", seed, "must be an integer")
    if not 0 <= int(seed) <= _U64_MAX:
        raise ParameterError("seed", seed, "must fit in an unsigned 64-bit integer")
    return int(seed)


def make_stream(master_seed: int, replication: int = 0,
                purpose: StreamPurpose = StreamPurpose.LATENT) -> np.random.Generator:
    """
    Build the Philox stream for one (replication, purpose) pair.

    Args:
        master_seed: Experiment-level seed (u64)
        replication: Replication index r >= 0
        purpose: Which sub-stream of the replication

    Returns:
        A fresh numpy Generator; equal inputs give bit-identical draws
    """
    master_seed = validate_seed(master_seed)
    if replication < 0:
        raise ParameterError("replication", replication, "must be non-negative")
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(int(replication), int(purpose)))
    return np.random.Generator(np.random.Philox(seq))


def as_generator(seed: SeedLike, purpose: StreamPurpose = StreamPurpose.LATENT) -> np.random.Generator:
    """Accept either a seed or an existing generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return make_stream(seed, 0, purpose)
