"""Age-of-update based client scheduling for federated learning over shared spectrum."""

from .allocation import (
    Allocation,
    CandidateList,
    RadioConfig,
    achieved_rate,
    build_candidate_list,
    min_subchannel_allocation,
    waterfill,
)
from .channel import (
    ChannelConfig,
    ChannelRealization,
    NetworkTopology,
    path_loss,
    sample_gains,
    sample_topology,
)
from .errors import ConfigError, FormatError, InvariantViolation
from .learning import (
    LearningConfig,
    LocalDataset,
    aggregate,
    evaluate,
    generate_synthetic,
    load_idx,
    local_update,
    loss_and_subgradient,
    partition_dataset,
    regularizer_and_gradient,
)
from .scheduler import (
    FairnessConfig,
    ScheduleDecision,
    abs_schedule,
    aou_objective,
    aou_step,
    f_alpha,
    maxpack_schedule,
    random_schedule,
    round_robin_schedule,
)
from .simulation import DataConfig, ExperimentConfig, RoundMetrics, RunResult, run, sweep

__version__ = "0.1.0"
