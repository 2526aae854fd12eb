"""Flow-network samplers on grid DAGs with intrinsic-reward augmented objectives."""

from augflow.backend import backend_name
from augflow.env import GridConfig, GridState, make_grid
from augflow.intrinsic import IntrinsicConfig, RndPair
from augflow.model import FlowNetParams, Trajectory, init_flow_model
from augflow.objectives import LOSS_KINDS, batch_loss
from augflow.oracle import (
    TerminalDistribution,
    brute_force_enumeration,
    exact_policy_marginals,
    l1_error,
    target_distribution,
)
from augflow.trainer import RunRecord, TrainerConfig, train

__version__ = "0.1.0"

__all__ = [
    "GridConfig",
    "GridState",
    "make_grid",
    "IntrinsicConfig",
    "RndPair",
    "FlowNetParams",
    "Trajectory",
    "init_flow_model",
    "LOSS_KINDS",
    "batch_loss",
    "TerminalDistribution",
    "brute_force_enumeration",
    "exact_policy_marginals",
    "l1_error",
    "target_distribution",
    "RunRecord",
    "TrainerConfig",
    "train",
    "backend_name",
    "__version__",
]
