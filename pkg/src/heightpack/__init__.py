"""Height-constrained 2D packing: environment, heuristics and actor-critic training."""

from .env import (Action, BoardSpec, ConfigError, InfeasiblePieceError, PackingEnv, PieceType,
                  StepResult, UsageError, check_height, make_catalogue, new_env)
from .heuristics import OrderingStrategy, PackingResult, run_bfdh, run_maxrect_bl, run_nfdh
from .rl import TrainConfig, a2c_config, evaluate_policy, ppo_config, train

__version__ = "0.1.0"

__all__ = [
    "Action", "BoardSpec", "ConfigError", "InfeasiblePieceError", "PackingEnv", "PieceType",
    "StepResult", "UsageError", "check_height", "make_catalogue", "new_env",
    "OrderingStrategy", "PackingResult", "run_bfdh", "run_maxrect_bl", "run_nfdh",
    "TrainConfig", "a2c_config", "evaluate_policy", "ppo_config", "train",
]
