from .nets import MLP, Adam
from .replay import NStepBatch, ReplayBuffer
from .updates import LambdaStrategy, actor_update, critic_update, lambda_value, soft_update
from .bc import bc_loss, train_bc
from .relabel import relabel_episode, relabel_episode_best
from .loop import LearnerState, OnlineTrainConfig, TrainingDiverged, evaluate_policy, online_train

__all__ = [
    "Adam",
    "LambdaStrategy",
    "LearnerState",
    "MLP",
    "NStepBatch",
    "OnlineTrainConfig",
    "ReplayBuffer",
    "TrainingDiverged",
    "actor_update",
    "bc_loss",
    "critic_update",
    "evaluate_policy",
    "lambda_value",
    "online_train",
    "relabel_episode",
    "relabel_episode_best",
    "soft_update",
    "train_bc",
]
