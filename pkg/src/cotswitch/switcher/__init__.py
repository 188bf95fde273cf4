from .accounting import ParamCount, count_params, estimate_flops
from .checkpoint import load_checkpoint, save_checkpoint
from .loss import LossValues, loss
from .net import SwitcherArchitecture, SwitcherModel, backward, clamp_predictions, forward
from .train import AdamW, TrainConfig, TrainHistory, gradients, train

__all__ = [
    "AdamW",
    "LossValues",
    "ParamCount",
    "SwitcherArchitecture",
    "SwitcherModel",
    "TrainConfig",
    "TrainHistory",
    "backward",
    "clamp_predictions",
    "count_params",
    "estimate_flops",
    "forward",
    "gradients",
    "load_checkpoint",
    "loss",
    "save_checkpoint",
    "train",
]
