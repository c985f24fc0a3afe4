"""Double DQN with a Swin-MLP visual backbone on small pixel environments."""

from .tensor import AdamState, Tensor, adam_step
from .swin import SwinConfig, forward_q, init_swin_params
from .cnn import CnnConfig, forward_q_cnn, init_cnn_params

__all__ = [
    "AdamState",
    "Tensor",
    "adam_step",
    "SwinConfig",
    "forward_q",
    "init_swin_params",
    "CnnConfig",
    "forward_q_cnn",
    "init_cnn_params",
]

__version__ = "0.1.0"
