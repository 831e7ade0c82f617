from .autodiff import Tensor, no_grad
from .model import DstGnn, ModelConfig, gru_step, gat_layer, init_params
from .optim import AdamW, cosine_lr
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = ["Tensor", "no_grad", "DstGnn", "ModelConfig", "gru_step", "gat_layer",
           "init_params", "AdamW", "cosine_lr", "load_checkpoint", "save_checkpoint"]
