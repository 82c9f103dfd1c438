from .autodiff import Tensor, constant, parameter
from .layers import MLP, GRUCell, GmmHead, GaussianHead, Module, gmm_nll, gmm_sample, gmm_mode
from .optim import Adam, global_norm_clip
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "Tensor",
    "constant",
    "parameter",
    "MLP",
    "GRUCell",
    "GmmHead",
    "GaussianHead",
    "Module",
    "gmm_nll",
    "gmm_sample",
    "gmm_mode",
    "Adam",
    "global_norm_clip",
    "save_checkpoint",
    "load_checkpoint",
]
