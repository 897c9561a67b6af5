"""Desk-scale dual-U-Net latent diffusion: toy latent codec, 13-channel
condition assembly, reference key/value injection, training loop, and
classifier-free-guidance sampling."""

from .codec import LATENT_CHANNELS, PATCH, toy_decode, toy_encode
from .schedule import NoiseSchedule
from .model import DepthProjector, DualUNet, reference_attention
from .train import ConditionStack, TrainConfig, Trainer, TrainingSample, assemble_conditions, draw_condition_dropouts
from .sampling import cfg_sample
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "LATENT_CHANNELS",
    "PATCH",
    "toy_encode",
    "toy_decode",
    "NoiseSchedule",
    "DepthProjector",
    "DualUNet",
    "reference_attention",
    "ConditionStack",
    "TrainConfig",
    "Trainer",
    "TrainingSample",
    "assemble_conditions",
    "draw_condition_dropouts",
    "cfg_sample",
    "save_checkpoint",
    "load_checkpoint",
]
