"""Masked neural network: banded layers, source/target networks, losses and training."""
from .layers import ConvHead, MaskedLinear, band_mask
from .losses import LossConfig, huber, physics_loss, source_loss, target_loss
from .network import NetworkConfig, SourceNetwork, TargetNetwork
from .optim import Adam

__all__ = ["Adam", "ConvHead", "LossConfig", "MaskedLinear", "NetworkConfig", "SourceNetwork",
           "TargetNetwork", "band_mask", "huber", "physics_loss", "source_loss", "target_loss"]
