"""Hybrid POD + convolutional autoencoder for romd snapshot files.

Only the interfaces are defined so far; the model, training loop and
export raise ``NotImplementedError``.
"""

from .config import ConfigError, HybridAEConfig
from .model import build_hybrid_autoencoder, pod_decode, pod_encode
from .train import TrainResult, reconstruct_and_export, train

__all__ = [
    "ConfigError",
    "HybridAEConfig",
    "TrainResult",
    "build_hybrid_autoencoder",
    "pod_decode",
    "pod_encode",
    "reconstruct_and_export",
    "train",
]
