from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .config import HybridAEConfig


@dataclass
class TrainResult:
    model: Any
    best_epoch: int
    losses: list[float] = field(default_factory=list)


def train(model: Any, snapshots: np.ndarray, config: HybridAEConfig, loss_log: Path) -> TrainResult:
    """Adam on the per-element mean squared reconstruction error.

    Keeps the best checkpoint and aborts once the loss exceeds ten times
    its initial value. Writes one CSV row per epoch to `loss_log`.
    """
    raise NotImplementedError


def reconstruct_and_export(model: Any, snapshots: Path, out: Path, blocks: list[int] | None = None) -> Path:
    """Writes decode(encode(x)) for the selected orbital blocks in the romd
    snapshot format, for `romd force-from-wavefunctions --input`."""
    raise NotImplementedError
