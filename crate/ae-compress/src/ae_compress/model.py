"""POD maps and the hybrid autoencoder.

Q is stored column-major as written by `romd rom-basis`, orthonormal under
the quadrature weight h^3, so the encoder is z = h^3 Q^T x.
"""

from __future__ import annotations

from typing import Any

import numpy as np

from .config import HybridAEConfig


def pod_encode(q: np.ndarray, x: np.ndarray, h3: float) -> np.ndarray:
    """Latent coordinates of `x` (M or M x K) in the basis `q` (M x r)."""
    raise NotImplementedError


def pod_decode(q: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Grid values from latent coordinates."""
    raise NotImplementedError


def build_hybrid_autoencoder(config: HybridAEConfig, grid: tuple[int, int, int], q: np.ndarray) -> Any:
    """Hybrid model E = (1-a)*E_pod + a*E_cnn, D = (1-b)*D_pod + b*D_cnn.

    Four stride-2 Conv3d stages (32, 64, 128, 256 channels) on a 64^3 grid;
    smaller grids drop leading stages. a (length r) and b (length M) start
    at zero, so a fresh model reproduces the POD reconstruction.
    """
    raise NotImplementedError
