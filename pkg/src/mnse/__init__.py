"""Supervised multi-modal embeddings with Gaussian RBF out-of-sample extension."""

__version__ = "0.1.0"

from .dataset import MultiModalDataset, SynthConfig, generate_synthetic, split  # noqa: E402
from .optimizer import EmbeddingModel, HyperParams, train  # noqa: E402

__all__ = [
    "__version__",
    "MultiModalDataset",
    "SynthConfig",
    "generate_synthetic",
    "split",
    "EmbeddingModel",
    "HyperParams",
    "train",
]
