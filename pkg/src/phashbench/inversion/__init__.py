"""Hash inversion: a from-scratch decoder network trained on hash-image pairs.

Layers carry manually derived gradients (no autodiff); training follows the
AdamW + cosine-annealing recipe.  Datasets are synthetic renderings, image
directories, or MNIST IDX files, hashed offline.
"""

from .data import (
    EmptySourceError,
    HashImageDataset,
    ShapeMismatchError,
    build_dataset,
)
from .model import (
    CorruptCheckpointError,
    DecoderModel,
    backward,
    forward,
    load_checkpoint,
    save_checkpoint,
)
from .training import (
    DivergenceError,
    InversionReport,
    TrainConfig,
    TrainResult,
    evaluate_inversion,
    train,
)

__all__ = [
    "EmptySourceError",
    "ShapeMismatchError",
    "HashImageDataset",
    "build_dataset",
    "DecoderModel",
    "CorruptCheckpointError",
    "forward",
    "backward",
    "save_checkpoint",
    "load_checkpoint",
    "DivergenceError",
    "TrainConfig",
    "TrainResult",
    "InversionReport",
    "train",
    "evaluate_inversion",
]
