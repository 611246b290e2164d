from .config import (  # noqa: F401
    MASK_RATIO,
    PATCH_DIMS,
    SEGMENT_SHAPE,
    WINDOW_SIZES,
    DecoderConfig,
    EncoderConfig,
    ModelConfig,
    PatchConfig,
    toy_config,
)
from .layers import attention, sinusoidal_table, transformer_block  # noqa: F401
from .masking import MaskPlan, make_mask  # noqa: F401
from .net import GramModel, extract_patches, masked_mse, pretrain_step  # noqa: F401
from .train import TrainConfig, evaluate_loss, make_batch, pretrain  # noqa: F401
