from .autodiff import (  # noqa: F401
    Tensor,
    as_tensor,
    add,
    broadcast_to,
    concat,
    exp,
    gather,
    gelu,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    no_grad,
    pad_axis,
    pow_const,
    reshape,
    scatter,
    selective_scan,
    sigmoid,
    silu,
    slice_idx,
    softmax,
    softplus,
    sum_,
    transpose,
)
from .optim import (  # noqa: F401
    BASE_LR,
    CLIP_NORM,
    WARMUP_STEPS,
    OptimizerState,
    adamw_step,
    clip_global_norm,
    cosine_warmup_lr,
)
from .serialize import load_arrays, save_arrays  # noqa: F401
