from GoldNeck.tensor.core import (
    BatchNormStats,
    ConvSpec,
    Tensor,
    get_num_threads,
    set_num_threads,
    storage_dtype,
    verification_precision,
)
from GoldNeck.tensor.kernels import (
    activation,
    add,
    avgpool_to,
    batchnorm,
    batchnorm_infer,
    bce_with_logits_mean,
    bilinear_resize,
    concat_channels,
    conv2d,
    masked_l1_mean,
    matmul_batched,
    mean_all,
    mul,
    reshape,
    resize_to,
    scale,
    slice_channels,
    softmax_lastdim,
    split_channels,
    sum_all,
    swap_last2,
)
