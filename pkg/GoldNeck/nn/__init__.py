from GoldNeck.nn.gd_branches import (
    HighIfmParams,
    LowIfmParams,
    TransformerBlockParams,
    attention_weights,
    high_fam,
    high_ifm,
    low_fam,
    low_ifm,
    transformer_block,
)
from GoldNeck.nn.inject_laf import InjectParams, LafParams, inject, inject_with_laf, laf_fuse
from GoldNeck.nn.layers import ConvBnParams, bn_stats, conv, conv_bn, conv_spec
from GoldNeck.nn.pyramid import FeaturePyramid
from GoldNeck.nn.repconv import (
    RepBlockParams,
    RepConvParams,
    fuse_store,
    repblock_forward,
    repblock_fuse,
    repconv_forward,
    repconv_fuse,
)
