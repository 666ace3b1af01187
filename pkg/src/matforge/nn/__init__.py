from .ops import (
    AttentionParams,
    ChannelEmbedding,
    attention,
    inject_channel_embedding,
    rope_3d,
    softmax_rows,
)
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "AttentionParams",
    "ChannelEmbedding",
    "attention",
    "inject_channel_embedding",
    "rope_3d",
    "softmax_rows",
    "load_checkpoint",
    "save_checkpoint",
]
