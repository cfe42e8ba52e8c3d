"""Per-frame encoders and temporal aggregation into video embeddings."""

from .aggregate import (
    AGGREGATOR_NAMES,
    Conv3dAggregator,
    ConvLstmAggregator,
    FormError,
    LstmAggregator,
    MeanAggregator,
    concat_streams,
)
from .encoders import (
    Conv2dLayer,
    FlattenProject,
    LinearLayer,
    SpatialAdapter,
    ToyEncoder,
    uniform_param,
)
from .features import (
    FLAT,
    SPATIAL,
    EncoderConfig,
    StreamFeatures,
    VideoEmbedding,
    load_precomputed,
)

__all__ = [
    "AGGREGATOR_NAMES",
    "Conv2dLayer",
    "Conv3dAggregator",
    "ConvLstmAggregator",
    "EncoderConfig",
    "FLAT",
    "FlattenProject",
    "FormError",
    "LinearLayer",
    "LstmAggregator",
    "MeanAggregator",
    "SPATIAL",
    "SpatialAdapter",
    "StreamFeatures",
    "ToyEncoder",
    "VideoEmbedding",
    "concat_streams",
    "load_precomputed",
    "uniform_param",
]
