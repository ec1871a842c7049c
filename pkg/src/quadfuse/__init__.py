"""quadfuse: multimodal account-level fusion, classification, and tooling.

The package turns per-account quadruples of social-media evidence — post
comment text, post image, homepage bio, homepage images — into fused
feature vectors, trains a softmax classifier over them, and ships the
surrounding tooling: synthetic data generation, a crawl simulator, hashtag
community analysis, and an annotation HTTP service.
"""

from .records import (
    Dataset,
    DatasetError,
    PresenceMask,
    QuadrupleRecord,
    all_masks,
    load_dataset,
    normalize_hashtag,
    save_dataset,
    split,
    validate_mask,
)
from .embedding import (
    EmbeddingError,
    FeatureBatch,
    FeatureVector,
    FileBackedProvider,
    ProviderSet,
    SyntheticImageProvider,
    SyntheticTextProvider,
    average_homepage,
    embed_image,
    embed_text,
    featurize,
    featurize_dataset,
    write_store,
)
from .fusion import (
    FbcDictionary,
    FusedFeature,
    FusionConfig,
    FusionError,
    QuadrupleFusionTransformer,
    fbc_encode,
    fuse_bilinear,
    fuse_compact_bilinear,
    fuse_concat,
    fuse_quadruple,
)
from .classify import (
    Adam,
    Metrics,
    SoftmaxClassifier,
    TrainConfig,
    compute_metrics,
    cross_entropy,
    decision_fuse,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    softmax,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "Dataset",
    "DatasetError",
    "EmbeddingError",
    "FbcDictionary",
    "FeatureBatch",
    "FeatureVector",
    "FileBackedProvider",
    "FusedFeature",
    "FusionConfig",
    "FusionError",
    "Metrics",
    "PresenceMask",
    "ProviderSet",
    "QuadrupleFusionTransformer",
    "QuadrupleRecord",
    "SoftmaxClassifier",
    "SyntheticImageProvider",
    "SyntheticTextProvider",
    "TrainConfig",
    "all_masks",
    "average_homepage",
    "compute_metrics",
    "cross_entropy",
    "decision_fuse",
    "embed_image",
    "embed_text",
    "evaluate",
    "fbc_encode",
    "featurize",
    "featurize_dataset",
    "fuse_bilinear",
    "fuse_compact_bilinear",
    "fuse_concat",
    "fuse_quadruple",
    "load_checkpoint",
    "load_dataset",
    "normalize_hashtag",
    "save_checkpoint",
    "save_dataset",
    "softmax",
    "split",
    "validate_mask",
]
