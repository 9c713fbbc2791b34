"""reply-sentinel: detection of coordinated reply attacks.

Classifies posts as targeted/non-targeted from the statistical shape of
their reply sets, and repliers as coordinated/organic from profile metadata
and cross-replier similarity distributions.
"""

__version__ = "0.1.0"

from .corpus import Account, Corpus, Post, ReplyRecord, corpus_summary, load_corpus
from .dataset_builder import build_dataset, ccdf, rq1_report, select_controls, select_targeted
from .features import (
    REPLIER_FEATURE_NAMES,
    TWEET_FEATURE_NAMES,
    build_replier_matrix,
    build_tweet_matrix,
    replier_features,
    tweet_features,
)
from .models import fit_scaler, predict_score, train, tune_threshold
from .evaluate import (
    auc,
    cross_campaign,
    downsample_balanced,
    engagement_correlation,
    imbalance_sweep,
    kfold_cv,
    oversample_train,
    permutation_importance,
    threshold_sweep,
)
from .similarity import HashingEmbedder, coreply_pair_join, cosine
from .stats import AttributeSample, entropy, quantile, summarize9, summarize12
from .synth import SynthConfig, generate, oracle_labels

__all__ = [
    "Account", "AttributeSample", "Corpus", "HashingEmbedder", "Post",
    "REPLIER_FEATURE_NAMES", "ReplyRecord", "SynthConfig", "TWEET_FEATURE_NAMES",
    "auc", "build_dataset", "build_replier_matrix", "build_tweet_matrix", "ccdf",
    "coreply_pair_join", "corpus_summary", "cosine", "cross_campaign",
    "downsample_balanced", "engagement_correlation", "entropy", "fit_scaler",
    "generate", "imbalance_sweep", "kfold_cv", "load_corpus", "oracle_labels",
    "oversample_train", "permutation_importance", "predict_score", "quantile",
    "replier_features", "rq1_report", "select_controls", "select_targeted",
    "summarize12", "summarize9", "threshold_sweep", "train", "tune_threshold",
    "tweet_features",
]
