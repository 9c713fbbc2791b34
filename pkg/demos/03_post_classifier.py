"""End-to-end post classifier: which posts are under a coordinated reply attack?

Pipeline: synthetic corpus -> balanced targeted/control dataset -> pairwise
cosine join over co-replies -> 99-feature vectors -> five classifiers under
stratified 10-fold cross-validation with F1-tuned thresholds.
"""

from reply_sentinel.dataset_builder import build_dataset
from reply_sentinel.evaluate import kfold_cv
from reply_sentinel.features import build_tweet_matrix
from reply_sentinel.models import MODEL_KINDS
from reply_sentinel.similarity import (
    HashingEmbedder,
    compute_reply_embeddings,
    coreply_pair_join,
)
from reply_sentinel.synth import SynthConfig, generate

corpus, _ = generate(SynthConfig(n_targets=20, posts_per_target=8,
                                 n_io_repliers=120, n_organic_repliers=800, seed=5))
dataset = build_dataset(corpus)
scope = dataset.positives | dataset.negatives
print(f"dataset: {len(dataset.positives)} targeted / {len(dataset.negatives)} control")

# embed every reply once, then join co-replies per post
vectors = compute_reply_embeddings(corpus, HashingEmbedder(), scope=scope)
join = coreply_pair_join(corpus, vectors, scope)
print(f"pair join: {join.stats.emitted_pairs} cosine pairs over {len(scope)} posts")

matrix = build_tweet_matrix(corpus, dataset.positives, dataset.negatives,
                            join.tweet_samples)
print(f"feature matrix: {matrix.X.shape[0]} posts x {matrix.X.shape[1]} features")
print()

print(f"{'classifier':<22} {'prec':>6} {'rec':>6} {'f1':>6} {'auc':>6}")
for kind in MODEL_KINDS:
    report = kfold_cv(matrix.X, matrix.y, kind, k=10, seed=5)
    m = report.mean
    print(f"{kind:<22} {m.precision:6.3f} {m.recall:6.3f} {m.f1:6.3f} {m.auc:6.3f}")
