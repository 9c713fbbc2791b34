"""End-to-end replier classifier: which accounts replying to attacked posts
are part of the coordination?

The replier task is heavily imbalanced, so evaluation averages 10-fold CV
over balanced downsampled datasets. Grouped permutation importance then shows
*why* the model works: shuffling the cross-replier similarity block hurts far
more than shuffling any other attribute group.
"""

from reply_sentinel.dataset_builder import build_dataset
from reply_sentinel.evaluate import (
    downsample_balanced,
    evaluate_downsampled,
    fit_cv,
    permutation_importance,
)
from reply_sentinel.features import REPLIER_FEATURE_GROUPS, build_replier_matrix
from reply_sentinel.similarity import (
    HashingEmbedder,
    compute_reply_embeddings,
    coreply_pair_join,
)
from reply_sentinel.synth import SynthConfig, generate

corpus, _ = generate(SynthConfig(n_targets=20, posts_per_target=8,
                                 n_io_repliers=120, n_organic_repliers=800, seed=5))
dataset = build_dataset(corpus)

# the replier task only looks at replies to the attacked posts
vectors = compute_reply_embeddings(corpus, HashingEmbedder(), scope=dataset.positives)
join = coreply_pair_join(corpus, vectors, dataset.positives)
matrix = build_replier_matrix(corpus, set(dataset.positives), join.replier_samples)
n_io = int(matrix.y.sum())
print(f"repliers: {n_io} coordinated vs {len(matrix.y) - n_io} organic "
      f"({matrix.X.shape[1]} features each)")

report = evaluate_downsampled(matrix.X, matrix.y, "random_forest",
                              n_datasets=10, k=10, seed=5)
m, s = report.mean, report.stderr
print(f"random forest, 10 balanced datasets: "
      f"P {m.precision:.2f}±{s.precision:.2f}  R {m.recall:.2f}±{s.recall:.2f}  "
      f"F1 {m.f1:.2f}±{s.f1:.2f}  AUC {m.auc:.2f}±{s.auc:.2f}")
print()

# grouped permutation importance on one balanced dataset
rows_idx = downsample_balanced(matrix.y, n_datasets=1, seed=5)[0]
X, y = matrix.X[rows_idx], matrix.y[rows_idx]
cv = fit_cv(X, y, "random_forest", k=10, seed=5)
ranking = permutation_importance(cv, X, y, REPLIER_FEATURE_GROUPS,
                                 matrix.names, repeats=10, seed=5)
print("feature-group importance (median F1 drop when shuffled):")
for row in ranking:
    bar = "#" * int(60 * max(row.median_drop, 0) / max(ranking[0].median_drop, 1e-9))
    print(f"  {row.group:<24} {row.median_drop:7.4f}  {bar}")
