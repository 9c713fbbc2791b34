"""Robustness analyses: class-imbalance sweep and cross-campaign transfer.

The imbalance sweep shows the replier classifier's precision and AUC holding
steady while recall decays as organic repliers outnumber coordinated ones.
The transfer matrix trains on one campaign and tests on another; campaigns
generated from the same recipe transfer well, campaigns with different
planted signals do not.
"""

import numpy as np

from reply_sentinel.corpus import merge_corpora
from reply_sentinel.dataset_builder import build_dataset
from reply_sentinel.evaluate import cross_campaign, imbalance_sweep
from reply_sentinel.features import build_replier_matrix
from reply_sentinel.similarity import (
    HashingEmbedder,
    compute_reply_embeddings,
    coreply_pair_join,
)
from reply_sentinel.synth import SynthConfig, generate


def replier_matrix_for(corpus):
    dataset = build_dataset(corpus)
    vectors = compute_reply_embeddings(corpus, HashingEmbedder(), scope=dataset.positives)
    join = coreply_pair_join(corpus, vectors, dataset.positives)
    return build_replier_matrix(corpus, set(dataset.positives), join.replier_samples)


# --- imbalance sweep -------------------------------------------------------
sweep_corpus, _ = generate(SynthConfig(
    n_targets=25, posts_per_target=4, io_fraction_targeted=0.25,
    n_io_repliers=50, n_organic_repliers=4000, organic_replies_lambda=120.0,
    io_sloppy_fraction=0.2, organic_echo_prob=0.0, seed=5,
), self_check=False)
matrix = replier_matrix_for(sweep_corpus)
print(f"sweep corpus: {int(matrix.y.sum())} coordinated / {int((matrix.y == 0).sum())} organic repliers")
print()
print("ratio   prec   rec    f1     auc")
for row in imbalance_sweep(matrix.X, matrix.y, ratios=range(5, 46, 10),
                           kind="random_forest", k=10, seed=5):
    if row.report is None:
        print(f"1:{int(row.parameter):<4} {row.note}")
        continue
    m = row.report.mean
    print(f"1:{int(row.parameter):<4} {m.precision:6.3f} {m.recall:6.3f} "
          f"{m.f1:6.3f} {m.auc:6.3f}")
print()

# --- cross-campaign transfer -----------------------------------------------
base = dict(n_targets=12, posts_per_target=8, n_io_repliers=60, n_organic_repliers=400)
twin_a, _ = generate(SynthConfig(**base, campaign="alpha", seed=21), self_check=False)
twin_b, _ = generate(SynthConfig(**base, campaign="beta", seed=22), self_check=False)
merged = merge_corpora(twin_a, twin_b)
matrix = replier_matrix_for(merged)

datasets = {}
for campaign in ("alpha", "beta"):
    rows = np.array([i for i, c in enumerate(matrix.campaigns) if c == campaign])
    datasets[campaign] = (matrix.X[rows], matrix.y[rows])
result = cross_campaign(datasets, kind="random_forest", k=10, seed=21)

print("transfer F1 (rows = trained on, columns = tested on):")
print("          " + "  ".join(f"{c:>8}" for c in result.campaigns))
for i, name in enumerate(result.campaigns):
    cells = "  ".join(f"{result.f1_matrix[i, j]:8.3f}" for j in range(len(result.campaigns)))
    print(f"{name:>8}  {cells}")
print()
print("twin campaigns share their recipe, so off-diagonal stays close to diagonal")
