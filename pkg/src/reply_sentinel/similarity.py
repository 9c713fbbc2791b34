"""Text-embedding providers and the pairwise cosine join over co-replies.

Replies to the same post form k*(k-1)/2 unordered pairs; the join emits each
pair exactly once, blocked per post so the working set is bounded by the
largest post, never by the total pair count. Per-replier cosine samples are
accumulated either in memory or in sharded append-only spill files whose
final merge does not depend on scheduling.

The default embedder is deterministic character-trigram feature hashing, so
the whole pipeline runs without any external model. A file-backed provider
loads precomputed vectors, and a pairs file can bypass embedding entirely.
"""

from __future__ import annotations

import csv
import os
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional

import numpy as np

from .corpus import Corpus
from .stats import AttributeSample

DEFAULT_DIM = 64
DEFAULT_NGRAM = 3
DEFAULT_PAIR_CAP = 20_000          # replies per post before subsampling kicks in
DEFAULT_PAIR_BUDGET = 10_000_000   # sampled pairs per capped post
PARALLEL_MIN_TEXTS = 1000          # below this, threading costs more than it saves

PAIRS_CSV_HEADER = (
    "replier_label_x", "replier_label_y", "replier_userid_x", "replier_userid_y",
    "replier_tweetid_x", "replier_tweetid_y", "poster_tweetid", "cosine",
)


class SimilarityError(Exception):
    pass


@dataclass
class EmbeddingVector:
    components: np.ndarray
    norm: float
    empty: bool = False


@dataclass(frozen=True)
class PairSimilarity:
    poster_tweetid: str
    replier_userid_x: str
    replier_userid_y: str
    replier_tweetid_x: str
    replier_tweetid_y: str
    replier_label_x: str
    replier_label_y: str
    cosine: float


class HashingEmbedder:
    """Character n-gram feature hashing into a fixed-dimension L2-normalized
    vector. Fully deterministic (crc32-based), no fitted state."""

    def __init__(self, dim: int = DEFAULT_DIM, ngram: int = DEFAULT_NGRAM):
        if dim <= 0 or ngram <= 0:
            raise ValueError("dim and ngram must be positive")
        self.dim = dim
        self.ngram = ngram

    def embed(self, text: str) -> EmbeddingVector:
        vec = np.zeros(self.dim)
        if not text:
            return EmbeddingVector(vec, 0.0, empty=True)
        data = text.encode("utf-8")
        n = self.ngram
        grams = [data[i : i + n] for i in range(len(data) - n + 1)] or [data]
        for g in grams:
            h = zlib.crc32(g)
            sign = 1.0 if h & 0x80000000 else -1.0
            vec[h % self.dim] += sign
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
            norm = 1.0
        return EmbeddingVector(vec, norm)


class FileEmbeddingProvider:
    """Loads precomputed vectors from a CSV with header tweet_id,v0..v{d-1}."""

    def __init__(self, path):
        self.vectors: dict[str, EmbeddingVector] = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[0] != "tweet_id":
                raise SimilarityError(f"bad embedding file header in {path}")
            self.dim = len(header) - 1
            expected = ["tweet_id"] + [f"v{i}" for i in range(self.dim)]
            if header != expected:
                raise SimilarityError(f"bad embedding file header in {path}")
            for row in reader:
                comp = np.array([float(v) for v in row[1:]])
                norm = float(np.linalg.norm(comp))
                self.vectors[row[0]] = EmbeddingVector(comp, norm, empty=norm == 0.0)

    def get(self, tweet_id: str) -> Optional[EmbeddingVector]:
        return self.vectors.get(tweet_id)


def write_embeddings_csv(vectors: Mapping[str, EmbeddingVector], path) -> None:
    ids = sorted(vectors)
    dim = len(next(iter(vectors.values())).components) if ids else DEFAULT_DIM
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tweet_id"] + [f"v{i}" for i in range(dim)])
        for tid in ids:
            w.writerow([tid] + [repr(float(v)) for v in vectors[tid].components])


def embed(provider, text: str) -> EmbeddingVector:
    return provider.embed(text)


def cosine(u: EmbeddingVector, v: EmbeddingVector) -> float:
    if u.components.shape != v.components.shape:
        raise SimilarityError(
            f"dimension mismatch: {u.components.shape} vs {v.components.shape}"
        )
    if u.norm == 0.0 or v.norm == 0.0:
        raise SimilarityError("degenerate vector")
    c = float(np.dot(u.components, v.components) / (u.norm * v.norm))
    return max(-1.0, min(1.0, c))


def compute_reply_embeddings(
    corpus: Corpus,
    provider,
    scope: Optional[set[str]] = None,
    threads: Optional[int] = None,
) -> dict[str, EmbeddingVector]:
    """Embed every reply text in scope; replies without text are omitted and
    will surface as gaps in the join. Work is split across threads (capped by
    REPLY_SENTINEL_THREADS) with an order-preserving merge, so the result does
    not depend on scheduling."""
    targets = [
        r for r in corpus.replies
        if (scope is None or r.target_tweet_id in scope) and r.text is not None
    ]
    n_threads = threads if threads is not None else threads_from_env()
    if n_threads > 1 and len(targets) > PARALLEL_MIN_TEXTS:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            embedded = list(pool.map(lambda r: provider.embed(r.text), targets, chunksize=256))
    else:
        embedded = [provider.embed(r.text) for r in targets]
    return {r.reply_tweet_id: vec for r, vec in zip(targets, embedded)}


def threads_from_env(default: int = 1) -> int:
    raw = os.environ.get("REPLY_SENTINEL_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return default


# --- per-replier accumulation -------------------------------------------------

class ReplierSampleStore:
    """Collects (replier, cosine) contributions; each pair lands on both of
    its endpoints. With ``spill_dir`` set, rows go to sharded append-only
    files and are merged at the end, keeping memory independent of the total
    pair count; appends happen in deterministic post order either way."""

    def __init__(self, spill_dir=None, n_shards: int = 16):
        self.spill_dir = Path(spill_dir) if spill_dir is not None else None
        self.n_shards = n_shards
        self._memory: dict[str, list[float]] = {}
        self._handles: list = []
        if self.spill_dir is not None:
            self.spill_dir.mkdir(parents=True, exist_ok=True)
            self._handles = [
                open(self.spill_dir / f"shard_{i:03d}.csv", "w", encoding="utf-8")
                for i in range(n_shards)
            ]

    def add(self, replier_id: str, value: float) -> None:
        if self.spill_dir is None:
            self._memory.setdefault(replier_id, []).append(value)
        else:
            shard = zlib.crc32(replier_id.encode("utf-8")) % self.n_shards
            self._handles[shard].write(f"{replier_id},{value!r}\n")

    def finalize(self) -> dict[str, AttributeSample]:
        if self.spill_dir is None:
            grouped = self._memory
        else:
            for h in self._handles:
                h.close()
            grouped = {}
            for i in range(self.n_shards):
                with open(self.spill_dir / f"shard_{i:03d}.csv", encoding="utf-8") as fh:
                    for line in fh:
                        uid, _, raw = line.rstrip("\n").rpartition(",")
                        grouped.setdefault(uid, []).append(float(raw))
        return {
            uid: AttributeSample("cosine", np.asarray(vals))
            for uid, vals in sorted(grouped.items())
        }


# --- the join -----------------------------------------------------------------

@dataclass
class GapReportRow:
    poster_tweetid: str
    missing_count: int
    subsampled: bool


@dataclass
class JoinStats:
    expected_pairs: int = 0      # sum of C(k,2) over non-subsampled posts
    emitted_pairs: int = 0
    missing_skipped: int = 0     # pairs lost to absent/empty embeddings
    self_excluded: int = 0       # same-user pairs, excluded by policy
    subsampled_posts: int = 0


@dataclass
class JoinResult:
    tweet_samples: dict[str, AttributeSample]
    replier_samples: dict[str, AttributeSample]
    gap_report: list[GapReportRow]
    stats: JoinStats


def _pair_indices(k: int, budget: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Uniform sample (without replacement) of pair indices from the k*(k-1)/2
    unordered pairs, returned as row/col index arrays with row < col."""
    total = k * (k - 1) // 2
    picked = np.empty(0, dtype=np.int64)
    while picked.size < budget:
        draw = rng.integers(0, total, size=budget - picked.size, dtype=np.int64)
        picked = np.unique(np.concatenate([picked, draw]))
    picked = np.sort(picked)
    # linear index m over pairs ordered (0,1),(0,2)..: invert the triangular layout
    i = (k - 2 - np.floor(np.sqrt(-8.0 * picked + 4 * k * (k - 1) - 7) / 2.0 - 0.5)).astype(np.int64)
    j = picked + i + 1 - (i * (2 * k - i - 1)) // 2
    return i, j


def iter_post_pair_blocks(
    corpus: Corpus,
    vectors: Mapping[str, EmbeddingVector],
    scope: Iterable[str],
    pair_cap: int = DEFAULT_PAIR_CAP,
    pair_budget: int = DEFAULT_PAIR_BUDGET,
    seed: int = 0,
    chunk_rows: int = 512,
) -> Iterator[tuple[str, list[PairSimilarity], int, bool, int]]:
    """Yield (post_id, pairs, missing_count, subsampled, self_excluded) per
    post in sorted id order. Pair ordering within a post is canonical:
    replier_tweetid_x < replier_tweetid_y, sorted lexicographically."""
    by_post = corpus.replies_by_post()
    for post_id in sorted(set(scope)):
        replies = by_post.get(post_id, [])
        k = len(replies)
        if k < 2:
            continue
        have = np.array([r.reply_tweet_id in vectors and not vectors[r.reply_tweet_id].empty
                         for r in replies])
        mat = np.zeros((k, len(next(iter(vectors.values())).components) if vectors else DEFAULT_DIM))
        for idx, r in enumerate(replies):
            if have[idx]:
                mat[idx] = vectors[r.reply_tweet_id].components
        norms = np.linalg.norm(mat, axis=1)
        subsampled = k > pair_cap
        pairs: list[PairSimilarity] = []
        missing = 0
        self_excl = 0
        if subsampled:
            rng = np.random.default_rng((seed, zlib.crc32(post_id.encode("utf-8"))))
            rows, cols = _pair_indices(k, pair_budget, rng)
            for i, j in zip(rows, cols):
                i, j = int(i), int(j)
                if not (have[i] and have[j]):
                    missing += 1
                    continue
                if replies[i].replier_id == replies[j].replier_id:
                    self_excl += 1
                    continue
                c = float(mat[i] @ mat[j] / (norms[i] * norms[j]))
                pairs.append(_pair(post_id, replies[i], replies[j], c))
        else:
            for start in range(0, k - 1, chunk_rows):
                stop = min(start + chunk_rows, k - 1)
                block = mat[start:stop] @ mat.T
                for i in range(start, stop):
                    ri = replies[i]
                    for j in range(i + 1, k):
                        if not (have[i] and have[j]):
                            missing += 1
                            continue
                        rj = replies[j]
                        if ri.replier_id == rj.replier_id:
                            self_excl += 1
                            continue
                        c = float(block[i - start, j] / (norms[i] * norms[j]))
                        pairs.append(_pair(post_id, ri, rj, c))
        yield post_id, pairs, missing, subsampled, self_excl


def _pair(post_id: str, a, b, c: float) -> PairSimilarity:
    c = max(-1.0, min(1.0, c))
    if a.reply_tweet_id > b.reply_tweet_id:
        a, b = b, a
    return PairSimilarity(
        poster_tweetid=post_id,
        replier_userid_x=a.replier_id,
        replier_userid_y=b.replier_id,
        replier_tweetid_x=a.reply_tweet_id,
        replier_tweetid_y=b.reply_tweet_id,
        replier_label_x=a.replier_label,
        replier_label_y=b.replier_label,
        cosine=c,
    )


def coreply_pair_join(
    corpus: Corpus,
    vectors: Mapping[str, EmbeddingVector],
    scope: Iterable[str],
    pair_cap: int = DEFAULT_PAIR_CAP,
    pair_budget: int = DEFAULT_PAIR_BUDGET,
    seed: int = 0,
    spill_dir=None,
    pairs_sink=None,
    tweet_sample_sink=None,
) -> JoinResult:
    """Run the blocked pair join over ``scope`` and aggregate both consumers:
    per-post cosine samples and per-replier cosine samples.

    ``pairs_sink`` (a callable taking a PairSimilarity) optionally observes the
    stream, e.g. to write the pairs CSV. ``tweet_sample_sink`` (a callable
    taking post_id and AttributeSample) diverts per-post samples instead of
    retaining them, so no consumer ever holds more than one post's pairs.
    """
    store = ReplierSampleStore(spill_dir=spill_dir)
    tweet_samples: dict[str, AttributeSample] = {}
    gap_report: list[GapReportRow] = []
    stats = JoinStats()
    by_post = corpus.replies_by_post()
    for post_id in sorted(set(scope)):
        k = len(by_post.get(post_id, []))
        if k >= 2 and k <= pair_cap:
            stats.expected_pairs += k * (k - 1) // 2
    for post_id, pairs, missing, subsampled, self_excl in iter_post_pair_blocks(
        corpus, vectors, scope, pair_cap=pair_cap, pair_budget=pair_budget, seed=seed
    ):
        stats.emitted_pairs += len(pairs)
        stats.missing_skipped += missing
        stats.self_excluded += self_excl
        if subsampled:
            stats.subsampled_posts += 1
        if missing or subsampled:
            gap_report.append(GapReportRow(post_id, missing, subsampled))
        values = np.empty(len(pairs))
        for idx, p in enumerate(pairs):
            values[idx] = p.cosine
            store.add(p.replier_userid_x, p.cosine)
            store.add(p.replier_userid_y, p.cosine)
            if pairs_sink is not None:
                pairs_sink(p)
        if values.size:
            sample = AttributeSample("cosine", values)
            if tweet_sample_sink is not None:
                tweet_sample_sink(post_id, sample)
            else:
                tweet_samples[post_id] = sample
    return JoinResult(tweet_samples, store.finalize(), gap_report, stats)


def tweet_similarity_sample(pairs: Iterable[PairSimilarity]) -> AttributeSample:
    values = [p.cosine for p in pairs]
    return AttributeSample("cosine", np.asarray(values, dtype=float))


def replier_similarity_sample(replier_id: str, pairs: Iterable[PairSimilarity]) -> AttributeSample:
    values = [
        p.cosine
        for p in pairs
        if replier_id in (p.replier_userid_x, p.replier_userid_y)
    ]
    return AttributeSample("cosine", np.asarray(values, dtype=float))


# --- precomputed-pairs path -----------------------------------------------------

def load_pairs_csv(path) -> tuple[dict[str, list[PairSimilarity]], JoinStats]:
    """Ingest a precomputed-pairs CSV (the portable equivalent of the upstream
    serialized pair file), grouped by post."""
    grouped: dict[str, list[PairSimilarity]] = {}
    stats = JoinStats()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PAIRS_CSV_HEADER:
            raise SimilarityError(f"bad pairs file header in {path}")
        for row in reader:
            rec = dict(zip(PAIRS_CSV_HEADER, row))
            c = float(rec["cosine"])
            if not -1.0 <= c <= 1.0:
                raise SimilarityError(f"cosine out of range: {c}")
            label_x = "io" if rec["replier_label_x"].strip() in ("1", "io") else "normal"
            label_y = "io" if rec["replier_label_y"].strip() in ("1", "io") else "normal"
            x_id, y_id = rec["replier_tweetid_x"], rec["replier_tweetid_y"]
            ux, uy = rec["replier_userid_x"], rec["replier_userid_y"]
            if x_id > y_id:
                x_id, y_id = y_id, x_id
                ux, uy = uy, ux
                label_x, label_y = label_y, label_x
            p = PairSimilarity(
                poster_tweetid=rec["poster_tweetid"],
                replier_userid_x=ux, replier_userid_y=uy,
                replier_tweetid_x=x_id, replier_tweetid_y=y_id,
                replier_label_x=label_x, replier_label_y=label_y,
                cosine=c,
            )
            grouped.setdefault(p.poster_tweetid, []).append(p)
            stats.emitted_pairs += 1
    return grouped, stats


def join_from_pairs(
    grouped: Mapping[str, list[PairSimilarity]],
    scope: Optional[Iterable[str]] = None,
) -> JoinResult:
    """Build the same aggregates as the live join from precomputed pairs.
    ``scope`` restricts to the given posts; a pairs file may cover more posts
    than one analysis wants (replier samples must never absorb pairs from
    posts outside their scope)."""
    tweet_samples: dict[str, AttributeSample] = {}
    store = ReplierSampleStore()
    stats = JoinStats()
    post_ids = sorted(grouped) if scope is None else sorted(set(scope) & set(grouped))
    for post_id in post_ids:
        pairs = grouped[post_id]
        stats.emitted_pairs += len(pairs)
        tweet_samples[post_id] = tweet_similarity_sample(pairs)
        for p in pairs:
            store.add(p.replier_userid_x, p.cosine)
            store.add(p.replier_userid_y, p.cosine)
    return JoinResult(tweet_samples, store.finalize(), [], stats)


class PairsCsvWriter:
    """Streaming sink writing the pairs CSV with the exact contract header."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(PAIRS_CSV_HEADER)

    def __call__(self, p: PairSimilarity) -> None:
        self._writer.writerow([
            1 if p.replier_label_x == "io" else 0,
            1 if p.replier_label_y == "io" else 0,
            p.replier_userid_x, p.replier_userid_y,
            p.replier_tweetid_x, p.replier_tweetid_y,
            p.poster_tweetid, repr(p.cosine),
        ])

    def close(self) -> None:
        self._fh.close()


def write_gap_report(rows: Iterable[GapReportRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["poster_tweetid", "missing_count", "subsampled"])
        for r in rows:
            w.writerow([r.poster_tweetid, r.missing_count, str(r.subsampled).lower()])
