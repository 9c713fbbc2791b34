import numpy as np
import pytest

from reply_sentinel.corpus import Corpus, Post, ReplyRecord
from reply_sentinel.similarity import (
    HashingEmbedder,
    FileEmbeddingProvider,
    PairsCsvWriter,
    ReplierSampleStore,
    SimilarityError,
    _pair_indices,
    compute_reply_embeddings,
    coreply_pair_join,
    cosine,
    iter_post_pair_blocks,
    join_from_pairs,
    load_pairs_csv,
    replier_similarity_sample,
    tweet_similarity_sample,
    write_embeddings_csv,
)


def make_corpus(reply_spec):
    """reply_spec: list of (reply_id, replier, post_id, text)."""
    c = Corpus()
    for _, _, post_id, _ in reply_spec:
        c.posts.setdefault(post_id, Post(tweet_id=post_id))
    for reply_id, replier, post_id, text in reply_spec:
        c.replies.append(ReplyRecord(
            reply_tweet_id=reply_id, replier_id=replier,
            target_tweet_id=post_id, text=text,
            replier_label="io" if replier.startswith("io") else "normal",
        ))
    return c


class TestEmbedder:
    def test_deterministic(self):
        p = HashingEmbedder()
        a = p.embed("some reply text")
        b = p.embed("some reply text")
        assert np.array_equal(a.components, b.components)

    def test_trailing_space_changes_vector(self):
        p = HashingEmbedder()
        c = cosine(p.embed("abc"), p.embed("abc "))
        assert c < 1.0

    def test_empty_text_flagged_zero(self):
        v = HashingEmbedder().embed("")
        assert v.empty and v.norm == 0.0 and not v.components.any()

    def test_unit_norm(self):
        v = HashingEmbedder().embed("hello there")
        assert np.linalg.norm(v.components) == pytest.approx(1.0)

    def test_short_text_uses_whole_string(self):
        v = HashingEmbedder().embed("ab")
        assert v.norm == 1.0


class TestCosine:
    def test_identity(self):
        u = HashingEmbedder().embed("identical")
        assert cosine(u, u) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        from reply_sentinel.similarity import EmbeddingVector
        u = EmbeddingVector(np.array([1.0, 0.0]), 1.0)
        v = EmbeddingVector(np.array([0.0, 1.0]), 1.0)
        assert cosine(u, v) == 0.0

    def test_negation(self):
        from reply_sentinel.similarity import EmbeddingVector
        u = EmbeddingVector(np.array([0.6, 0.8]), 1.0)
        v = EmbeddingVector(np.array([-0.6, -0.8]), 1.0)
        assert cosine(u, v) == -1.0

    def test_dimension_mismatch(self):
        from reply_sentinel.similarity import EmbeddingVector
        u = EmbeddingVector(np.array([1.0]), 1.0)
        v = EmbeddingVector(np.array([1.0, 0.0]), 1.0)
        with pytest.raises(SimilarityError, match="dimension mismatch"):
            cosine(u, v)

    def test_degenerate_vector(self):
        from reply_sentinel.similarity import EmbeddingVector
        u = EmbeddingVector(np.zeros(2), 0.0)
        v = EmbeddingVector(np.array([1.0, 0.0]), 1.0)
        with pytest.raises(SimilarityError, match="degenerate"):
            cosine(u, v)


class TestPairIndices:
    def test_budget_equals_total_recovers_all_pairs(self):
        rng = np.random.default_rng(0)
        for k in (3, 5, 12):
            total = k * (k - 1) // 2
            i, j = _pair_indices(k, total, rng)
            got = set(zip(i.tolist(), j.tolist()))
            want = {(a, b) for a in range(k) for b in range(a + 1, k)}
            assert got == want

    def test_partial_budget_valid_pairs(self):
        rng = np.random.default_rng(1)
        i, j = _pair_indices(100, 50, rng)
        assert len(set(zip(i.tolist(), j.tolist()))) == 50
        assert (i < j).all() and (i >= 0).all() and (j < 100).all()


class TestJoin:
    def test_three_replies_three_pairs(self):
        c = make_corpus([("r1", "a", "t1", "x"), ("r2", "b", "t1", "y"), ("r3", "c", "t1", "z")])
        vec = compute_reply_embeddings(c, HashingEmbedder())
        result = coreply_pair_join(c, vec, {"t1"})
        assert result.stats.emitted_pairs == 3
        assert len(result.tweet_samples["t1"]) == 3

    def test_single_reply_zero_pairs(self):
        c = make_corpus([("r1", "a", "t1", "x")])
        vec = compute_reply_embeddings(c, HashingEmbedder())
        result = coreply_pair_join(c, vec, {"t1"})
        assert result.stats.emitted_pairs == 0
        assert "t1" not in result.tweet_samples

    def test_pair_count_conservation(self, small_synth):
        corpus, truth, _ = small_synth
        scope = set(corpus.posts)
        vec = compute_reply_embeddings(corpus, HashingEmbedder(), scope=scope)
        result = coreply_pair_join(corpus, vec, scope)
        assert (
            result.stats.emitted_pairs
            + result.stats.missing_skipped
            + result.stats.self_excluded
            == result.stats.expected_pairs
        )

    def test_replier_sample_sizes_sum_to_twice_pairs(self, small_synth):
        corpus, _, _ = small_synth
        scope = set(corpus.posts)
        vec = compute_reply_embeddings(corpus, HashingEmbedder(), scope=scope)
        result = coreply_pair_join(corpus, vec, scope)
        total = sum(len(s) for s in result.replier_samples.values())
        assert total == 2 * result.stats.emitted_pairs

    def test_same_user_pairs_excluded(self):
        c = make_corpus([("r1", "a", "t1", "x"), ("r2", "a", "t1", "y"), ("r3", "b", "t1", "z")])
        vec = compute_reply_embeddings(c, HashingEmbedder())
        result = coreply_pair_join(c, vec, {"t1"})
        assert result.stats.self_excluded == 1
        assert result.stats.emitted_pairs == 2

    def test_missing_embedding_counted_in_gap(self):
        c = make_corpus([("r1", "a", "t1", "x"), ("r2", "b", "t1", None), ("r3", "c", "t1", "z")])
        vec = compute_reply_embeddings(c, HashingEmbedder())
        result = coreply_pair_join(c, vec, {"t1"})
        assert result.stats.emitted_pairs == 1  # only r1-r3
        assert result.stats.missing_skipped == 2
        assert result.gap_report[0].poster_tweetid == "t1"
        assert result.gap_report[0].missing_count == 2

    def test_canonical_ordering_independent_of_input_order(self):
        spec = [("r3", "c", "t1", "z"), ("r1", "a", "t1", "x"), ("r2", "b", "t1", "y")]
        c1 = make_corpus(spec)
        c2 = make_corpus(list(reversed(spec)))
        vec1 = compute_reply_embeddings(c1, HashingEmbedder())
        vec2 = compute_reply_embeddings(c2, HashingEmbedder())
        pairs1 = [p for _, ps, _, _, _ in iter_post_pair_blocks(c1, vec1, {"t1"}) for p in ps]
        pairs2 = [p for _, ps, _, _, _ in iter_post_pair_blocks(c2, vec2, {"t1"}) for p in ps]
        assert pairs1 == pairs2
        for p in pairs1:
            assert p.replier_tweetid_x < p.replier_tweetid_y

    def test_labels_do_not_affect_cosines(self):
        spec = [("r1", "io1", "t1", "x"), ("r2", "org1", "t1", "y")]
        c1 = make_corpus(spec)
        c2 = make_corpus([("r1", "org9", "t1", "x"), ("r2", "io9", "t1", "y")])
        v1 = compute_reply_embeddings(c1, HashingEmbedder())
        v2 = compute_reply_embeddings(c2, HashingEmbedder())
        r1 = coreply_pair_join(c1, v1, {"t1"})
        r2 = coreply_pair_join(c2, v2, {"t1"})
        assert r1.tweet_samples["t1"].values.tolist() == r2.tweet_samples["t1"].values.tolist()

    def test_spill_store_matches_memory(self, small_synth, tmp_path):
        corpus, _, _ = small_synth
        scope = sorted(corpus.posts)[:20]
        vec = compute_reply_embeddings(corpus, HashingEmbedder(), scope=set(scope))
        mem = coreply_pair_join(corpus, vec, scope)
        spill = coreply_pair_join(corpus, vec, scope, spill_dir=tmp_path / "spill")
        assert set(mem.replier_samples) == set(spill.replier_samples)
        for uid in mem.replier_samples:
            assert np.array_equal(
                mem.replier_samples[uid].values, spill.replier_samples[uid].values
            )

    def test_subsampling_cap(self):
        spec = [(f"r{i:02d}", f"u{i:02d}", "t1", f"text {i}") for i in range(30)]
        c = make_corpus(spec)
        vec = compute_reply_embeddings(c, HashingEmbedder())
        result = coreply_pair_join(c, vec, {"t1"}, pair_cap=20, pair_budget=100, seed=3)
        assert result.stats.subsampled_posts == 1
        assert result.stats.emitted_pairs == 100
        assert result.gap_report[0].subsampled is True
        # deterministic across runs
        again = coreply_pair_join(c, vec, {"t1"}, pair_cap=20, pair_budget=100, seed=3)
        assert result.tweet_samples["t1"].values.tolist() == again.tweet_samples["t1"].values.tolist()

    def test_sample_helpers(self):
        c = make_corpus([
            ("r1", "a", "t1", "xx"), ("r2", "b", "t1", "yy"),
            ("r3", "a", "t2", "zz"), ("r4", "c", "t2", "ww"), ("r5", "d", "t2", "vv"),
        ])
        vec = compute_reply_embeddings(c, HashingEmbedder())
        pairs = [p for _, ps, _, _, _ in iter_post_pair_blocks(c, vec, {"t1", "t2"}) for p in ps]
        assert len(tweet_similarity_sample([p for p in pairs if p.poster_tweetid == "t2"])) == 3
        # a replied once alongside 1 other (t1) and once alongside 2 others (t2)
        assert len(replier_similarity_sample("a", pairs)) == 3


class TestPairsFile:
    def test_round_trip(self, tmp_path, small_synth):
        corpus, _, _ = small_synth
        scope = sorted(corpus.posts)[:10]
        vec = compute_reply_embeddings(corpus, HashingEmbedder(), scope=set(scope))
        sink = PairsCsvWriter(tmp_path / "pairs.csv")
        live = coreply_pair_join(corpus, vec, scope, pairs_sink=sink)
        sink.close()
        grouped, _ = load_pairs_csv(tmp_path / "pairs.csv")
        from_file = join_from_pairs(grouped)
        assert from_file.stats.emitted_pairs == live.stats.emitted_pairs
        assert set(from_file.tweet_samples) == set(live.tweet_samples)
        for tid in live.tweet_samples:
            assert np.allclose(
                np.sort(from_file.tweet_samples[tid].values),
                np.sort(live.tweet_samples[tid].values),
            )
        for uid in live.replier_samples:
            assert np.allclose(
                np.sort(from_file.replier_samples[uid].values),
                np.sort(live.replier_samples[uid].values),
            )

    def test_bad_header(self, tmp_path):
        (tmp_path / "bad.csv").write_text("a,b,c\n1,2,3\n")
        with pytest.raises(SimilarityError, match="bad pairs file header"):
            load_pairs_csv(tmp_path / "bad.csv")

    def test_scope_restricts_replier_samples(self, tmp_path, small_synth):
        corpus, _, _ = small_synth
        all_posts = sorted(corpus.posts)[:10]
        narrow = set(all_posts[:3])
        vec = compute_reply_embeddings(corpus, HashingEmbedder(), scope=set(all_posts))
        sink = PairsCsvWriter(tmp_path / "pairs.csv")
        coreply_pair_join(corpus, vec, all_posts, pairs_sink=sink)
        sink.close()
        grouped, _ = load_pairs_csv(tmp_path / "pairs.csv")
        scoped = join_from_pairs(grouped, scope=narrow)
        assert set(scoped.tweet_samples) <= narrow
        direct = coreply_pair_join(corpus, vec, narrow)
        assert set(scoped.replier_samples) == set(direct.replier_samples)
        for uid in direct.replier_samples:
            assert np.allclose(
                np.sort(scoped.replier_samples[uid].values),
                np.sort(direct.replier_samples[uid].values),
            )


class TestThreadInvariance:
    def test_embeddings_identical_across_thread_counts(self, small_synth, monkeypatch):
        import reply_sentinel.similarity as sim
        corpus, _, _ = small_synth
        monkeypatch.setattr(sim, "PARALLEL_MIN_TEXTS", 1)
        monkeypatch.setenv("REPLY_SENTINEL_THREADS", "4")
        multi = compute_reply_embeddings(corpus, HashingEmbedder())
        monkeypatch.setenv("REPLY_SENTINEL_THREADS", "1")
        single = compute_reply_embeddings(corpus, HashingEmbedder())
        assert set(multi) == set(single)
        for rid in single:
            assert np.array_equal(multi[rid].components, single[rid].components)
        # and the join built from them is identical too
        scope = set(corpus.posts)
        a = coreply_pair_join(corpus, multi, scope)
        b = coreply_pair_join(corpus, single, scope)
        assert a.stats == b.stats
        for tid in a.tweet_samples:
            assert np.array_equal(a.tweet_samples[tid].values, b.tweet_samples[tid].values)


class TestEmbeddingFile:
    def test_round_trip(self, tmp_path):
        p = HashingEmbedder(dim=8)
        vectors = {f"r{i}": p.embed(f"text number {i}") for i in range(5)}
        write_embeddings_csv(vectors, tmp_path / "emb.csv")
        provider = FileEmbeddingProvider(tmp_path / "emb.csv")
        assert provider.dim == 8
        for rid, vec in vectors.items():
            assert np.allclose(provider.get(rid).components, vec.components)
        assert provider.get("unknown") is None

    def test_bad_header(self, tmp_path):
        (tmp_path / "emb.csv").write_text("tweet_id,a,b\nr1,1,2\n")
        with pytest.raises(SimilarityError, match="bad embedding file header"):
            FileEmbeddingProvider(tmp_path / "emb.csv")


class TestSpillStore:
    def test_shard_merge_deterministic(self, tmp_path):
        s1 = ReplierSampleStore(spill_dir=tmp_path / "a", n_shards=4)
        s2 = ReplierSampleStore(spill_dir=tmp_path / "b", n_shards=4)
        for store in (s1, s2):
            for i in range(100):
                store.add(f"user{i % 7}", float(i))
        r1 = s1.finalize()
        r2 = s2.finalize()
        assert set(r1) == set(r2) == {f"user{i}" for i in range(7)}
        for uid in r1:
            assert np.array_equal(r1[uid].values, r2[uid].values)
