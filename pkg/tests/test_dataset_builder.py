from datetime import datetime, timedelta, timezone

import pytest

from reply_sentinel.corpus import Corpus, Post, ReplyRecord
from reply_sentinel.dataset_builder import (
    DatasetError,
    build_dataset,
    ccdf,
    read_classification_dataset,
    rq1_report,
    select_controls,
    select_targeted,
    write_classification_dataset,
    write_rq1_report,
)
from reply_sentinel.stats import EmptySampleError

T0 = datetime(2021, 1, 1, tzinfo=timezone.utc)


def hours(h):
    return T0 + timedelta(hours=h)


class CorpusBuilder:
    def __init__(self):
        self.corpus = Corpus()
        self._serial = 0

    def post(self, tweet_id, author, at_hours, **kw):
        self.corpus.posts[tweet_id] = Post(
            tweet_id=tweet_id, author_id=author, created_at=hours(at_hours), **kw
        )
        return self

    def replies(self, tweet_id, n, label="normal", start_hour=None, replier_prefix=None):
        post = self.corpus.posts[tweet_id]
        base = post.created_at if start_hour is None else hours(start_hour)
        prefix = replier_prefix or ("io" if label == "io" else "org")
        for i in range(n):
            self._serial += 1
            self.corpus.replies.append(ReplyRecord(
                reply_tweet_id=f"r{self._serial:05d}",
                replier_id=f"{prefix}{i}",
                target_tweet_id=tweet_id,
                created_at=base + timedelta(minutes=10 * (i + 1)),
                replier_label=label,
            ))
        return self


class TestSelectTargeted:
    def test_five_io_replies_included(self):
        b = CorpusBuilder().post("t1", "a", 0).replies("t1", 5, label="io")
        assert select_targeted(b.corpus) == {"t1"}

    def test_four_io_replies_excluded(self):
        b = CorpusBuilder().post("t1", "a", 0).replies("t1", 4, label="io")
        assert select_targeted(b.corpus) == set()

    def test_normal_replies_do_not_count(self):
        b = CorpusBuilder().post("t1", "a", 0).replies("t1", 100, label="normal")
        assert select_targeted(b.corpus) == set()

    def test_monotone_shrinkage(self, small_synth):
        corpus, _, _ = small_synth
        previous = None
        for m in range(5, 15):
            current = select_targeted(corpus, m)
            if previous is not None:
                assert current <= previous
            previous = current


class TestSelectControls:
    def build(self, n_targeted, n_candidates, author="a"):
        b = CorpusBuilder()
        for i in range(n_targeted):
            tid = f"t{i}"
            b.post(tid, author, at_hours=i)
            b.replies(tid, 5, label="io")
            b.replies(tid, 2, label="normal")
        # io replies land within ~1 hour of each post; candidates start much later
        for i in range(n_candidates):
            cid = f"c{i}"
            b.post(cid, author, at_hours=100 + i)
            b.replies(cid, 5, label="normal")
        return b.corpus

    def test_enough_candidates_takes_chronological_prefix(self):
        corpus = self.build(3, 5)
        ds = select_controls(corpus, select_targeted(corpus))
        assert ds.positives == {"t0", "t1", "t2"}
        assert ds.negatives == {"c0", "c1", "c2"}

    def test_scarce_candidates_keep_most_recent_targeted(self):
        corpus = self.build(3, 1)
        ds = select_controls(corpus, select_targeted(corpus))
        assert ds.positives == {"t2"}  # most recent targeted survives
        assert ds.negatives == {"c0"}

    def test_author_without_candidates_dropped(self):
        corpus = self.build(2, 0)
        ds = select_controls(corpus, select_targeted(corpus))
        assert ds.positives == set() and ds.negatives == set()
        assert ds.dropped_authors == [("a", "no qualifying control post")]

    def test_control_below_reply_floor_ignored(self):
        corpus = self.build(1, 2)
        # strip replies from c0 so only c1 qualifies
        corpus.replies = [r for r in corpus.replies if r.target_tweet_id != "c0"]
        ds = select_controls(corpus, select_targeted(corpus))
        assert ds.negatives == {"c1"}

    def test_temporal_separation(self, small_synth):
        corpus, _, _ = small_synth
        ds = build_dataset(corpus)
        last_io = {}
        for r in corpus.replies:
            if r.replier_label != "io":
                continue
            author = corpus.posts[r.target_tweet_id].author_id
            if author is not None:
                last_io[author] = max(last_io.get(author, r.created_at), r.created_at)
        for cid in ds.negatives:
            post = corpus.posts[cid]
            assert post.created_at > last_io[post.author_id]

    def test_balance_overall_and_per_author(self, small_synth):
        corpus, _, _ = small_synth
        ds = build_dataset(corpus)
        assert len(ds.positives) == len(ds.negatives) > 0
        for author, (pos, neg) in ds.per_target_pairing.items():
            assert len(pos) == len(neg) > 0

    def test_timestamp_tie_breaks_on_tweet_id(self):
        b = CorpusBuilder()
        b.post("t0", "a", 0)
        b.replies("t0", 5, label="io")
        for cid in ("cB", "cA"):  # same timestamp, ids decide
            b.post(cid, "a", 50)
            b.replies(cid, 5, label="normal")
        ds = select_controls(b.corpus, {"t0"})
        assert ds.negatives == {"cA"}

    def test_empty_targeted_errors(self):
        with pytest.raises(DatasetError, match="empty targeted set"):
            select_controls(Corpus(), set())


class TestCcdf:
    def test_counts(self):
        assert ccdf([1, 1, 2]) == [(1.0, 1.0), (2.0, pytest.approx(1 / 3))]

    def test_singleton(self):
        assert ccdf([4.0]) == [(4.0, 1.0)]

    def test_first_fraction_is_one_and_decreasing(self):
        import numpy as np
        rng = np.random.default_rng(2)
        for _ in range(20):
            points = ccdf(rng.integers(0, 10, size=30))
            assert points[0][1] == 1.0
            fracs = [f for _, f in points]
            assert all(a > b for a, b in zip(fracs, fracs[1:]))

    def test_empty_errors(self):
        with pytest.raises(EmptySampleError):
            ccdf([])


class TestRq1Report:
    def test_synthetic_report(self, small_synth, tmp_path):
        corpus, truth, config = small_synth
        report = rq1_report(corpus, stopwords=["the", "a"])
        assert set(report.medians) >= {
            "followers", "following", "targeted_per_target",
            "io_replies_per_targeted", "reply_delay_minutes",
        }
        assert report.medians["io_replies_per_targeted"] >= 5
        n_targeted = sum(1 for v in truth.post_labels.values() if v == "targeted")
        assert len(report.tables["RQ1_number_of_reply_per_tweet"]) == n_targeted
        assert report.medians["targeted_per_target"] == pytest.approx(
            n_targeted / config.n_targets
        )
        for points in report.ccdfs.values():
            assert points[0][1] == 1.0
        # targeted posts carry planted topic tokens; organic posts do not
        targeted_terms = dict(report.term_freq_targeted)
        assert any(t.startswith("topic") for t in targeted_terms)
        write_rq1_report(report, tmp_path)
        assert (tmp_path / "medians.json").exists()
        assert (tmp_path / "ccdf_followers.csv").exists()
        assert (tmp_path / "term_freq_targeted.csv").exists()

    def test_stopwords_removed(self, small_synth):
        corpus, _, _ = small_synth
        some_token = "topic00"
        with_stop = rq1_report(corpus, stopwords=[some_token])
        assert some_token not in dict(with_stop.term_freq_targeted)


class TestDatasetIo:
    def test_round_trip(self, small_synth, tmp_path):
        corpus, _, _ = small_synth
        ds = build_dataset(corpus)
        path = tmp_path / "classification_dataset.csv"
        write_classification_dataset(ds, path)
        loaded = read_classification_dataset(path)
        assert loaded.positives == ds.positives
        assert loaded.negatives == ds.negatives
        assert loaded.campaigns == {**ds.campaigns}

    def test_matches_truth_on_synthetic(self, small_synth):
        corpus, truth, _ = small_synth
        ds = build_dataset(corpus)
        truth_targeted = {t for t, v in truth.post_labels.items() if v == "targeted"}
        truth_control = {t for t, v in truth.post_labels.items() if v == "control"}
        assert ds.positives == truth_targeted
        assert ds.negatives <= truth_control
