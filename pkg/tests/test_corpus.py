import csv
from datetime import datetime, timezone

import pytest

from reply_sentinel.corpus import (
    SCHEMAS,
    CorpusError,
    corpus_summary,
    format_timestamp,
    load_corpus,
    parse_timestamp,
    write_accounts_full,
    write_posts_full,
    write_replies_full,
)
from reply_sentinel.synth import write_synthetic


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def reply_row(reply_id, replier="u1", target="t1", created="2021-01-02T00:00:00+00:00",
              label=0, text="hello world"):
    return [reply_id, replier, target, created, 1, 0, 0, 0, 0, 0, label, text]


def post_row(tweet_id, author="a1", created="2021-01-01T00:00:00+00:00"):
    return [tweet_id, author, created, 10, 20, 1, 5, "camp", "unlabeled", "post text"]


def account_row(user_id, created="2015-06-01T00:00:00+00:00", is_io=0):
    return [user_id, created, 100, 50, 1000, is_io, "camp"]


@pytest.fixture
def basic_files(tmp_path):
    posts = write_csv(tmp_path / "posts_full.csv", SCHEMAS["posts_full"],
                      [post_row("t1"), post_row("t2")])
    accounts = write_csv(tmp_path / "accounts_full.csv", SCHEMAS["accounts_full"],
                         [account_row("u1"), account_row("u2", is_io=1), account_row("a1")])
    replies = write_csv(tmp_path / "replies_full.csv", SCHEMAS["replies_full"],
                        [reply_row("r1"), reply_row("r2", replier="u2", label=1)])
    return [posts, accounts, replies]


class TestTimestamps:
    def test_twitter_format(self):
        dt = parse_timestamp("Tue Mar 02 10:30:00 +0000 2021")
        assert dt == datetime(2021, 3, 2, 10, 30, tzinfo=timezone.utc)

    def test_iso_naive_assumed_utc(self):
        dt = parse_timestamp("2021-03-02 10:30:00")
        assert dt.tzinfo is not None and dt.hour == 10

    def test_round_trip_bit_exact(self):
        for raw in ("2021-03-02T10:30:00+00:00", "Tue Mar 02 10:30:00 +0000 2021",
                    "2021-03-02T10:30:00.123456+00:00"):
            dt = parse_timestamp(raw)
            assert parse_timestamp(format_timestamp(dt)) == dt

    def test_blank_is_none(self):
        assert parse_timestamp("") is None


class TestLoading:
    def test_happy_path(self, basic_files):
        result = load_corpus(basic_files)
        c = result.corpus
        assert len(c.posts) == 2 and len(c.accounts) == 3 and len(c.replies) == 2
        assert not result.report.rejects
        assert c.accounts["u2"].is_io
        assert c.replies[0].text == "hello world"

    def test_duplicate_reply_id(self, tmp_path):
        path = write_csv(tmp_path / "replies_full.csv", SCHEMAS["replies_full"],
                         [reply_row("r1"), reply_row("r1")])
        result = load_corpus([path])
        assert len(result.corpus.replies) == 1
        assert len(result.report.rejects) == 1
        assert result.report.rejects[0].reason == "duplicate reply id"

    def test_pre_epoch_account_rejected(self, tmp_path):
        path = write_csv(tmp_path / "accounts_full.csv", SCHEMAS["accounts_full"],
                         [account_row("old", created="2005-01-01T00:00:00+00:00")])
        result = load_corpus([path])
        assert "old" not in result.corpus.accounts
        assert [r.reason for r in result.report.rejects] == [
            "creation date before the platform epoch"
        ]

    def test_empty_file_with_header(self, tmp_path):
        path = write_csv(tmp_path / "replies_full.csv", SCHEMAS["replies_full"], [])
        result = load_corpus([path])
        assert result.corpus.replies == [] and not result.report.rejects

    def test_unknown_header_fatal(self, tmp_path):
        path = write_csv(tmp_path / "weird.csv", ["a", "b"], [[1, 2]])
        with pytest.raises(CorpusError, match="unknown header"):
            load_corpus([path])

    def test_missing_file_fatal(self, tmp_path):
        with pytest.raises(CorpusError, match="missing file"):
            load_corpus([tmp_path / "nope.csv"])

    def test_unparsable_row_rejected_not_fatal(self, tmp_path):
        bad = reply_row("r2")
        bad[4] = "not-a-number"
        path = write_csv(tmp_path / "replies_full.csv", SCHEMAS["replies_full"],
                         [reply_row("r1"), bad])
        result = load_corpus([path])
        assert len(result.corpus.replies) == 1
        assert "unparsable like_count" in result.report.rejects[0].reason

    def test_negative_count_rejected(self, tmp_path):
        bad = reply_row("r1")
        bad[5] = -3
        path = write_csv(tmp_path / "replies_full.csv", SCHEMAS["replies_full"], [bad])
        result = load_corpus([path])
        assert not result.corpus.replies
        assert "negative retweet_count" in result.report.rejects[0].reason

    def test_schema_map_renames_columns(self, tmp_path):
        header = list(SCHEMAS["replies_full"])
        header[0] = "id_of_reply"
        path = write_csv(tmp_path / "r.csv", header, [reply_row("r1")])
        with pytest.raises(CorpusError):
            load_corpus([path])
        result = load_corpus([path], schema_map={"id_of_reply": "reply_tweetid"})
        assert result.corpus.replies[0].reply_tweet_id == "r1"

    def test_row_conservation(self, tmp_path):
        rows = [reply_row(f"r{i}") for i in range(5)]
        rows[2][4] = "x"  # unparsable
        rows.append(reply_row("r0"))  # duplicate
        path = write_csv(tmp_path / "replies_full.csv", SCHEMAS["replies_full"], rows)
        result = load_corpus([path])
        prov = result.corpus.provenance[0]
        assert prov.total_rows == 6
        assert prov.loaded_rows + prov.rejected_rows == prov.total_rows
        assert prov.loaded_rows == len(result.corpus.replies)

    def test_idempotent_loading(self, basic_files):
        a = load_corpus(basic_files)
        b = load_corpus(basic_files)
        assert a.corpus.posts == b.corpus.posts
        assert a.corpus.accounts == b.corpus.accounts
        assert a.corpus.replies == b.corpus.replies
        assert a.report.rejects == b.report.rejects

    def test_skew_flagging(self, tmp_path):
        posts = write_csv(tmp_path / "posts_full.csv", SCHEMAS["posts_full"],
                          [post_row("t1", created="2021-01-05T00:00:00+00:00")])
        replies = write_csv(tmp_path / "replies_full.csv", SCHEMAS["replies_full"],
                            [reply_row("r1", created="2021-01-04T00:00:00+00:00"),
                             reply_row("r2", created="2021-01-06T00:00:00+00:00")])
        corpus = load_corpus([posts, replies]).corpus
        flags = {r.reply_tweet_id: r.skew_flagged for r in corpus.replies}
        assert flags == {"r1": True, "r2": False}

    def test_strict_references_reject_unresolved(self, tmp_path):
        path = write_csv(tmp_path / "replies_full.csv", SCHEMAS["replies_full"],
                         [reply_row("r1")])
        lenient = load_corpus([path])
        assert len(lenient.corpus.replies) == 1
        assert lenient.report.stub_accounts == 1 and lenient.report.stub_posts == 1
        strict = load_corpus([path], strict_references=True)
        assert not strict.corpus.replies
        assert strict.report.rejects[0].reason == "unresolved replier/target"
        prov = strict.corpus.provenance[0]
        assert prov.loaded_rows + prov.rejected_rows == prov.total_rows

    def test_campaign_type_schema(self, tmp_path):
        path = write_csv(
            tmp_path / "poster_tweetid_campaign_type.csv",
            SCHEMAS["poster_tweetid_campaign_type"],
            [["t1", "serbia", "u1", 1, "r1", "target"],
             ["t2", "serbia", "u2", 0, "r2", "control"]],
        )
        corpus = load_corpus([path]).corpus
        assert corpus.posts["t1"].label == "targeted"
        assert corpus.posts["t2"].label == "control"
        assert corpus.replies[0].replier_label == "io"
        assert corpus.replies[0].created_at is None

    def test_replier_info_schema(self, tmp_path):
        path = write_csv(tmp_path / "RQ3_replier_info.csv", SCHEMAS["RQ3_replier_info"],
                         [["u1", 4406, 0, 292, 114, 2.08], ["u2", 699, 1, 380, 282, 0.37]])
        corpus = load_corpus([path]).corpus
        assert corpus.accounts["u2"].is_io and corpus.accounts["u2"].age_years == 0.37
        assert corpus.accounts["u1"].activity_count == 4406


class TestSummary:
    def test_empty_corpus(self, tmp_path):
        path = write_csv(tmp_path / "replies_full.csv", SCHEMAS["replies_full"], [])
        summary = corpus_summary(load_corpus([path]).corpus)
        assert all(v == 0 for v in summary.values())

    def test_synthetic_counts_match_config(self, small_synth):
        corpus, truth, config = small_synth
        summary = corpus_summary(corpus)
        assert summary["io_accounts"] == config.n_io_repliers
        assert summary["posts"] == config.n_targets * config.posts_per_target
        assert summary["distinct_targets"] == config.n_targets
        n_targeted = sum(1 for v in truth.post_labels.values() if v == "targeted")
        assert summary["targeted_posts"] == n_targeted


class TestRoundTrip:
    def test_write_then_load_preserves_entities(self, small_synth, tmp_path):
        corpus, truth, _ = small_synth
        write_synthetic(corpus, truth, tmp_path)
        reloaded = load_corpus([
            tmp_path / "posts_full.csv",
            tmp_path / "replies_full.csv",
            tmp_path / "accounts_full.csv",
        ]).corpus
        assert set(reloaded.posts) == set(corpus.posts)
        assert set(reloaded.accounts) == set(corpus.accounts)
        assert len(reloaded.replies) == len(corpus.replies)
        orig = {r.reply_tweet_id: r for r in corpus.replies}
        for r in reloaded.replies:
            o = orig[r.reply_tweet_id]
            assert r.created_at == o.created_at
            assert r.like_count == o.like_count
            assert r.replier_label == o.replier_label
            assert r.text == o.text

    def test_writers_deterministic(self, small_synth, tmp_path):
        corpus, _, _ = small_synth
        for writer, name in ((write_replies_full, "r"), (write_posts_full, "p"),
                             (write_accounts_full, "a")):
            writer(corpus, tmp_path / f"{name}1.csv")
            writer(corpus, tmp_path / f"{name}2.csv")
            assert (tmp_path / f"{name}1.csv").read_bytes() == (tmp_path / f"{name}2.csv").read_bytes()
