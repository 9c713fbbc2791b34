"""Builds the balanced targeted/control classification dataset and the
exploratory distribution tables from a loaded corpus.

Control selection follows the collection protocol: for each author of
targeted posts, controls are that author's posts created strictly after the
author's last coordinated reply, with at least the reply floor, taken in
chronological order until the author's targeted count is matched; when
controls run short, the most recent targeted posts are kept so both sides
stay balanced. Timestamp ties break on tweet id so the result is fully
deterministic.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .corpus import TWITTER_EPOCH, Corpus
from .stats import AttributeSample, EmptySampleError, quantile

_TOKEN_RE = re.compile(r"[a-z0-9']+")


class DatasetError(Exception):
    pass


@dataclass
class ClassificationDataset:
    positives: set[str]
    negatives: set[str]
    per_target_pairing: dict[str, tuple[tuple[str, ...], tuple[str, ...]]]
    campaigns: dict[str, str]
    dropped_authors: list[tuple[str, str]] = field(default_factory=list)

    def all_ids(self) -> list[str]:
        return sorted(self.positives | self.negatives)


def select_targeted(corpus: Corpus, min_io_replies: int = 5) -> set[str]:
    """Posts receiving at least ``min_io_replies`` direct coordinated replies."""
    counts: dict[str, int] = {}
    for r in corpus.replies:
        if r.replier_label == "io":
            counts[r.target_tweet_id] = counts.get(r.target_tweet_id, 0) + 1
    return {tid for tid, n in counts.items() if n >= min_io_replies}


def select_controls(
    corpus: Corpus,
    targeted: set[str],
    min_total_replies: int = 5,
) -> ClassificationDataset:
    if not targeted:
        raise DatasetError("empty targeted set")
    reply_counts: dict[str, int] = {}
    for r in corpus.replies:
        reply_counts[r.target_tweet_id] = reply_counts.get(r.target_tweet_id, 0) + 1

    by_author: dict[str, list[str]] = {}
    dropped: list[tuple[str, str]] = []
    for tid in sorted(targeted):
        post = corpus.posts.get(tid)
        if post is None or post.author_id is None:
            dropped.append((tid, "targeted post without author"))
            continue
        by_author.setdefault(post.author_id, []).append(tid)

    author_posts: dict[str, list] = {}
    for post in corpus.posts.values():
        if post.author_id is not None:
            author_posts.setdefault(post.author_id, []).append(post)

    # last coordinated reply received by each author, across all their posts
    last_io_by_author: dict[str, object] = {}
    for r in corpus.replies:
        if r.replier_label != "io" or r.created_at is None:
            continue
        post = corpus.posts.get(r.target_tweet_id)
        if post is None or post.author_id is None:
            continue
        prev = last_io_by_author.get(post.author_id)
        if prev is None or r.created_at > prev:
            last_io_by_author[post.author_id] = r.created_at

    positives: set[str] = set()
    negatives: set[str] = set()
    pairing: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {}
    campaigns: dict[str, str] = {}

    def sort_key(p):
        return (p.created_at, p.tweet_id)

    for author in sorted(by_author):
        tids = by_author[author]
        last_io = last_io_by_author.get(author)
        if last_io is None:
            dropped.append((author, "no timestamped coordinated reply"))
            continue
        kept_targeted = [
            t for t in tids
            if reply_counts.get(t, 0) >= min_total_replies
        ]
        if not kept_targeted:
            dropped.append((author, "targeted posts below reply floor"))
            continue
        candidates = sorted(
            (
                p for p in author_posts.get(author, [])
                if p.tweet_id not in targeted
                and p.created_at is not None
                and p.created_at > last_io
                and reply_counts.get(p.tweet_id, 0) >= min_total_replies
            ),
            key=sort_key,
        )
        if not candidates:
            dropped.append((author, "no qualifying control post"))
            continue
        n = min(len(kept_targeted), len(candidates))
        controls = [p.tweet_id for p in candidates[:n]]
        if n < len(kept_targeted):
            # keep the most recent targeted posts so the author stays balanced
            ordered = sorted(
                kept_targeted,
                key=lambda t: (corpus.posts[t].created_at or TWITTER_EPOCH, t),
                reverse=True,
            )
            kept_targeted = sorted(ordered[:n])
        positives.update(kept_targeted)
        negatives.update(controls)
        pairing[author] = (tuple(sorted(kept_targeted)), tuple(sorted(controls)))
        for t in list(kept_targeted) + controls:
            campaigns[t] = corpus.posts[t].campaign or ""
    return ClassificationDataset(positives, negatives, pairing, campaigns, dropped)


def build_dataset(
    corpus: Corpus,
    min_io_replies: int = 5,
    min_total_replies: int = 5,
) -> ClassificationDataset:
    return select_controls(
        corpus, select_targeted(corpus, min_io_replies), min_total_replies
    )


def ccdf(sample) -> list[tuple[float, float]]:
    """(value, fraction of observations >= value) at each distinct value."""
    if isinstance(sample, AttributeSample):
        x = sample.values
    else:
        x = np.asarray(sample, dtype=float).reshape(-1)
    if x.size == 0:
        raise EmptySampleError("empty sample")
    x = np.sort(x)
    n = x.size
    values, first_index = np.unique(x, return_index=True)
    return [(float(v), float((n - i) / n)) for v, i in zip(values, first_index)]


# --- exploratory report ---------------------------------------------------------

@dataclass
class Rq1Report:
    medians: dict[str, float]
    ccdfs: dict[str, list[tuple[float, float]]]
    tables: dict[str, list[tuple]]
    term_freq_targeted: list[tuple[str, int]]
    term_freq_other: list[tuple[str, int]]


def _median(values) -> Optional[float]:
    vals = [float(v) for v in values]
    if not vals:
        return None
    return quantile(vals, 0.5)


def _term_freq(texts: Iterable[str], stopwords: set[str]) -> list[tuple[str, int]]:
    counts: dict[str, int] = {}
    for text in texts:
        for tok in _TOKEN_RE.findall(text.lower()):
            if tok in stopwords or len(tok) < 2:
                continue
            counts[tok] = counts.get(tok, 0) + 1
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def rq1_report(
    corpus: Corpus,
    min_io_replies: int = 5,
    stopwords: Optional[Iterable[str]] = None,
) -> Rq1Report:
    """Distribution tables: target follower/following counts, targeted posts
    per target, coordinated replies per targeted post, reply delay, and raw
    term-frequency tables for targeted vs other post texts."""
    stop = {w.strip().lower() for w in stopwords} if stopwords else set()
    targeted = select_targeted(corpus, min_io_replies)

    io_per_post: dict[str, int] = {}
    delays: list[tuple[str, float]] = []
    for r in corpus.replies:
        if r.replier_label != "io":
            continue
        io_per_post[r.target_tweet_id] = io_per_post.get(r.target_tweet_id, 0) + 1
        post = corpus.posts.get(r.target_tweet_id)
        if (
            r.target_tweet_id in targeted
            and post is not None
            and post.created_at is not None
            and r.created_at is not None
        ):
            diff = (r.created_at - post.created_at).total_seconds() / 60.0
            delays.append((r.reply_tweet_id, max(0.0, diff)))

    tables: dict[str, list[tuple]] = {}
    if targeted:
        tables["RQ1_number_of_reply_per_tweet"] = sorted(
            (tid, io_per_post[tid]) for tid in targeted if tid in io_per_post
        )
    elif "io_replies_per_tweet" in corpus.aux:
        tables["RQ1_number_of_reply_per_tweet"] = sorted(corpus.aux["io_replies_per_tweet"])

    target_authors: dict[str, int] = {}
    for tid in targeted:
        post = corpus.posts.get(tid)
        if post is not None and post.author_id is not None:
            target_authors[post.author_id] = target_authors.get(post.author_id, 0) + 1

    follower_rows: list[tuple] = []
    if target_authors:
        for uid in sorted(target_authors):
            acct = corpus.accounts.get(uid)
            if acct and acct.followers_count is not None and acct.following_count is not None:
                follower_rows.append((uid, acct.followers_count, acct.following_count))
    elif "target_follower_following" in corpus.aux:
        follower_rows = sorted(corpus.aux["target_follower_following"])
    tables["RQ1_target_follower_following_count"] = follower_rows

    if delays:
        tables["RQ1_time_difference_of_reply"] = sorted(delays)
    elif "reply_delay_minutes" in corpus.aux:
        tables["RQ1_time_difference_of_reply"] = sorted(corpus.aux["reply_delay_minutes"])

    pair_counts: dict[tuple[str, str], int] = {}
    for r in corpus.replies:
        if r.replier_label == "io" and r.target_tweet_id in targeted:
            post = corpus.posts.get(r.target_tweet_id)
            if post is not None and post.author_id is not None:
                key = (post.author_id, r.replier_id)
                pair_counts[key] = pair_counts.get(key, 0) + 1
    if pair_counts:
        tables["RQ1_num_targeted_tweet_by_IO"] = sorted(
            (poster, replier, n) for (poster, replier), n in pair_counts.items()
        )
    elif "targeted_tweets_per_pair" in corpus.aux:
        tables["RQ1_num_targeted_tweet_by_IO"] = sorted(corpus.aux["targeted_tweets_per_pair"])

    samples = {
        "followers": [row[1] for row in tables.get("RQ1_target_follower_following_count", [])],
        "following": [row[2] for row in tables.get("RQ1_target_follower_following_count", [])],
        "targeted_per_target": sorted(target_authors.values()),
        "io_replies_per_targeted": [
            row[1] for row in tables.get("RQ1_number_of_reply_per_tweet", [])
        ],
        "reply_delay_minutes": [
            row[1] for row in tables.get("RQ1_time_difference_of_reply", [])
        ],
    }
    medians = {name: _median(vals) for name, vals in samples.items() if vals}
    ccdfs = {name: ccdf(vals) for name, vals in samples.items() if vals}

    targeted_texts = [
        p.text for p in corpus.posts.values() if p.text and p.tweet_id in targeted
    ]
    if not targeted_texts:
        targeted_texts = [
            p.text for p in corpus.posts.values() if p.text and p.label == "targeted"
        ]
        other_texts = [
            p.text for p in corpus.posts.values() if p.text and p.label != "targeted"
        ]
    else:
        other_texts = [
            p.text for p in corpus.posts.values() if p.text and p.tweet_id not in targeted
        ]
    return Rq1Report(
        medians=medians,
        ccdfs=ccdfs,
        tables=tables,
        term_freq_targeted=_term_freq(targeted_texts, stop),
        term_freq_other=_term_freq(other_texts, stop),
    )


# --- emission --------------------------------------------------------------------

def write_classification_dataset(dataset: ClassificationDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tweetid", "type", "campaign"])
        for tid in sorted(dataset.positives):
            w.writerow([tid, "target", dataset.campaigns.get(tid, "")])
        for tid in sorted(dataset.negatives):
            w.writerow([tid, "control", dataset.campaigns.get(tid, "")])


def read_classification_dataset(path) -> ClassificationDataset:
    positives: set[str] = set()
    negatives: set[str] = set()
    campaigns: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["tweetid", "type", "campaign"]:
            raise DatasetError(f"bad classification dataset header in {path}")
        for row in reader:
            (positives if row["type"] == "target" else negatives).add(row["tweetid"])
            campaigns[row["tweetid"]] = row["campaign"]
    return ClassificationDataset(positives, negatives, {}, campaigns)


def write_rq1_report(report: Rq1Report, outdir) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "medians.json", "w", encoding="utf-8") as fh:
        json.dump(report.medians, fh, indent=2, sort_keys=True)
        fh.write("\n")
    table_headers = {
        "RQ1_target_follower_following_count": ("userid", "followers_count", "following_count"),
        "RQ1_number_of_reply_per_tweet": ("poster_tweetid", "reply_count"),
        "RQ1_num_targeted_tweet_by_IO": ("poster_userid", "replier_userid", "count"),
        "RQ1_time_difference_of_reply": ("replier_tweetid", "diff_min"),
    }
    for name, rows in report.tables.items():
        with open(outdir / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(table_headers[name])
            w.writerows(rows)
    for name, points in report.ccdfs.items():
        with open(outdir / f"ccdf_{name}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["value", "fraction_ge"])
            for v, frac in points:
                w.writerow([repr(v), repr(frac)])
    for name, rows in (
        ("term_freq_targeted", report.term_freq_targeted),
        ("term_freq_other", report.term_freq_other),
    ):
        with open(outdir / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["term", "count"])
            w.writerows(rows)
