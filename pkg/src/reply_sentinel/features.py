"""Feature assembly for the two classifiers.

Post vectors carry 3 engagement features of the post itself plus the full
12-statistic block of 8 reply attributes (99 features). Replier vectors carry
4 profile features plus the 9-statistic block of the same 8 attributes over
the replier's own replies to targeted posts (76 features).

Feature names are a fixed repo contract (``<scope>.<attribute>.<statistic>``)
and never change order between runs; interchange with externally produced
feature files is by header name, not position.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import Account, Corpus, Post, ReplyRecord
from .stats import (
    SUMMARY9_FIELDS,
    SUMMARY12_FIELDS,
    AttributeSample,
    summarize9,
    summarize12,
)

REPLY_ATTRIBUTES = (
    "like_count", "retweet_count", "reply_count",
    "mention_count", "hashtag_count", "url_count",
    "reply_time_diff", "cosine",
)

TWEET_LEVEL_FEATURES = ("tweet.reply_count", "tweet.retweet_count", "tweet.like_count")
PROFILE_FEATURES = (
    "profile.age", "profile.follower_rate", "profile.following_rate", "profile.activity_rate",
)

TWEET_FEATURE_NAMES: tuple[str, ...] = TWEET_LEVEL_FEATURES + tuple(
    f"reply.{attr}.{stat}" for attr in REPLY_ATTRIBUTES for stat in SUMMARY12_FIELDS
)
REPLIER_FEATURE_NAMES: tuple[str, ...] = PROFILE_FEATURES + tuple(
    f"reply.{attr}.{stat}" for attr in REPLY_ATTRIBUTES for stat in SUMMARY9_FIELDS
)

assert len(TWEET_FEATURE_NAMES) == 99
assert len(REPLIER_FEATURE_NAMES) == 76

# grouped columns for permutation importance: one group per reply attribute,
# singleton groups for post-level / profile features
TWEET_FEATURE_GROUPS: dict[str, tuple[str, ...]] = {
    **{name: (name,) for name in TWEET_LEVEL_FEATURES},
    **{
        attr: tuple(f"reply.{attr}.{s}" for s in SUMMARY12_FIELDS)
        for attr in REPLY_ATTRIBUTES
    },
}
REPLIER_FEATURE_GROUPS: dict[str, tuple[str, ...]] = {
    **{name: (name,) for name in PROFILE_FEATURES},
    **{
        attr: tuple(f"reply.{attr}.{s}" for s in SUMMARY9_FIELDS)
        for attr in REPLY_ATTRIBUTES
    },
}

MIN_AGE_YEARS = 1.0 / 365.25  # one-day clamp against divide-by-zero rates
DAYS_PER_YEAR = 365.25


class FeatureError(Exception):
    pass


@dataclass
class FeatureVector:
    entity_id: str
    names: tuple[str, ...]
    values: np.ndarray
    label: int
    imputed: bool = False


@dataclass
class FeatureMatrix:
    ids: tuple[str, ...]
    names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    campaigns: Optional[tuple[str, ...]] = None
    imputed_ids: tuple[str, ...] = ()
    excluded: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if self.X.shape != (len(self.ids), len(self.names)):
            raise FeatureError(
                f"matrix shape {self.X.shape} does not match "
                f"{len(self.ids)} ids x {len(self.names)} names"
            )


def _attribute_value(reply: ReplyRecord, attr: str) -> Optional[float]:
    v = getattr(reply, attr)
    return None if v is None else float(v)


def _delay_minutes(reply: ReplyRecord, post: Post) -> float:
    if reply.created_at is None or post.created_at is None:
        raise FeatureError(
            f"reply {reply.reply_tweet_id} lacks timestamps for delay computation"
        )
    diff = (reply.created_at - post.created_at).total_seconds() / 60.0
    return max(0.0, diff)  # skew-flagged replies clamp to zero delay


def _attribute_samples(
    replies: Sequence[ReplyRecord],
    post_by_id: Mapping[str, Post],
) -> dict[str, AttributeSample]:
    out: dict[str, AttributeSample] = {}
    for attr in REPLY_ATTRIBUTES[:6]:
        vals = []
        for r in replies:
            v = _attribute_value(r, attr)
            if v is None:
                raise FeatureError(f"reply {r.reply_tweet_id} missing {attr}")
            vals.append(v)
        out[attr] = AttributeSample(attr, np.asarray(vals))
    delays = [_delay_minutes(r, post_by_id[r.target_tweet_id]) for r in replies]
    out["reply_time_diff"] = AttributeSample("reply_time_diff", np.asarray(delays))
    return out


def tweet_features(
    post: Post,
    replies: Sequence[ReplyRecord],
    cosine_sample: AttributeSample,
    label: int,
    min_total_replies: int = 5,
) -> FeatureVector:
    """99-feature vector for one post from its replies and cosine sample."""
    if len(replies) < min_total_replies:
        raise FeatureError(
            f"below reply floor: post {post.tweet_id} has {len(replies)} replies"
        )
    if len(cosine_sample) == 0:
        raise FeatureError(f"empty cosine sample for post {post.tweet_id}")
    reply_count = post.reply_count if post.reply_count is not None else len(replies)
    values = [
        float(reply_count),
        float(post.retweet_count or 0),
        float(post.like_count or 0),
    ]
    samples = _attribute_samples(replies, {post.tweet_id: post})
    samples["cosine"] = cosine_sample
    for attr in REPLY_ATTRIBUTES:
        values.extend(summarize12(samples[attr]).as_tuple())
    return FeatureVector(post.tweet_id, TWEET_FEATURE_NAMES, np.asarray(values), label)


def replier_age_years(account: Account, last_reply_at) -> float:
    """Account age at its last reply, in years, clamped to one day. Falls back
    to the release's precomputed ``age`` column when the creation timestamp is
    absent."""
    if account.created_at is not None and last_reply_at is not None:
        age = (last_reply_at - account.created_at).total_seconds() / 86400.0 / DAYS_PER_YEAR
    elif account.age_years is not None:
        age = account.age_years
    else:
        raise FeatureError(f"age unavailable for account {account.user_id}")
    return max(age, MIN_AGE_YEARS)


def replier_features(
    account: Account,
    replies: Sequence[ReplyRecord],
    posts: Mapping[str, Post],
    cosine_sample: Optional[AttributeSample],
    label: int,
) -> FeatureVector:
    """76-feature vector for one replier from profile metadata and their
    replies to targeted posts. An empty cosine sample (a replier who was
    always alone) imputes the 9 similarity features as zeros and flags the
    vector."""
    if not replies:
        raise FeatureError(f"no replies for account {account.user_id}")
    for name in ("followers_count", "following_count", "activity_count"):
        if getattr(account, name) is None:
            raise FeatureError(f"account {account.user_id} missing {name}")
    timestamps = [r.created_at for r in replies if r.created_at is not None]
    last_reply_at = max(timestamps) if timestamps else None
    age = replier_age_years(account, last_reply_at)
    values = [
        age,
        account.followers_count / age,
        account.following_count / age,
        account.activity_count / age,
    ]
    samples = _attribute_samples(replies, posts)
    imputed = cosine_sample is None or len(cosine_sample) == 0
    for attr in REPLY_ATTRIBUTES:
        if attr == "cosine":
            if imputed:
                values.extend([0.0] * len(SUMMARY9_FIELDS))
            else:
                values.extend(summarize9(cosine_sample).as_tuple())
        else:
            values.extend(summarize9(samples[attr]).as_tuple())
    return FeatureVector(
        account.user_id, REPLIER_FEATURE_NAMES, np.asarray(values), label, imputed=imputed
    )


# --- corpus-level builders ------------------------------------------------------

def build_tweet_matrix(
    corpus: Corpus,
    positives: set[str],
    negatives: set[str],
    tweet_cosine_samples: Mapping[str, AttributeSample],
    min_total_replies: int = 5,
) -> FeatureMatrix:
    by_post = corpus.replies_by_post()
    ids = sorted(positives | negatives)
    rows = []
    labels = []
    campaigns = []
    excluded: list[tuple[str, str]] = []
    kept_ids = []
    for tid in ids:
        post = corpus.posts.get(tid)
        sample = tweet_cosine_samples.get(tid)
        if post is None:
            excluded.append((tid, "unknown post"))
            continue
        if sample is None or len(sample) == 0:
            excluded.append((tid, "no cosine pairs"))
            continue
        vec = tweet_features(
            post, by_post.get(tid, []), sample,
            label=1 if tid in positives else 0,
            min_total_replies=min_total_replies,
        )
        rows.append(vec.values)
        labels.append(vec.label)
        campaigns.append(post.campaign or "")
        kept_ids.append(tid)
    if not rows:
        raise FeatureError("no feature rows produced")
    return FeatureMatrix(
        ids=tuple(kept_ids),
        names=TWEET_FEATURE_NAMES,
        X=np.vstack(rows),
        y=np.asarray(labels, dtype=int),
        campaigns=tuple(campaigns),
        excluded=tuple(excluded),
    )


def build_replier_matrix(
    corpus: Corpus,
    targeted: set[str],
    replier_cosine_samples: Mapping[str, AttributeSample],
) -> FeatureMatrix:
    """One row per account with at least one reply to a targeted post."""
    by_replier: dict[str, list[ReplyRecord]] = {}
    for r in corpus.replies:
        if r.target_tweet_id in targeted:
            by_replier.setdefault(r.replier_id, []).append(r)
    rows = []
    labels = []
    campaigns = []
    kept_ids = []
    imputed_ids = []
    excluded: list[tuple[str, str]] = []
    for uid in sorted(by_replier):
        account = corpus.accounts.get(uid)
        if account is None:
            excluded.append((uid, "unknown account"))
            continue
        replies = sorted(by_replier[uid], key=lambda r: r.reply_tweet_id)
        label = 1 if any(r.replier_label == "io" for r in replies) else 0
        try:
            vec = replier_features(
                account, replies, corpus.posts,
                replier_cosine_samples.get(uid), label,
            )
        except FeatureError as exc:
            excluded.append((uid, str(exc)))
            continue
        rows.append(vec.values)
        labels.append(label)
        campaigns.append(account.campaign or "")
        kept_ids.append(uid)
        if vec.imputed:
            imputed_ids.append(uid)
    if not rows:
        raise FeatureError("no feature rows produced")
    return FeatureMatrix(
        ids=tuple(kept_ids),
        names=REPLIER_FEATURE_NAMES,
        X=np.vstack(rows),
        y=np.asarray(labels, dtype=int),
        campaigns=tuple(campaigns),
        imputed_ids=tuple(imputed_ids),
        excluded=tuple(excluded),
    )


# --- CSV interchange --------------------------------------------------------------

_LABEL_ALIASES = ("label", "tweet_label", "replier_label")
_ID_ALIASES = ("entity_id", "tweetid", "tweet_id", "replier_userid", "userid")


def save_feature_csv(matrix: FeatureMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["entity_id"]
        if matrix.campaigns is not None:
            header.append("campaign")
        header.extend(matrix.names)
        header.append("label")
        w.writerow(header)
        for i, eid in enumerate(matrix.ids):
            row = [eid]
            if matrix.campaigns is not None:
                row.append(matrix.campaigns[i])
            row.extend(repr(float(v)) for v in matrix.X[i])
            row.append(int(matrix.y[i]))
            w.writerow(row)


def load_feature_csv(
    path,
    expected_names: Optional[Sequence[str]] = None,
    schema_map: Optional[Mapping[str, str]] = None,
) -> FeatureMatrix:
    """Load a feature matrix by header-name matching. ``schema_map`` renames
    incoming columns first, so externally produced files can be adapted
    without rewriting them."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FeatureError(f"empty feature file: {path}")
        if schema_map:
            header = [schema_map.get(col, col) for col in header]
        cols = {name: i for i, name in enumerate(header)}
        label_col = next((cols[a] for a in _LABEL_ALIASES if a in cols), None)
        if label_col is None:
            raise FeatureError(f"no label column among {_LABEL_ALIASES} in {path}")
        id_col = next((cols[a] for a in _ID_ALIASES if a in cols), None)
        campaign_col = cols.get("campaign")
        if expected_names is None:
            reserved = set(_LABEL_ALIASES) | set(_ID_ALIASES) | {"campaign"}
            names = tuple(h for h in header if h not in reserved)
        else:
            missing = [n for n in expected_names if n not in cols]
            if missing:
                raise FeatureError(
                    f"feature file {path} is missing {len(missing)} expected "
                    f"columns, e.g. {missing[:3]}"
                )
            names = tuple(expected_names)
        name_idx = [cols[n] for n in names]
        ids = []
        campaigns = []
        rows = []
        labels = []
        for i, raw in enumerate(reader):
            if len(raw) != len(header):
                raise FeatureError(
                    f"row {i + 2} of {path} has {len(raw)} cells, header has {len(header)}"
                )
            ids.append(raw[id_col] if id_col is not None else str(i))
            if campaign_col is not None:
                campaigns.append(raw[campaign_col])
            rows.append([float(raw[j]) for j in name_idx])
            labels.append(int(float(raw[label_col])))
    if not rows:
        raise FeatureError(f"no rows in feature file: {path}")
    return FeatureMatrix(
        ids=tuple(ids),
        names=names,
        X=np.asarray(rows),
        y=np.asarray(labels, dtype=int),
        campaigns=tuple(campaigns) if campaign_col is not None else None,
    )


def detect_feature_kind(names: Iterable[str]) -> str:
    names = set(names)
    if set(TWEET_FEATURE_NAMES) <= names:
        return "tweet"
    if set(REPLIER_FEATURE_NAMES) <= names:
        return "replier"
    return "unknown"
