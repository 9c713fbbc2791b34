"""Domain data model and CSV ingestion.

The loader accepts the published reply-coordination release files verbatim
(header names are the contract) plus three repo-defined schemas that carry
the complete records the public release derives from:

* ``replies_full.csv``  -- one row per direct reply with timestamps and counts,
* ``posts_full.csv``    -- one row per post with author, timestamp, engagement,
* ``accounts_full.csv`` -- one row per account with creation timestamp.

Loading is deterministic: files are processed in sorted path order, duplicate
keys keep the first occurrence, and every dropped row lands in the validation
report with a reason. The resulting :class:`Corpus` is treated as immutable.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

logger = logging.getLogger(__name__)

TWITTER_EPOCH = datetime(2006, 3, 21, tzinfo=timezone.utc)
_TWITTER_TS_FORMAT = "%a %b %d %H:%M:%S %z %Y"

POST_LABELS = ("targeted", "control", "unlabeled")
REPLIER_LABELS = ("io", "normal")


class CorpusError(Exception):
    """Fatal ingestion problem: missing file or unrecognized header."""


def parse_timestamp(raw: str) -> Optional[datetime]:
    """Parse a timestamp as UTC. Accepts the classic Twitter format and
    ISO-8601; naive inputs are assumed UTC. Blank input parses to None."""
    s = raw.strip()
    if not s:
        return None
    try:
        return datetime.strptime(s, _TWITTER_TS_FORMAT).astimezone(timezone.utc)
    except ValueError:
        pass
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: Optional[datetime]) -> str:
    """Canonical serialization; round-trips bit-exactly through parse_timestamp."""
    if dt is None:
        return ""
    return dt.astimezone(timezone.utc).isoformat()


def _opt(dt_or_none: Optional[datetime]) -> str:
    return format_timestamp(dt_or_none)


@dataclass
class Account:
    user_id: str
    created_at: Optional[datetime] = None
    followers_count: Optional[int] = None
    following_count: Optional[int] = None
    activity_count: Optional[int] = None
    is_io: bool = False
    campaign: Optional[str] = None
    age_years: Optional[float] = None


@dataclass
class Post:
    tweet_id: str
    author_id: Optional[str] = None
    created_at: Optional[datetime] = None
    retweet_count: Optional[int] = None
    like_count: Optional[int] = None
    quote_count: Optional[int] = None
    reply_count: Optional[int] = None
    campaign: Optional[str] = None
    label: str = "unlabeled"
    text: Optional[str] = None


@dataclass
class ReplyRecord:
    reply_tweet_id: str
    replier_id: str
    target_tweet_id: str
    created_at: Optional[datetime] = None
    like_count: Optional[int] = None
    retweet_count: Optional[int] = None
    reply_count: Optional[int] = None
    mention_count: Optional[int] = None
    hashtag_count: Optional[int] = None
    url_count: Optional[int] = None
    text: Optional[str] = None
    replier_label: str = "normal"
    skew_flagged: bool = False


@dataclass(frozen=True)
class FileProvenance:
    path: str
    schema: str
    total_rows: int
    loaded_rows: int
    rejected_rows: int


@dataclass(frozen=True)
class RejectedRow:
    path: str
    line: int
    reason: str
    row: str


@dataclass
class ValidationReport:
    rejects: list[RejectedRow] = field(default_factory=list)
    stub_accounts: int = 0
    stub_posts: int = 0

    def reasons(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.rejects:
            out[r.reason] = out.get(r.reason, 0) + 1
        return dict(sorted(out.items()))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path", "line", "reason", "row"])
            for r in self.rejects:
                w.writerow([r.path, r.line, r.reason, r.row])


@dataclass
class Corpus:
    accounts: dict[str, Account] = field(default_factory=dict)
    posts: dict[str, Post] = field(default_factory=dict)
    replies: list[ReplyRecord] = field(default_factory=list)
    provenance: list[FileProvenance] = field(default_factory=list)
    # standalone aggregate tables loaded from the RQ1 release files
    aux: dict[str, list] = field(default_factory=dict)
    # ground truth attached by the synthetic generator only
    truth: Optional[object] = None

    def replies_by_post(self) -> dict[str, list[ReplyRecord]]:
        out: dict[str, list[ReplyRecord]] = {}
        for r in self.replies:
            out.setdefault(r.target_tweet_id, []).append(r)
        for rs in out.values():
            rs.sort(key=lambda r: r.reply_tweet_id)
        return out

    def replies_by_replier(self) -> dict[str, list[ReplyRecord]]:
        out: dict[str, list[ReplyRecord]] = {}
        for r in self.replies:
            out.setdefault(r.replier_id, []).append(r)
        for rs in out.values():
            rs.sort(key=lambda r: r.reply_tweet_id)
        return out


@dataclass
class LoadResult:
    corpus: Corpus
    report: ValidationReport


# --- schemas (header names are the contract) --------------------------------

SCHEMAS: dict[str, tuple[str, ...]] = {
    "poster_tweetid_campaign_type": (
        "poster_tweetid", "campaign", "replier_userid", "replier_label",
        "replier_tweetid", "type",
    ),
    "RQ3_replier_info": (
        "replier_userid", "activity_count", "replier_label",
        "following_count", "followers_count", "age",
    ),
    "RQ1_target_follower_following_count": ("userid", "followers_count", "following_count"),
    "RQ1_number_of_reply_per_tweet": ("poster_tweetid", "reply_count"),
    "RQ1_num_targeted_tweet_by_IO": ("poster_userid", "replier_userid", "count"),
    "RQ1_time_difference_of_reply": ("replier_tweetid", "diff_min"),
    "RQ2_engagement": ("tweetid", "retweet_count", "like_count", "quote_count", "type"),
    "RQ1_target_non_target_tweets": ("tweetid", "english_text", "type", "campaign"),
    "replies_full": (
        "reply_tweetid", "replier_userid", "poster_tweetid", "created_at",
        "like_count", "retweet_count", "reply_count", "mention_count",
        "hashtag_count", "url_count", "replier_label", "text",
    ),
    "posts_full": (
        "tweetid", "author_userid", "created_at", "retweet_count", "like_count",
        "quote_count", "reply_count", "campaign", "label", "text",
    ),
    "accounts_full": (
        "userid", "created_at", "followers_count", "following_count",
        "activity_count", "is_io", "campaign",
    ),
}

_POST_LABEL_ALIASES = {
    "target": "targeted", "targeted": "targeted",
    "control": "control",
    "non_target": "unlabeled", "unlabeled": "unlabeled", "": "unlabeled",
}


def detect_schema(header: Sequence[str]) -> str:
    cols = frozenset(header)
    for name, schema_cols in SCHEMAS.items():
        if cols == frozenset(schema_cols):
            return name
    raise CorpusError(f"unknown header: {sorted(header)}")


class _RowError(ValueError):
    pass


def _count(row: Mapping[str, str], col: str) -> int:
    raw = row[col].strip()
    try:
        v = int(raw)
    except ValueError:
        raise _RowError(f"unparsable {col}: {raw!r}")
    if v < 0:
        raise _RowError(f"negative {col}: {v}")
    return v


def _opt_count(row: Mapping[str, str], col: str) -> Optional[int]:
    if row[col].strip() == "":
        return None
    return _count(row, col)


def _ts(row: Mapping[str, str], col: str) -> Optional[datetime]:
    try:
        return parse_timestamp(row[col])
    except ValueError:
        raise _RowError(f"unparsable {col}: {row[col]!r}")


def _replier_label(row: Mapping[str, str], col: str = "replier_label") -> str:
    raw = row[col].strip().lower()
    if raw in ("1", "io"):
        return "io"
    if raw in ("0", "normal"):
        return "normal"
    raise _RowError(f"unknown replier_label: {raw!r}")


def _post_label(row: Mapping[str, str], col: str) -> str:
    raw = row[col].strip().lower()
    if raw not in _POST_LABEL_ALIASES:
        raise _RowError(f"unknown post type: {raw!r}")
    return _POST_LABEL_ALIASES[raw]


def _required(row: Mapping[str, str], col: str) -> str:
    v = row[col].strip()
    if not v:
        raise _RowError(f"missing {col}")
    return v


class _Builder:
    """Accumulates entities across files; first occurrence wins, later files
    fill in fields that are still absent."""

    def __init__(self) -> None:
        self.corpus = Corpus()
        self.report = ValidationReport()
        self.reply_source: dict[str, tuple[str, int]] = {}
        self.seen_account_rows: set[tuple[str, str]] = set()
        self.seen_post_rows: set[tuple[str, str]] = set()
        self.loaded_per_file: dict[str, int] = {}

    def account(self, user_id: str) -> Account:
        acct = self.corpus.accounts.get(user_id)
        if acct is None:
            acct = Account(user_id=user_id)
            self.corpus.accounts[user_id] = acct
        return acct

    def post(self, tweet_id: str) -> Post:
        post = self.corpus.posts.get(tweet_id)
        if post is None:
            post = Post(tweet_id=tweet_id)
            self.corpus.posts[tweet_id] = post
        return post

    @staticmethod
    def fill(obj, **fields) -> None:
        # fill-if-absent; never overwrite a value another file already set
        for name, value in fields.items():
            if value is not None and getattr(obj, name) is None:
                setattr(obj, name, value)


def _load_row(schema: str, row: dict[str, str], b: _Builder, path: str, line: int) -> None:
    # each branch parses and validates every field before mutating the
    # builder, so a rejected row leaves no partial state behind
    c = b.corpus
    if schema == "replies_full":
        reply_id = _required(row, "reply_tweetid")
        if reply_id in b.reply_source:
            raise _RowError("duplicate reply id")
        rec = ReplyRecord(
            reply_tweet_id=reply_id,
            replier_id=_required(row, "replier_userid"),
            target_tweet_id=_required(row, "poster_tweetid"),
            created_at=_ts(row, "created_at"),
            like_count=_count(row, "like_count"),
            retweet_count=_count(row, "retweet_count"),
            reply_count=_count(row, "reply_count"),
            mention_count=_count(row, "mention_count"),
            hashtag_count=_count(row, "hashtag_count"),
            url_count=_count(row, "url_count"),
            text=row["text"] if row["text"] != "" else None,
            replier_label=_replier_label(row),
        )
        c.replies.append(rec)
        b.reply_source[reply_id] = (path, line)
    elif schema == "posts_full":
        tweet_id = _required(row, "tweetid")
        key = ("posts_full", tweet_id)
        if key in b.seen_post_rows:
            raise _RowError("duplicate post id")
        fields = dict(
            author_id=row["author_userid"].strip() or None,
            created_at=_ts(row, "created_at"),
            retweet_count=_count(row, "retweet_count"),
            like_count=_count(row, "like_count"),
            quote_count=_count(row, "quote_count"),
            reply_count=_count(row, "reply_count"),
            campaign=row["campaign"].strip() or None,
            text=row["text"] if row["text"] != "" else None,
        )
        label = _post_label(row, "label")
        b.seen_post_rows.add(key)
        post = b.post(tweet_id)
        b.fill(post, **fields)
        if post.label == "unlabeled":
            post.label = label
    elif schema == "accounts_full":
        user_id = _required(row, "userid")
        key = ("accounts_full", user_id)
        if key in b.seen_account_rows:
            raise _RowError("duplicate account id")
        created = _ts(row, "created_at")
        if created is not None and created < TWITTER_EPOCH:
            raise _RowError("creation date before the platform epoch")
        is_io = row["is_io"].strip().lower()
        if is_io not in ("0", "1", "true", "false", ""):
            raise _RowError(f"unknown is_io: {is_io!r}")
        fields = dict(
            created_at=created,
            followers_count=_opt_count(row, "followers_count"),
            following_count=_opt_count(row, "following_count"),
            activity_count=_opt_count(row, "activity_count"),
            campaign=row["campaign"].strip() or None,
        )
        b.seen_account_rows.add(key)
        acct = b.account(user_id)
        b.fill(acct, **fields)
        if is_io in ("1", "true"):
            acct.is_io = True
    elif schema == "RQ3_replier_info":
        user_id = _required(row, "replier_userid")
        key = ("replier_info", user_id)
        if key in b.seen_account_rows:
            raise _RowError("duplicate account id")
        age_raw = row["age"].strip()
        try:
            age = float(age_raw) if age_raw else None
        except ValueError:
            raise _RowError(f"unparsable age: {age_raw!r}")
        if age is not None and age < 0:
            raise _RowError(f"negative age: {age}")
        label = _replier_label(row)
        fields = dict(
            activity_count=_count(row, "activity_count"),
            following_count=_count(row, "following_count"),
            followers_count=_count(row, "followers_count"),
            age_years=age,
        )
        b.seen_account_rows.add(key)
        acct = b.account(user_id)
        b.fill(acct, **fields)
        if label == "io":
            acct.is_io = True
    elif schema == "poster_tweetid_campaign_type":
        reply_id = _required(row, "replier_tweetid")
        if reply_id in b.reply_source:
            raise _RowError("duplicate reply id")
        target_id = _required(row, "poster_tweetid")
        label = _post_label(row, "type")
        rec = ReplyRecord(
            reply_tweet_id=reply_id,
            replier_id=_required(row, "replier_userid"),
            target_tweet_id=target_id,
            replier_label=_replier_label(row),
        )
        c.replies.append(rec)
        b.reply_source[reply_id] = (path, line)
        post = b.post(target_id)
        b.fill(post, campaign=row["campaign"].strip() or None)
        if post.label == "unlabeled":
            post.label = label
    elif schema == "RQ2_engagement":
        tweet_id = _required(row, "tweetid")
        key = ("engagement", tweet_id)
        if key in b.seen_post_rows:
            raise _RowError("duplicate post id")
        label = _post_label(row, "type")
        fields = dict(
            retweet_count=_count(row, "retweet_count"),
            like_count=_count(row, "like_count"),
            quote_count=_count(row, "quote_count"),
        )
        b.seen_post_rows.add(key)
        post = b.post(tweet_id)
        b.fill(post, **fields)
        if post.label == "unlabeled":
            post.label = label
    elif schema == "RQ1_target_follower_following_count":
        user_id = _required(row, "userid")
        key = ("follower_following", user_id)
        if key in b.seen_account_rows:
            raise _RowError("duplicate account id")
        followers = _count(row, "followers_count")
        following = _count(row, "following_count")
        b.seen_account_rows.add(key)
        acct = b.account(user_id)
        b.fill(acct, followers_count=followers, following_count=following)
        c.aux.setdefault("target_follower_following", []).append(
            (user_id, followers, following)
        )
    elif schema == "RQ1_number_of_reply_per_tweet":
        c.aux.setdefault("io_replies_per_tweet", []).append(
            (_required(row, "poster_tweetid"), _count(row, "reply_count"))
        )
    elif schema == "RQ1_num_targeted_tweet_by_IO":
        c.aux.setdefault("targeted_tweets_per_pair", []).append(
            (_required(row, "poster_userid"), _required(row, "replier_userid"), _count(row, "count"))
        )
    elif schema == "RQ1_time_difference_of_reply":
        raw = row["diff_min"].strip()
        try:
            diff = float(raw)
        except ValueError:
            raise _RowError(f"unparsable diff_min: {raw!r}")
        c.aux.setdefault("reply_delay_minutes", []).append(
            (_required(row, "replier_tweetid"), diff)
        )
    elif schema == "RQ1_target_non_target_tweets":
        tweet_id = _required(row, "tweetid")
        label = _post_label(row, "type")
        post = b.post(tweet_id)
        b.fill(post, text=row["english_text"] or None, campaign=row["campaign"].strip() or None)
        if post.label == "unlabeled":
            post.label = label
    else:  # pragma: no cover - schema table and dispatch kept in sync
        raise CorpusError(f"no loader for schema {schema}")


def load_corpus(
    paths: Iterable,
    schema_map: Optional[Mapping[str, str]] = None,
    strict_references: bool = False,
) -> LoadResult:
    """Load and validate release CSVs into a Corpus.

    ``schema_map`` renames incoming columns (theirs -> ours) before schema
    detection. With ``strict_references`` every reply whose replier or target
    is not defined by an account/post file is rejected; by default missing
    entities are stubbed in and counted in the report.
    """
    b = _Builder()
    sorted_paths = sorted(Path(p) for p in paths)
    for p in sorted_paths:
        if not p.exists():
            raise CorpusError(f"missing file: {p}")
        with open(p, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise CorpusError(f"empty file (no header): {p}")
            if schema_map:
                header = [schema_map.get(col, col) for col in header]
            schema = detect_schema(header)
            total = 0
            rejected = 0
            for line_no, raw in enumerate(reader, start=2):
                total += 1
                if len(raw) != len(header):
                    rejected += 1
                    b.report.rejects.append(
                        RejectedRow(str(p), line_no, "column count mismatch", ",".join(raw))
                    )
                    continue
                row = dict(zip(header, raw))
                try:
                    _load_row(schema, row, b, str(p), line_no)
                except _RowError as exc:
                    rejected += 1
                    b.report.rejects.append(RejectedRow(str(p), line_no, str(exc), ",".join(raw)))
            b.loaded_per_file[str(p)] = total - rejected
            b.corpus.provenance.append(
                FileProvenance(str(p), schema, total, total - rejected, rejected)
            )
    _resolve(b, strict_references)
    return LoadResult(b.corpus, b.report)


def _resolve(b: _Builder, strict: bool) -> None:
    c = b.corpus
    kept: list[ReplyRecord] = []
    dropped_per_file: dict[str, int] = {}
    for rec in c.replies:
        missing = []
        if rec.replier_id not in c.accounts:
            missing.append("replier")
        if rec.target_tweet_id not in c.posts:
            missing.append("target")
        if missing and strict:
            path, line = b.reply_source[rec.reply_tweet_id]
            b.report.rejects.append(
                RejectedRow(path, line, f"unresolved {'/'.join(missing)}", rec.reply_tweet_id)
            )
            dropped_per_file[path] = dropped_per_file.get(path, 0) + 1
            continue
        if "replier" in missing:
            acct = b.account(rec.replier_id)
            acct.is_io = acct.is_io or rec.replier_label == "io"
            b.report.stub_accounts += 1
        if "target" in missing:
            b.post(rec.target_tweet_id)
            b.report.stub_posts += 1
        post = c.posts[rec.target_tweet_id]
        if (
            rec.created_at is not None
            and post.created_at is not None
            and rec.created_at < post.created_at
        ):
            rec.skew_flagged = True
        kept.append(rec)
    c.replies = kept
    if dropped_per_file:
        c.provenance = [
            FileProvenance(
                fp.path, fp.schema, fp.total_rows,
                fp.loaded_rows - dropped_per_file.get(fp.path, 0),
                fp.rejected_rows + dropped_per_file.get(fp.path, 0),
            )
            for fp in c.provenance
        ]


# --- summary -----------------------------------------------------------------

def corpus_summary(corpus: Corpus, min_io_replies: int = 5) -> dict[str, int]:
    """Deterministic headline counts for a loaded corpus."""
    io_replies = [r for r in corpus.replies if r.replier_label == "io"]
    io_by_post: dict[str, int] = {}
    for r in io_replies:
        io_by_post[r.target_tweet_id] = io_by_post.get(r.target_tweet_id, 0) + 1
    target_authors = set()
    for tid in io_by_post:
        post = corpus.posts.get(tid)
        if post is not None and post.author_id is not None:
            target_authors.add(post.author_id)
    return {
        "accounts": len(corpus.accounts),
        "posts": len(corpus.posts),
        "replies": len(corpus.replies),
        "io_replies": len(io_replies),
        "io_accounts": sum(1 for a in corpus.accounts.values() if a.is_io),
        "io_repliers": len({r.replier_id for r in io_replies}),
        "normal_repliers": len(
            {r.replier_id for r in corpus.replies if r.replier_label == "normal"}
        ),
        "distinct_targets": len(target_authors),
        "targeted_posts": sum(1 for n in io_by_post.values() if n >= min_io_replies),
    }


# --- writers (canonical CSV emission, shared by synth and the CLI) -----------

def _write(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def write_replies_full(corpus: Corpus, path) -> None:
    rows = sorted(corpus.replies, key=lambda r: r.reply_tweet_id)
    _write(
        path,
        SCHEMAS["replies_full"],
        (
            (
                r.reply_tweet_id, r.replier_id, r.target_tweet_id, _opt(r.created_at),
                r.like_count, r.retweet_count, r.reply_count, r.mention_count,
                r.hashtag_count, r.url_count, 1 if r.replier_label == "io" else 0,
                r.text or "",
            )
            for r in rows
        ),
    )


def write_posts_full(corpus: Corpus, path) -> None:
    rows = sorted(corpus.posts.values(), key=lambda p: p.tweet_id)
    _write(
        path,
        SCHEMAS["posts_full"],
        (
            (
                p.tweet_id, p.author_id or "", _opt(p.created_at),
                p.retweet_count, p.like_count, p.quote_count, p.reply_count,
                p.campaign or "", p.label, p.text or "",
            )
            for p in rows
        ),
    )


def write_accounts_full(corpus: Corpus, path) -> None:
    rows = sorted(corpus.accounts.values(), key=lambda a: a.user_id)
    _write(
        path,
        SCHEMAS["accounts_full"],
        (
            (
                a.user_id, _opt(a.created_at),
                a.followers_count if a.followers_count is not None else "",
                a.following_count if a.following_count is not None else "",
                a.activity_count if a.activity_count is not None else "",
                1 if a.is_io else 0, a.campaign or "",
            )
            for a in rows
        ),
    )


def write_replier_info(corpus: Corpus, path, last_reply_at: Mapping[str, datetime]) -> None:
    """RQ3_replier_info.csv for every account that authored a reply; ``age``
    is years between account creation and the account's last reply."""
    replier_ids = sorted({r.replier_id for r in corpus.replies})
    rows = []
    for uid in replier_ids:
        a = corpus.accounts.get(uid)
        if a is None:
            continue
        if a.age_years is not None:
            age = a.age_years
        elif a.created_at is not None and uid in last_reply_at:
            age = (last_reply_at[uid] - a.created_at).total_seconds() / 86400.0 / 365.25
        else:
            age = ""
        rows.append(
            (
                uid,
                a.activity_count if a.activity_count is not None else 0,
                1 if a.is_io else 0,
                a.following_count if a.following_count is not None else 0,
                a.followers_count if a.followers_count is not None else 0,
                age,
            )
        )
    _write(path, SCHEMAS["RQ3_replier_info"], rows)


def merge_corpora(*corpora: Corpus) -> Corpus:
    """Union of several corpora (e.g. one per campaign). Duplicate ids keep
    the first corpus's record; ground truth merges when all parts carry it."""
    out = Corpus()
    truths = []
    for c in corpora:
        for uid, acct in c.accounts.items():
            out.accounts.setdefault(uid, acct)
        for tid, post in c.posts.items():
            out.posts.setdefault(tid, post)
        seen = {r.reply_tweet_id for r in out.replies}
        out.replies.extend(r for r in c.replies if r.reply_tweet_id not in seen)
        out.provenance.extend(c.provenance)
        if c.truth is not None:
            truths.append(c.truth)
    if len(truths) == len(corpora) and truths:
        merged = truths[0].__class__(post_labels={}, replier_labels={})
        for t in truths:
            merged.post_labels.update(t.post_labels)
            merged.replier_labels.update(t.replier_labels)
        out.truth = merged
    return out
