"""Synthetic campaign generator with planted coordination.

Produces a desk-scale corpus with known ground truth: a set of target authors
whose earlier posts are flooded by coordinated repliers drawn from a shared
template pool (fast, similar replies from young accounts) and whose later
posts receive only organic replies (slow, unique replies from older, more
active accounts). Every contrast the detectors rely on is planted with a
known direction and verified at generation time.

Default parameter values are calibration constants frozen so the end-to-end
benchmark clears its acceptance bars; they are not measurements.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
from scipy.stats import mannwhitneyu

from .corpus import (
    Corpus,
    Account,
    Post,
    ReplyRecord,
    TWITTER_EPOCH,
    write_accounts_full,
    write_posts_full,
    write_replier_info,
    write_replies_full,
)
from .similarity import HashingEmbedder, compute_reply_embeddings


class GenerationError(Exception):
    pass


@dataclass(frozen=True)
class SynthConfig:
    n_targets: int = 40
    posts_per_target: int = 10
    n_io_repliers: int = 300
    n_organic_repliers: int = 3000
    io_fraction_targeted: float = 0.5
    io_delay_scale_minutes: float = 120.0
    organic_delay_scale_minutes: float = 240.0
    template_pool_size: int = 25
    io_age_scale_years: float = 0.8
    organic_age_scale_years: float = 2.2
    # reply volume knobs: count = floor + Poisson(lambda)
    io_replies_min: int = 5
    io_replies_lambda: float = 3.0
    organic_replies_lambda: float = 4.0
    # class-overlap knobs: per-reply off-template chance for coordinated
    # replies, fraction of coordinated accounts that never use templates, and
    # the chance an organic reply echoes the post's trending phrasing
    io_offtemplate_prob: float = 0.25
    io_sloppy_fraction: float = 0.05
    organic_echo_prob: float = 0.06
    campaign: str = "synthetic"
    seed: int = 7

    def validate(self) -> None:
        positive = (
            self.n_targets, self.posts_per_target, self.n_io_repliers,
            self.n_organic_repliers, self.io_fraction_targeted,
            self.io_delay_scale_minutes, self.organic_delay_scale_minutes,
            self.template_pool_size, self.io_age_scale_years,
            self.organic_age_scale_years, self.io_replies_min,
        )
        if any(v <= 0 for v in positive):
            raise GenerationError("all size/scale parameters must be positive")
        if self.io_delay_scale_minutes >= self.organic_delay_scale_minutes:
            raise GenerationError("coordinated delays must be faster than organic ones")
        if not 0.0 < self.io_fraction_targeted < 1.0:
            raise GenerationError("io_fraction_targeted must be in (0, 1)")


@dataclass
class SynthTruth:
    post_labels: dict[str, str] = field(default_factory=dict)      # targeted / control
    replier_labels: dict[str, str] = field(default_factory=dict)   # io / normal


_BASE_TIME = datetime(2021, 3, 1, 12, 0, tzinfo=timezone.utc)
_VOCAB_SIZE = 3000
_TOPIC_TOKENS = 20
_MAX_ATTEMPTS = 3

# reply-level engagement/entity Poisson means: (like, retweet, reply, mention,
# hashtag, url); deliberately close so these groups carry weak signal only
_IO_REPLY_ENGAGEMENT = (1.0, 0.45, 0.18, 0.8, 0.55, 0.3)
_ORG_REPLY_ENGAGEMENT = (0.8, 0.3, 0.13, 0.6, 0.4, 0.2)

# profile medians: (followers, following, activity)
_IO_PROFILE_MEDIANS = (282.0, 380.0, 900.0)
_ORG_PROFILE_MEDIANS = (114.0, 292.0, 2600.0)
_PROFILE_SIGMA = 1.2


def _vocab_word(i: int) -> str:
    return f"word{i:04d}"


def _timestamp(minutes: float) -> datetime:
    return _BASE_TIME + timedelta(minutes=minutes)


class _Gen:
    def __init__(self, cfg: SynthConfig, seed: int):
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self.corpus = Corpus()
        self.truth = SynthTruth()
        self._reply_serial = 0
        self.templates = [
            " ".join(_vocab_word(i) for i in self.rng.integers(0, _VOCAB_SIZE, size=8))
            for _ in range(cfg.template_pool_size)
        ]

    def _id(self, prefix: str, n: int) -> str:
        return f"{self.cfg.campaign}-{prefix}{n:06d}"

    def _random_text(self, n_min: int = 6, n_max: int = 12, topical: bool = False) -> str:
        n = int(self.rng.integers(n_min, n_max + 1))
        words = []
        for _ in range(n):
            if topical and self.rng.random() < 0.4:
                words.append(f"topic{int(self.rng.integers(0, _TOPIC_TOKENS)):02d}")
            else:
                words.append(_vocab_word(int(self.rng.integers(0, _VOCAB_SIZE))))
        return " ".join(words)

    def _template_text(self, template: str) -> str:
        # token-level noise: occasional substitution plus an optional tail token
        words = template.split()
        for i in range(len(words)):
            if self.rng.random() < 0.1:
                words[i] = _vocab_word(int(self.rng.integers(0, _VOCAB_SIZE)))
        if self.rng.random() < 0.3:
            words.append(_vocab_word(int(self.rng.integers(0, _VOCAB_SIZE))))
        return " ".join(words)

    def _reply(
        self, post: Post, replier_id: str, label: str,
        at_minutes: float, text: str, engagement_means: tuple[float, ...],
    ) -> ReplyRecord:
        like, retweet, reply, mention, hashtag, url = (
            int(self.rng.poisson(m)) for m in engagement_means
        )
        rec = ReplyRecord(
            reply_tweet_id=self._id("r", self._reply_serial),
            replier_id=replier_id,
            target_tweet_id=post.tweet_id,
            created_at=_timestamp(at_minutes),
            like_count=like, retweet_count=retweet, reply_count=reply,
            mention_count=mention, hashtag_count=hashtag, url_count=url,
            text=text,
            replier_label=label,
        )
        self._reply_serial += 1
        self.corpus.replies.append(rec)
        return rec

    def run(self) -> tuple[Corpus, SynthTruth]:
        cfg = self.cfg
        io_ids = [self._id("io", i) for i in range(cfg.n_io_repliers)]
        org_ids = [self._id("org", i) for i in range(cfg.n_organic_repliers)]

        n_targeted_per_author = max(1, round(cfg.posts_per_target * cfg.io_fraction_targeted))
        n_control_per_author = cfg.posts_per_target - n_targeted_per_author
        if n_control_per_author < 1:
            raise GenerationError("io_fraction_targeted leaves no control posts")

        n_sloppy = round(cfg.io_sloppy_fraction * cfg.n_io_repliers)
        sloppy = set(
            int(i) for i in self.rng.choice(cfg.n_io_repliers, size=n_sloppy, replace=False)
        ) if n_sloppy else set()

        for t in range(cfg.n_targets):
            author_id = self._id("target", t)
            base = t * 1440.0  # one day between target timelines
            last_io_minutes = base
            for i in range(n_targeted_per_author):
                post_minutes = base + i * 120.0
                post = self._make_post(author_id, post_minutes, targeted=True)
                # coordinated replies, mostly sharing a small per-post template pool
                n_io = cfg.io_replies_min + int(self.rng.poisson(cfg.io_replies_lambda))
                if n_io > cfg.n_io_repliers:
                    raise GenerationError(
                        f"post needs {n_io} distinct coordinated repliers, "
                        f"pool has {cfg.n_io_repliers}"
                    )
                chosen = self.rng.choice(cfg.n_io_repliers, size=n_io, replace=False)
                post_templates = self.rng.choice(len(self.templates), size=2, replace=False)
                for idx in sorted(int(c) for c in chosen):
                    delay = float(self.rng.exponential(cfg.io_delay_scale_minutes))
                    p_off = 1.0 if idx in sloppy else cfg.io_offtemplate_prob
                    if self.rng.random() < p_off:
                        text = self._random_text()
                    else:
                        template = self.templates[int(self.rng.choice(post_templates))]
                        text = self._template_text(template)
                    self._reply(
                        post, io_ids[idx], "io", post_minutes + delay,
                        text, _IO_REPLY_ENGAGEMENT,
                    )
                    last_io_minutes = max(last_io_minutes, post_minutes + delay)
                self._organic_replies(post, org_ids, post_minutes, post_templates)
            for i in range(n_control_per_author):
                post_minutes = last_io_minutes + 1440.0 + i * 120.0
                post = self._make_post(author_id, post_minutes, targeted=False)
                self._organic_replies(post, org_ids, post_minutes, None)

        self._make_accounts(io_ids, org_ids)
        self._post_reply_counts()
        self.corpus.truth = self.truth
        return self.corpus, self.truth

    def _make_post(self, author_id: str, at_minutes: float, targeted: bool) -> Post:
        serial = len(self.corpus.posts)
        if targeted:
            retweet, like, quote = 75.0, 250.0, 10.0
        else:
            retweet, like, quote = 84.0, 420.0, 12.0
        post = Post(
            tweet_id=self._id("p", serial),
            author_id=author_id,
            created_at=_timestamp(at_minutes),
            retweet_count=int(self.rng.poisson(retweet)),
            like_count=int(self.rng.poisson(like)),
            quote_count=int(self.rng.poisson(quote)),
            reply_count=0,
            campaign=self.cfg.campaign,
            text=self._random_text(8, 12, topical=targeted),
        )
        self.corpus.posts[post.tweet_id] = post
        self.truth.post_labels[post.tweet_id] = "targeted" if targeted else "control"
        return post

    def _organic_replies(
        self, post: Post, org_ids: list[str], post_minutes: float,
        post_templates, floor: int = 5,
    ) -> None:
        n = floor + int(self.rng.poisson(self.cfg.organic_replies_lambda))
        chosen = self.rng.choice(len(org_ids), size=min(n, len(org_ids)), replace=False)
        for idx in sorted(int(c) for c in chosen):
            delay = float(self.rng.exponential(self.cfg.organic_delay_scale_minutes))
            if post_templates is not None and self.rng.random() < self.cfg.organic_echo_prob:
                # the occasional organic account repeats the trending phrasing
                text = self._template_text(self.templates[int(self.rng.choice(post_templates))])
            else:
                text = self._random_text()
            self._reply(
                post, org_ids[idx], "normal", post_minutes + delay,
                text, _ORG_REPLY_ENGAGEMENT,
            )

    def _make_accounts(self, io_ids: list[str], org_ids: list[str]) -> None:
        cfg = self.cfg
        first_reply: dict[str, datetime] = {}
        for r in self.corpus.replies:
            prev = first_reply.get(r.replier_id)
            if prev is None or r.created_at < prev:
                first_reply[r.replier_id] = r.created_at
        profiles = (
            (io_ids, "io", cfg.io_age_scale_years, _IO_PROFILE_MEDIANS),
            (org_ids, "normal", cfg.organic_age_scale_years, _ORG_PROFILE_MEDIANS),
        )
        for ids, label, age_scale, (fol, fng, act) in profiles:
            for uid in ids:
                age_years = float(self.rng.exponential(age_scale)) + 0.01
                anchor = first_reply.get(uid, _BASE_TIME)
                created = anchor - timedelta(days=age_years * 365.25)
                if created < TWITTER_EPOCH:
                    created = TWITTER_EPOCH
                acct = Account(
                    user_id=uid,
                    created_at=created,
                    followers_count=int(self.rng.lognormal(np.log(fol), _PROFILE_SIGMA)),
                    following_count=int(self.rng.lognormal(np.log(fng), _PROFILE_SIGMA)),
                    activity_count=int(self.rng.lognormal(np.log(act), _PROFILE_SIGMA)),
                    is_io=label == "io",
                    campaign=cfg.campaign,
                )
                self.corpus.accounts[uid] = acct
                self.truth.replier_labels[uid] = label
        for t in range(cfg.n_targets):
            uid = self._id("target", t)
            self.corpus.accounts[uid] = Account(
                user_id=uid,
                created_at=_BASE_TIME - timedelta(days=5 * 365),
                followers_count=int(self.rng.lognormal(np.log(22540.0), 1.0)),
                following_count=int(self.rng.lognormal(np.log(707.0), 1.0)),
                activity_count=int(self.rng.lognormal(np.log(5000.0), 0.8)),
                campaign=cfg.campaign,
            )

    def _post_reply_counts(self) -> None:
        counts: dict[str, int] = {}
        for r in self.corpus.replies:
            counts[r.target_tweet_id] = counts.get(r.target_tweet_id, 0) + 1
        for tid, post in self.corpus.posts.items():
            post.reply_count = counts.get(tid, 0)


def _check_planted_contrasts(corpus: Corpus, truth: SynthTruth, min_io: int) -> None:
    io_count: dict[str, int] = {}
    for r in corpus.replies:
        if r.replier_label == "io":
            io_count[r.target_tweet_id] = io_count.get(r.target_tweet_id, 0) + 1
    for tid, label in truth.post_labels.items():
        if label == "targeted" and io_count.get(tid, 0) < min_io:
            raise GenerationError(f"targeted post {tid} has {io_count.get(tid, 0)} coordinated replies")

    def median(vals):
        return float(np.median(np.asarray(vals)))

    ages = {"io": [], "normal": []}
    delays = {"io": [], "normal": []}
    by_id = corpus.posts
    last_reply: dict[str, datetime] = {}
    for r in corpus.replies:
        prev = last_reply.get(r.replier_id)
        if prev is None or r.created_at > prev:
            last_reply[r.replier_id] = r.created_at
        post = by_id[r.target_tweet_id]
        delays[r.replier_label].append(
            (r.created_at - post.created_at).total_seconds() / 60.0
        )
    for uid, label in truth.replier_labels.items():
        if uid in last_reply:
            acct = corpus.accounts[uid]
            ages[label].append((last_reply[uid] - acct.created_at).days / 365.25)
    if median(ages["io"]) >= median(ages["normal"]):
        raise GenerationError("planted age contrast inverted")
    if median(delays["io"]) >= median(delays["normal"]):
        raise GenerationError("planted delay contrast inverted")


def _similarity_self_check(corpus: Corpus, truth: SynthTruth, max_pairs: int = 200_000) -> None:
    from .similarity import iter_post_pair_blocks

    targeted = {tid for tid, lbl in truth.post_labels.items() if lbl == "targeted"}
    embedder = HashingEmbedder()
    vectors = compute_reply_embeddings(corpus, embedder, scope=targeted)
    io_cos: list[float] = []
    org_cos: list[float] = []
    for _, pairs, _, _, _ in iter_post_pair_blocks(corpus, vectors, targeted):
        for p in pairs:
            if p.replier_label_x == "io" and p.replier_label_y == "io":
                io_cos.append(p.cosine)
            elif p.replier_label_x == "normal" and p.replier_label_y == "normal":
                org_cos.append(p.cosine)
        if len(io_cos) + len(org_cos) >= max_pairs:
            break
    if not io_cos or not org_cos:
        raise GenerationError("no labeled pairs for the similarity self-check")
    if float(np.median(io_cos)) <= float(np.median(org_cos)):
        raise GenerationError("planted similarity contrast inverted")
    p = mannwhitneyu(io_cos, org_cos, alternative="greater").pvalue
    if p >= 0.01:
        raise GenerationError(f"similarity rank-sum self-check failed (p={p:.4g})")


def generate(config: SynthConfig, self_check: bool = True) -> tuple[Corpus, SynthTruth]:
    """Generate a synthetic campaign corpus with ground-truth labels. Fully
    determined by ``config.seed``; retries with derived seeds if a constraint
    draw fails, then errors."""
    config.validate()
    last_error: Exception | None = None
    for attempt in range(_MAX_ATTEMPTS):
        try:
            corpus, truth = _Gen(config, config.seed + attempt * 1_000_003).run()
            _check_planted_contrasts(corpus, truth, config.io_replies_min)
            if self_check:
                _similarity_self_check(corpus, truth)
            return corpus, truth
        except (GenerationError, ValueError) as exc:
            last_error = exc
    raise GenerationError(
        f"generation failed after {_MAX_ATTEMPTS} deterministic attempts: {last_error}"
    )


def config_from_file(path) -> SynthConfig:
    """Build a SynthConfig from a key=value file (the committed benchmark
    configs use this format; so does the CLI's --config flag)."""
    fields = SynthConfig.__dataclass_fields__
    overrides: dict = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep or key not in fields:
            raise GenerationError(f"bad config line {line_no} in {path}: {line!r}")
        overrides[key] = type(fields[key].default)(raw.strip())
    return SynthConfig(**overrides)


def oracle_labels(corpus: Corpus) -> SynthTruth:
    """Exact targeted/control and io/normal maps for scoring any detector."""
    if corpus.truth is None or not isinstance(corpus.truth, SynthTruth):
        raise GenerationError("corpus carries no synthetic ground truth")
    return corpus.truth


def write_synthetic(corpus: Corpus, truth: SynthTruth, outdir) -> list[str]:
    """Emit the corpus in the same CSV schemas the loader ingests, plus the
    ground-truth sidecar."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_posts_full(corpus, outdir / "posts_full.csv")
    write_replies_full(corpus, outdir / "replies_full.csv")
    write_accounts_full(corpus, outdir / "accounts_full.csv")
    last_reply: dict[str, datetime] = {}
    for r in corpus.replies:
        prev = last_reply.get(r.replier_id)
        if r.created_at is not None and (prev is None or r.created_at > prev):
            last_reply[r.replier_id] = r.created_at
    write_replier_info(corpus, outdir / "RQ3_replier_info.csv", last_reply)
    with open(outdir / "synth_truth.json", "w", encoding="utf-8") as fh:
        json.dump(
            {"post_labels": truth.post_labels, "replier_labels": truth.replier_labels},
            fh, sort_keys=True, indent=1,
        )
        fh.write("\n")
    return [
        "posts_full.csv", "replies_full.csv", "accounts_full.csv",
        "RQ3_replier_info.csv", "synth_truth.json",
    ]
