"""Summary-statistic kernels that turn a sample of attribute values into
fixed 12- and 9-statistic feature blocks.

All kernels are pure functions of the value multiset: any reordering of the
input produces bit-identical output. Conventions are pinned so that results
are reproducible to 1e-9 across platforms:

* quantiles: linear interpolation on ``(n - 1)`` spacing,
* std: sample standard deviation (divisor ``n - 1``, 0 for singletons),
* skewness: moment ratio ``g1 = m3 / m2**1.5`` (0 when ``m2 == 0`` or ``n < 3``),
* kurtosis: excess ``g2 = m4 / m2**2 - 3`` (0 when ``m2 == 0`` or ``n < 4``),
* entropy: Shannon entropy (natural log) over 10 equal-width bins spanning
  the observed ``[min, max]``; 0 when the range is degenerate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ENTROPY_BINS = 10

SUMMARY12_FIELDS = (
    "range", "q25", "q50", "q75", "iqr", "min", "max",
    "mean", "std", "skewness", "kurtosis", "entropy",
)
SUMMARY9_FIELDS = ("range", "q25", "q50", "q75", "iqr", "max", "min", "mean", "entropy")


class EmptySampleError(ValueError):
    """A statistic was requested for a zero-length sample."""


@dataclass
class AttributeSample:
    """The multiset of one attribute's values over a reply group."""

    name: str
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float).reshape(-1)
        if arr.size and not np.isfinite(arr).all():
            raise ValueError(f"sample {self.name!r} contains non-finite values")
        self.values = arr

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class Summary12:
    range: float
    q25: float
    q50: float
    q75: float
    iqr: float
    min: float
    max: float
    mean: float
    std: float
    skewness: float
    kurtosis: float
    entropy: float

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, f) for f in SUMMARY12_FIELDS)


@dataclass(frozen=True)
class Summary9:
    range: float
    q25: float
    q50: float
    q75: float
    iqr: float
    max: float
    min: float
    mean: float
    entropy: float

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, f) for f in SUMMARY9_FIELDS)


def _values(sample) -> np.ndarray:
    if isinstance(sample, AttributeSample):
        return sample.values
    return np.asarray(sample, dtype=float).reshape(-1)


def _quantile_sorted(x: np.ndarray, q: float) -> float:
    # linear interpolation at index h = q * (n - 1) on the sorted sample
    h = q * (x.size - 1)
    lo = int(math.floor(h))
    frac = h - lo
    if frac == 0.0:
        return float(x[lo])
    return float(x[lo] + frac * (x[lo + 1] - x[lo]))


def quantile(sample, q: float) -> float:
    """Linear-interpolation quantile of the sample at fraction ``q`` in [0, 1]."""
    x = _values(sample)
    if x.size == 0:
        raise EmptySampleError("empty sample")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile fraction {q} outside [0, 1]")
    return _quantile_sorted(np.sort(x), q)


def _entropy_sorted(x: np.ndarray) -> float:
    n = x.size
    mn = float(x[0])
    mx = float(x[-1])
    rng = mx - mn
    if rng == 0.0:
        return 0.0
    idx = np.floor((x - mn) * ENTROPY_BINS / rng).astype(np.int64)
    np.clip(idx, 0, ENTROPY_BINS - 1, out=idx)
    counts = np.bincount(idx, minlength=ENTROPY_BINS)
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def entropy(sample) -> float:
    """Shannon entropy (nats) of the 10-bin equal-width histogram over [min, max]."""
    x = _values(sample)
    if x.size == 0:
        raise EmptySampleError("empty sample")
    return _entropy_sorted(np.sort(x))


def _kernel(sample) -> dict[str, float]:
    x = _values(sample)
    if x.size == 0:
        raise EmptySampleError("empty sample")
    x = np.sort(x)
    n = x.size
    mn = float(x[0])
    mx = float(x[-1])
    if mx == mn:
        # constant sample: every dispersion statistic is exactly zero
        return {
            "range": 0.0, "q25": mn, "q50": mn, "q75": mn, "iqr": 0.0,
            "min": mn, "max": mx, "mean": mn, "std": 0.0,
            "skewness": 0.0, "kurtosis": 0.0, "entropy": 0.0,
        }
    mean = float(x.mean())
    d = x - mean
    d2 = d * d
    ss = float(d2.sum())
    m2 = ss / n
    std = math.sqrt(ss / (n - 1)) if n > 1 else 0.0
    if m2 > 0.0 and n >= 3:
        m3 = float((d2 * d).mean())
        skew = m3 / m2 ** 1.5
    else:
        skew = 0.0
    if m2 > 0.0 and n >= 4:
        m4 = float((d2 * d2).mean())
        kurt = m4 / (m2 * m2) - 3.0
    else:
        kurt = 0.0
    q25 = _quantile_sorted(x, 0.25)
    q50 = _quantile_sorted(x, 0.50)
    q75 = _quantile_sorted(x, 0.75)
    return {
        "range": mx - mn,
        "q25": q25,
        "q50": q50,
        "q75": q75,
        "iqr": q75 - q25,
        "min": mn,
        "max": mx,
        "mean": mean,
        "std": std,
        "skewness": skew,
        "kurtosis": kurt,
        "entropy": _entropy_sorted(x),
    }


def summarize12(sample) -> Summary12:
    """The full 12-statistic block for one attribute sample."""
    k = _kernel(sample)
    return Summary12(**{f: k[f] for f in SUMMARY12_FIELDS})


def summarize9(sample) -> Summary9:
    """The 9-statistic block (no std/skewness/kurtosis, which are undefined
    for the many one-reply groups this block is applied to)."""
    k = _kernel(sample)
    return Summary9(**{f: k[f] for f in SUMMARY9_FIELDS})
