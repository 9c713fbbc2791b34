import math

import numpy as np
import pytest

from reply_sentinel.stats import (
    SUMMARY9_FIELDS,
    SUMMARY12_FIELDS,
    AttributeSample,
    EmptySampleError,
    entropy,
    quantile,
    summarize9,
    summarize12,
)
from reference_impls import reference_quantile, reference_summary


def sample(values, name="x"):
    return AttributeSample(name, np.asarray(values, dtype=float))


class TestQuantile:
    def test_middle_of_odd_sample(self):
        assert quantile(sample([1, 2, 3]), 0.5) == 2.0

    def test_singleton_any_q(self):
        for q in (0.0, 0.25, 0.5, 0.9, 1.0):
            assert quantile(sample([7]), q) == 7.0

    def test_interpolated_quartile(self):
        # frozen from the reference linear-interpolation oracle
        assert reference_quantile([1, 2, 3, 4], 0.25) == 1.75
        assert quantile(sample([1, 2, 3, 4]), 0.25) == 1.75

    def test_empty_sample_errors(self):
        with pytest.raises(EmptySampleError, match="empty sample"):
            quantile(sample([]), 0.5)

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            quantile(sample([1.0]), 1.5)

    def test_monotone_in_q(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            xs = rng.normal(size=rng.integers(1, 40)) * 100
            qs = np.linspace(0, 1, 23)
            vals = [quantile(sample(xs), q) for q in qs]
            assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))


class TestEntropy:
    def test_constant_sample_is_zero(self):
        assert entropy(sample([5, 5, 5])) == 0.0

    def test_uniform_ten_bins(self):
        # 1000 evenly spread values, 100 per bin
        assert entropy(sample(np.arange(1000.0))) == pytest.approx(math.log(10), abs=1e-12)

    def test_all_mass_one_bin(self):
        # range comes from one outlier; 9 of 10 bins empty except the ends
        vals = [0.0] * 99 + [100.0]
        expected = -(0.99 * math.log(0.99) + 0.01 * math.log(0.01))
        assert entropy(sample(vals)) == pytest.approx(expected, abs=1e-12)
        assert entropy(sample([3.0, 3.0, 3.0, 3.0])) == 0.0


class TestSummaries:
    def test_four_point_example(self):
        s = summarize12(sample([1, 2, 3, 4]))
        assert s.min == 1 and s.max == 4 and s.range == 3
        assert s.mean == 2.5 and s.q50 == 2.5
        assert s.q25 == 1.75 and s.q75 == 3.25 and s.iqr == 1.5
        assert s.std == pytest.approx(1.2909944, abs=1e-7)
        assert s.skewness == 0.0  # symmetric sample
        assert s.kurtosis == pytest.approx(-1.36, abs=1e-12)

    def test_singleton_degenerate(self):
        s = summarize12(sample([4.2]))
        assert s.range == 0 and s.min == s.max == 4.2
        assert s.q25 == s.q50 == s.q75 == 4.2
        assert s.mean == 4.2 and s.std == 0.0
        assert s.skewness == 0.0 and s.kurtosis == 0.0 and s.entropy == 0.0

    def test_summary9_fields_match_summary12(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            xs = rng.normal(size=rng.integers(1, 60)) * 50
            s12 = summarize12(sample(xs))
            s9 = summarize9(sample(xs))
            for f in SUMMARY9_FIELDS:
                assert getattr(s9, f) == getattr(s12, f)

    def test_empty_errors(self):
        with pytest.raises(EmptySampleError):
            summarize12(sample([]))
        with pytest.raises(EmptySampleError):
            summarize9(sample([]))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            sample([1.0, float("nan")])
        with pytest.raises(ValueError, match="non-finite"):
            sample([1.0, float("inf")])

    def test_field_orders(self):
        assert len(SUMMARY12_FIELDS) == 12 and len(SUMMARY9_FIELDS) == 9
        assert summarize12(sample([1, 2])).as_tuple()[0] == 1.0  # range first


class TestProperties:
    def test_permutation_invariance(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            xs = rng.normal(size=rng.integers(2, 80)) * 200
            base = summarize12(sample(xs)).as_tuple()
            shuffled = summarize12(sample(rng.permutation(xs))).as_tuple()
            assert base == shuffled  # bit-identical

    def test_affine_behavior(self):
        # a = power of two and integer b keep the arithmetic exact
        rng = np.random.default_rng(21)
        for _ in range(20):
            xs = rng.normal(size=rng.integers(3, 60)) * 10
            a, b = 4.0, 3.0
            s = summarize12(sample(xs))
            t = summarize12(sample(a * xs + b))
            assert t.mean == pytest.approx(a * s.mean + b, abs=1e-9)
            assert t.std == pytest.approx(a * s.std, abs=1e-9)
            assert t.skewness == pytest.approx(s.skewness, abs=1e-9)
            assert t.kurtosis == pytest.approx(s.kurtosis, abs=1e-9)
            assert t.entropy == pytest.approx(s.entropy, abs=1e-9)

    def test_oracle_equivalence_small(self):
        # the full 1000-sample oracle run lives in the acceptance suite
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = int(rng.integers(1, 101))
            xs = rng.uniform(-1000, 1000, size=n)
            got = summarize12(sample(xs))
            want = reference_summary([float(v) for v in xs])
            for f in SUMMARY12_FIELDS:
                assert getattr(got, f) == pytest.approx(want[f], abs=1e-9), f
