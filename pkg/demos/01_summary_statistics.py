"""Walk through the summary-statistic kernels on a small sample.

Every feature block downstream is built from these two fixed statistic sets,
so their conventions (quantile interpolation, sample std, moment-based shape
statistics, 10-bin entropy) are pinned and worth seeing once by hand.
"""

import numpy as np

from reply_sentinel.stats import AttributeSample, entropy, quantile, summarize9, summarize12

values = np.array([3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0])
sample = AttributeSample("like_count", values)

print("sample:", values.tolist())
print()

# quantiles interpolate linearly on (n-1) spacing
for q in (0.25, 0.5, 0.75):
    print(f"quantile({q}) = {quantile(sample, q)}")

# entropy is measured over ten equal-width bins spanning [min, max]
print(f"entropy = {entropy(sample):.6f} nats")
print()

s12 = summarize12(sample)
print("12-statistic block (used for post vectors):")
for name, value in zip(type(s12).__dataclass_fields__, s12.as_tuple()):
    print(f"  {name:<9} = {value:.6f}")

# the 9-statistic block drops std/skewness/kurtosis, which are meaningless
# for the many repliers who only ever posted a single reply
s9 = summarize9(AttributeSample("delay", np.array([42.0])))
print()
print("9-statistic block of a singleton sample:", s9.as_tuple())

# the kernels are order-blind: shuffling the input changes nothing, bit for bit
shuffled = summarize12(AttributeSample("like_count", values[::-1].copy()))
assert shuffled == s12
print()
print("permutation invariance holds: shuffled summary is bit-identical")
