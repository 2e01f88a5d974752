"""
Significance with four schemes
==============================

With only four points a strong correlation is still weak evidence, and
paired t-tests decide which schemes earn a marker in the tables.
"""

from atcot.stats import PairedSample, paired_t_test, pearson_p_value

# %%
# Two-sided p-value of a Pearson coefficient from four pairs.
for r in (0.5, 0.8, 0.92, 0.95, 0.99):
    print(f"r={r:.2f}  n=4  p={pearson_p_value(r, 4):.3f}")

# %%
# A paired test over three units whose differences are 2, 4 and 6.
res = paired_t_test(PairedSample(("u1", "u2", "u3"), (3.0, 6.0, 9.0), (1.0, 2.0, 3.0)))
print(f"\nt={res.t:.4f}  df={res.df}  p={res.p:.4f}")
