# %% [markdown]
# # Checking the dynamic program against enumeration
#
# For small grids every monotone alignment path can be listed. The number of
# paths is a Delannoy number, which grows fast, so enumeration stops at 8x8.

# %%
import numpy as np

from sdtw_stabilize import oracle
from sdtw_stabilize.kernel import sdtw_forward, soft_alignment

for n, m in [(2, 2), (3, 3), (6, 5), (8, 8)]:
    print(f"{n}x{m}: {oracle.count_alignments(n, m)} alignments")

# %% [markdown]
# Every enumerated matrix is a 0/1 path from the top-left to the bottom-right cell.

# %%
paths = oracle.enumerate_alignments(3, 2)
for A in paths:
    print(A, end="\n\n")

# %% [markdown]
# Brute force and the DP agree on the cost and on the soft alignment.

# %%
C = np.random.default_rng(1).uniform(0, 5, size=(5, 4))
for gamma in (0.1, 1.0, 10.0):
    dp = sdtw_forward(C, gamma)
    diff = np.abs(soft_alignment(dp, C) - oracle.soft_alignment_bruteforce(C, gamma)).max()
    print(f"gamma={gamma:4}: DP {dp.cost:.12f}  brute force {oracle.sdtw_bruteforce(C, gamma):.12f}  max|dE| {diff:.1e}")

# %% [markdown]
# The randomized sweep behind `sdtw-stabilize oracle-check`:

# %%
report = oracle.oracle_check(max_n=5, max_m=5, trials=10)
print(report.cases, "cases, passed:", report.passed)
print("max cost error %.1e, max alignment error %.1e" % (report.max_cost_error, report.max_alignment_error))
