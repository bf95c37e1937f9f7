# %% [markdown]
# # Soft-DTW in a few lines
#
# A soft-DTW cost compares a prediction sequence `X` (N frames) with a target
# sequence `Y` (M frames) of possibly different length. The temperature
# `gamma` controls how hard the minimum over alignments is.

# %%
import numpy as np

from sdtw_stabilize import cost_matrix, sdtw_forward, sdtw_value_and_grad, soft_alignment, softmin

np.set_printoptions(precision=3, suppress=True)

# %% [markdown]
# ## The smoothed minimum
#
# `softmin` sits between `min - gamma * log(n)` and `min`, and tends to the
# hard minimum as gamma shrinks.

# %%
values = np.array([0.0, 1.0, 1.0])
for gamma in (10.0, 1.0, 0.1, 0.0):
    print(f"gamma={gamma:5}: softmin = {softmin(values, gamma): .6f}")

# %% [markdown]
# ## Cost, accumulator and soft alignment
#
# The 2x2 case with squared distances `[[0, 1], [1, 0]]` has three alignment
# paths; the diagonal one costs 0, the other two cost 1.

# %%
X = np.array([[0.0], [1.0]])
C = cost_matrix(X, X)
result = sdtw_forward(C, gamma=1.0)
E = soft_alignment(result, C)
print("C =\n", C)
print("cost =", result.cost)
print("E =\n", E)

# %% [markdown]
# `E[n, m]` is the probability that an alignment passes through cell
# `(n, m)`, and also the derivative of the cost w.r.t. `C[n, m]`. A quick
# finite-difference check:

# %%
h = 1e-6
bumped = C.copy()
bumped[0, 1] += h
print("dcost/dC[0,1] ~", (sdtw_forward(bumped, 1.0).cost - result.cost) / h, " vs E[0,1] =", E[0, 1])

# %% [markdown]
# ## Temperature and alignment sharpness
#
# A longer example: a piecewise-constant target stretched onto 30 frames.
# Low gamma concentrates E on one path; high gamma spreads it out.

# %%
rng = np.random.default_rng(0)
Y = (rng.random((6, 4)) < 0.4).astype(float)
X = np.repeat(Y, 5, axis=0) + 0.1 * rng.normal(size=(30, 4))
C = cost_matrix(X, Y)
for gamma in (0.1, 1.0, 10.0):
    E = soft_alignment(sdtw_forward(C, gamma), C)
    print(f"gamma={gamma:4}: total mass {E.sum():6.2f}, max per row {E.max(axis=1).mean():.3f}")

# %% [markdown]
# ## Gradient w.r.t. the predictions
#
# This is what a training loop consumes.

# %%
cost, grad, E = sdtw_value_and_grad(X, Y, gamma=0.1)
print("cost", round(cost, 4), "grad shape", grad.shape, "grad norm", round(float(np.linalg.norm(grad)), 4))
