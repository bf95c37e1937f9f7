# %% [markdown]
# # Stabilizers: temperature schedule, diagonal prior, unfolding

# %%
import numpy as np

from sdtw_stabilize import (
    GammaSchedule,
    PriorConfig,
    apply_prior,
    cost_matrix,
    diagonal_prior,
    gamma_at,
    omega_at,
    sdtw_forward,
    soft_alignment,
    unfold_targets,
)

# %% [markdown]
# ## Schedules
#
# Gamma holds at 10 for ten epochs and falls linearly to 0.1 at epoch 20; the
# prior weight omega holds at 3 for five epochs and reaches 0 at epoch 10.

# %%
g, p = GammaSchedule(), PriorConfig()
for epoch in (0, 5, 9, 10, 12, 15, 20, 25):
    print(f"epoch {epoch:2d}: gamma {gamma_at(g, epoch):6.3f}  omega {omega_at(p, epoch):4.2f}")

# %% [markdown]
# ## The diagonal prior
#
# Zero on a band of uniform-duration segments, growing with the distance to
# the band. Printed coarsely for N=50, M=10 and a narrow nu so the flanks show.

# %%
P = diagonal_prior(50, 10, nu=40.0)  # default nu=1000 suits longer sequences
shades = " .:-=+*#%@"
for row in P[::3]:
    print("".join(shades[min(int(v * 10), 9)] for v in row))

# %% [markdown]
# Adding `omega * P` to the cost pulls the soft alignment toward the band when
# the predictions carry no information yet, as with a fresh network.

# %%
rng = np.random.default_rng(0)
X = rng.random((50, 4))  # uninformative predictions
Y = (rng.random((10, 4)) < 0.3).astype(float)
C = cost_matrix(X, Y)
band = P == 0
for omega in (0.0, 3.0):
    Cp = apply_prior(C, P, omega)
    E = soft_alignment(sdtw_forward(Cp, 0.1), Cp)
    print(f"omega={omega}: share of alignment mass on the band {E[band].sum() / E.sum():.2f}")

# %% [markdown]
# ## Unfolding
#
# The weak target is stretched to the prediction length by uniform repetition.

# %%
Y = np.arange(4.0)[:, None]
print(unfold_targets(Y, 10).ravel())
