# %% [markdown]
# # Command-line tour
#
# Every command writes into the directory given by `--out`. Matrices are
# headerless CSV with round-trip float formatting.

# %%
import json
import subprocess
import tempfile
from pathlib import Path

import numpy as np

work = Path(tempfile.mkdtemp())


def sh(*args):
    proc = subprocess.run(["sdtw-stabilize", *map(str, args)], capture_output=True, text=True)
    print(f"$ sdtw-stabilize {' '.join(map(str, args))}\n{proc.stdout}{proc.stderr}exit {proc.returncode}\n")
    return proc.returncode


# %% [markdown]
# ## align

# %%
np.savetxt(work / "pred.csv", [[0.0], [1.0]], delimiter=",")
np.savetxt(work / "target.csv", [[0.0], [1.0]], delimiter=",")
sh("align", "--pred", work / "pred.csv", "--target", work / "target.csv", "--gamma", 1, "--out", work / "align")
print((work / "align" / "alignment.csv").read_text())

# %% [markdown]
# ## prior and oracle-check

# %%
sh("prior", "--rows", 4, "--cols", 2, "--nu", 1000, "--out", work / "prior.csv")
print((work / "prior.csv").read_text())
sh("oracle-check", "--max-n", 4, "--max-m", 4, "--trials", 3)

# %% [markdown]
# ## train
#
# A config document holds a `task` section and a `train` section; omitted
# fields take their defaults, and the completed config is written back out.

# %%
config = {
    "task": {"n_frames": 40, "dim": 6, "n_train": 32, "n_val": 8, "n_test": 8},
    "train": {"strategy": {"kind": "sdtw_diag_prior", "gamma": 0.1, "prior": {"nu": 50.0}},
              "max_epochs": 5, "batch_size": 8},
    "snapshots": True,
}
(work / "train.json").write_text(json.dumps(config))
code = sh("train", "--config", work / "train.json", "--out", work / "run")
print("exit code 6 marks a collapsed run" if code == 6 else "")
print((work / "run" / "history.csv").read_text())
print(sorted(p.name for p in (work / "run" / "snapshots").iterdir()))

# %% [markdown]
# ## sweep

# %%
sweep = {
    "task": config["task"],
    "base": {"max_epochs": 3, "batch_size": 8},
    "strategies": [{"kind": "strong_mse"}, {"kind": "sdtw_fixed", "gamma": 1.0}],
    "n_seeds": 2,
}
(work / "sweep.json").write_text(json.dumps(sweep))
sh("sweep", "--config", work / "sweep.json", "--out", work / "sweep")
print((work / "sweep" / "summary.csv").read_text())
