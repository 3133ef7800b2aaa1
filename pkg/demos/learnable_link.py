"""Learning the link levels themselves.

With trainable levels the piecewise link is fitted along with the GP. On
a linear target the unregularized levels wander wherever the data are
sparse, while a Gaussian prior ``N(x_k, 1)`` on each level keeps the
learnt function close to the identity.

Run with ``python demos/learnable_link.py``.
"""

import numpy as np

from piecewise_svgp import ExperimentConfig, fit
from piecewise_svgp.data import Dataset, zstandardize
from piecewise_svgp.piecewise import link_csv

rng = np.random.default_rng(0)
x = rng.uniform(-3, 3, 200)
train = zstandardize(Dataset(x[:, None], x + 0.3 * rng.normal(size=200), ["x"], "y"),
                     standardize_target=True)

for reg in ("none", "bayes_prior"):
    res = fit(ExperimentConfig(task="regress-learnable", regularizer=reg, iters=500), train)
    link = res.link
    mad = np.mean(np.abs(link.levels - link.partition.reps))
    print(f"regularizer={reg}: mode {link.mode}, mean |g_k - x_k| = {mad:.3f}")

print("\nlearnt link with the prior (k, lower, upper, rep, level, level_sd):")
print(link_csv(link))
