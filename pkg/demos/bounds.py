"""How fast piecewise links approach their targets.

For ``X ~ N(mu, sigma^2)`` the mean squared error of a discretized link is
available in closed form for ``exp``, and bounded through the Lipschitz
constant for the sigmoid (1/4) and the identity (1). Both are compared
with Monte Carlo as the number of intervals grows.

Run with ``python demos/bounds.py``.
"""

import numpy as np
from scipy.special import expit

from piecewise_svgp.mc_oracle import mc_link_mse
from piecewise_svgp.piecewise import discretize_link, exp_link_mse, lipschitz_mse_bound, uniform_partition

mu, sigma = 0.3, 0.8
print(f"X ~ N({mu}, {sigma}^2); edges on [mu - 6 sigma, mu + 6 sigma]")
print(f"{'K':>4} {'exp exact':>12} {'exp MC':>12} {'sigmoid bound':>14} {'sigmoid MC':>12}")
for K in (4, 6, 10, 18, 34, 66):
    p = uniform_partition(K, mu - 6 * sigma, mu + 6 * sigma)
    exact = exp_link_mse(p, mu, sigma)
    mc_exp = mc_link_mse(np.exp, discretize_link("exp", p), mu, sigma, n=200000, seed=K).mean
    bound = lipschitz_mse_bound(p, 0.25, mu, sigma, link="sigmoid")
    mc_sig = mc_link_mse(expit, discretize_link("sigmoid", p), mu, sigma, n=200000, seed=K).mean
    print(f"{K:>4} {exact:12.3e} {mc_exp:12.3e} {bound:14.3e} {mc_sig:12.3e}")

# exp is not globally Lipschitz, so the generic bound refuses it by default.
try:
    lipschitz_mse_bound(uniform_partition(10), 1.0, mu, sigma, link="exp")
except ValueError as exc:
    print("\nexp with the Lipschitz bound:", exc)
