"""
The reversible measure and its partition function
==================================================

K_N is computed by a backward recursion in log space. The same table drives an
exact sampler for pi.
"""

import numpy as np

from npsim.kernel import build_power_law_psi, psi_from_values
from npsim.renewal import (compute_weights, enumerate_pi, kn_growth_check, sample_pi)
from npsim.simulator import make_rng

toy = psi_from_values([0.7, 0.3])
print("toy K_3 =", compute_weights(3, 1.0, toy).K)

psi = build_power_law_psi(4.0, 4096)

# At lambda = 1, K_N / N^2 settles near 1 / (2 * mean gap).
rep = kn_growth_check(psi, 1.0, [50, 100, 200, 400])
print("K_N/N^2:", np.round(rep.ratio, 4), "limit", round(rep.renewal_limit, 4))

# Above 1 the growth is exponential.
rep = kn_growth_check(psi, 1.2, [100, 200, 400])
print("log K_N / N at lambda=1.2:", np.round(rep.gamma_hat, 4))

# Exact draws agree with brute-force enumeration on a small interval.
N, rng = 6, make_rng(0)
w = compute_weights(N, 1.0, psi)
draws = [sample_pi(w, psi, rng).to_bitstring() for _ in range(50_000)]
exact = enumerate_pi(N, 1.0, psi)
emp = {k: draws.count(k) / len(draws) for k in exact}
tv = 0.5 * sum(abs(emp[k] - p) for k, p in exact.items())
print(f"total variation to exact pi on N={N}: {tv:.4f}")
