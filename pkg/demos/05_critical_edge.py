"""
Criticality: hitting times and the edge
========================================

At lambda = 1 started from pi, sigma_N sits between N and N^2 in order. The
rightmost particle of a half-line renewal start moves diffusively.
"""

import numpy as np

from npsim.experiments import edge_diffusion, lower_bound_test
from npsim.kernel import BirthKernel, build_power_law_psi
from npsim.simulator import estimate_sigma

psi = build_power_law_psi(4.0, 4096)
crit = BirthKernel.reversible(1.0, psi)
for N in (32, 64, 128):
    st = estimate_sigma(crit, N, start="pi", trials=60, master_seed=5, key=(N,))
    print(f"N={N:4d} median sigma={st.median:8.1f}  median/N^2={st.median / N**2:.4f}")

# The lower tail is controlled by the partition function.
rep = lower_bound_test(psi, 64, trials=2000, master_seed=6)
print(f"P(sigma < {rep.ts[0]:.3f}) = {rep.p_emp[0]:.4f} <= bound {rep.bound[0]:.3f}")

# A small window keeps this quick; the acceptance run uses W = 2000.
edge = edge_diffusion(psi, W=600, T=300, trials=30, n_probes=7, master_seed=7)
print("Var(r_t - r_0):", np.round(edge.var, 1))
print(f"D_hat = {edge.D_hat:.3f}, R^2 = {edge.fit.r2:.3f}, drift z = {edge.drift_z:.3f}")
