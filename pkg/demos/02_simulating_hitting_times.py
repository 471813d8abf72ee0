"""
Hitting times of the empty set
==============================

Exact event-driven simulation from the full interval, in the three regimes.
"""

import numpy as np

from npsim.kernel import BirthKernel, build_power_law_psi
from npsim.simulator import RegimeTooSlow, estimate_sigma

psi = build_power_law_psi(4.0, 4096)

# Subcritical: sigma_N grows like log N.
sub = BirthKernel.reversible(0.03, psi)
for N in (16, 64, 256, 1024):
    st = estimate_sigma(sub, N, trials=500, master_seed=1)
    print(f"lambda=0.03 N={N:5d} mean={st.mean:7.3f} +- {st.se:.3f}  log N={np.log(N):.2f}")

# Supercritical: the median roughly multiplies by a constant per added site.
sup = BirthKernel.reversible(1.5, psi)
meds = [estimate_sigma(sup, N, trials=300, master_seed=2, key=(N,)).median for N in (6, 10, 14)]
print("lambda=1.5 medians at N=6,10,14:", np.round(meds, 1))

# A cap keeps runaway runs bounded; capped trials are counted, never averaged.
st = estimate_sigma(sup, 20, trials=50, t_cap=200.0, master_seed=3)
print(f"N=20 with cap 200: {st.n_capped} of {st.trials} capped, mean reported as {st.mean}")

# When every trial hits the cap the estimate is refused outright.
try:
    estimate_sigma(sup, 40, trials=50, t_cap=200.0, master_seed=3)
except RegimeTooSlow as exc:
    print("N=40:", exc)
