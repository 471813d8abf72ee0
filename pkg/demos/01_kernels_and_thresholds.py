"""
Renewal densities, birth kernels and the constant M
====================================================

A power-law gap density is the standard input. This script builds one,
checks its shape conditions and computes the quantities that decide the
subcritical regime.
"""

from npsim.kernel import (BirthKernel, build_geometric_psi, build_power_law_psi, compute_M,
                          power_law_cutoff, subcritical_threshold, validate_psi)

# Truncate psi(n) ~ n^-4 where the neglected tail drops below 1e-9.
L = power_law_cutoff(4.0, 1e-9)
psi = build_power_law_psi(4.0, L)
print(f"L_max = {L}, psi(1) = {psi(1):.6f}, tail mass = {psi.tail_mass:.2e}")

report = validate_psi(psi, tail_tol=1e-9)
print("power law passes every check:", report.ok)

# A geometric density has constant ratio psi(n)/psi(n+1), so it fails.
print("geometric failures:", validate_psi(build_geometric_psi(0.5, 64)).failures())

# M is the worst aggregate birth rate of a gap. Below lambda* it is < 1.
N = 256
lam_star, n_star = subcritical_threshold(psi, N, return_argmin=True)
print(f"lambda* = {lam_star:.6f} (attained at n = {n_star})")
for lam in (0.03, lam_star, 0.2):
    rep = compute_M(BirthKernel.reversible(lam, psi), N)
    print(f"lambda = {lam:.4f}: M = {rep.M:.4f} ({rep.attained_by})")

# The contact and uniform kernels need no density.
print("contact M:", compute_M(BirthKernel.contact(0.8), N).M)
print("uniform M:", compute_M(BirthKernel.uniform(1.0), N).M)
