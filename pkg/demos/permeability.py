"""Permeability of membrane walks and the skew Brownian marginal they converge to."""

import math

import numpy as np

from walshwalk import catalog
from walshwalk.distributions import RngStream
from walshwalk.embedded import compute_gamma_membrane
from walshwalk.models import simulate
from walshwalk.reference import SbmParams, sbm_cdf
from walshwalk.scaling import ks_test, lattice_jitter, occupation_fractions, phi_map, run_ensemble

# simple walk stepping right from 0 with probability 0.7
hs = catalog.harrison_shepp("7/10")
g = compute_gamma_membrane(hs)
print("Harrison-Shepp gamma:", g.gamma, "forms:", g.forms)

# a wider membrane crossed only from its two end points
tp = catalog.two_point_membrane("0.6", "0.2", d=2)
print("two-point gamma:", compute_gamma_membrane(tp).gamma)

# Monte Carlo route: 20 replica chains with batch-means errors
mc = compute_gamma_membrane(hs, "mc", cycles=50_000, r=RngStream(1))
print("MC gamma: %.4f +- %.4f" % (mc.gamma, mc.stderr["phi"]))

# scaled endpoints X(n)/sqrt(n) of many walks started on the membrane
n, N = 2_500, 4_000
ends = np.array(run_ensemble(lambda r, k: simulate(hs, n, 0, r).radius[-1] / math.sqrt(n), N, seed=7))
share = occupation_fractions(ends)["+"]
print("fraction positive: %.4f +- %.4f (limit %.2f)" % (share.value, share.stderr, (1 + g.gamma) / 2))

# the lattice makes the empirical law atomic; spreading each atom over its cell
# lets the KS test compare against the continuous limit
y = phi_map(lattice_jitter(ends, 2 / math.sqrt(n), RngStream(7, 99)), *hs.v)
ks = ks_test(y, lambda q: sbm_cdf(SbmParams(g.gamma, 1.0), q))
print("KS D = %.4f, threshold %.4f, passed: %s" % (ks.statistic, ks.threshold, ks.passed))
