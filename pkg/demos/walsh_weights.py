"""Walsh weights of axis chains and spider walks, exact and simulated."""

import numpy as np

from walshwalk import catalog
from walshwalk.distributions import RngStream
from walshwalk.embedded import compute_mu, compute_weights, compute_weights_spider, harvest_cycles
from walshwalk.verification import VerifyConfig, verify_spec

# re-entry label drawn from the rows of a stochastic matrix: weights are its stationary vector
Q = [[0.5, 0.25, 0.25], [1 / 3, 1 / 3, 1 / 3], [1 / 6, 0.5, 1 / 3]]
axis = catalog.matrix_perturbed_axis(Q)
w = compute_weights(axis)
print("weights:", np.round(w.weights, 6), "mu:", compute_mu(axis).mu)
vals, vecs = np.linalg.eig(np.array(Q).T)
pi = np.real(vecs[:, np.argmin(np.abs(vals - 1))])
print("stationary vector of Q:", np.round(pi / pi.sum(), 6))

# the three equivalent expressions agree exactly; under Monte Carlo within their errors
cb = harvest_cycles(axis, 60_000, RngStream(3))
mc = compute_weights(cb)
for name in mc.forms:
    print("form", name, np.round(mc.forms[name], 4), "+-", np.round(mc.stderr[name], 4))

# spider walk with three rays and a uniform choice at the origin
spider = catalog.symmetric_spider(3)
print("spider weights:", compute_weights_spider(spider).weights)

# a line walk forced back to 0 at each crossing, read as a two-ray spider
line = catalog.ngo_peigne_example()
print("sticky line p_plus:", compute_weights_spider(line).weights[0])

# full verification on a small ensemble
rep, _ = verify_spec(spider, VerifyConfig(n=2_000, paths=2_000, seed=4))
for o in rep.outcomes[:5]:
    print("%-40s %.4f  %s" % (o.name, o.statistic, "pass" if o.passed else "FAIL"))
print("all passed:", rep.passed)
