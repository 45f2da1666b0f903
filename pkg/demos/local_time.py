"""Local time at the origin estimated from excursion gains."""

import math

import numpy as np

from walshwalk import catalog
from walshwalk.models import simulate, unfold_membrane
from walshwalk.reference import reflecting_local_time_oracle
from walshwalk.scaling import local_time_estimator, mean_stderr, run_ensemble

# a simple walk folded onto two rays; its radius is a reflected walk
spec = unfold_membrane(catalog.harrison_shepp("1/2"))
n, N = 4_000, 4_000


def local_time_path(r, k):
    path = simulate(spec, n, (0, 1), r)
    lt = local_time_estimator(path, n, spec.v)
    return lt(np.linspace(0, 1, 5))


curves = np.array(run_ensemble(local_time_path, N, seed=11))
for t, col in zip(np.linspace(0, 1, 5), curves.T):
    mean, se = mean_stderr(col)
    print("t=%.2f  mean L=%.4f +- %.4f  oracle %.4f" % (t, mean, se, reflecting_local_time_oracle(t)))

# growth like sqrt(t): the ratio L(1)/L(1/4) should be close to 2
print("ratio:", curves[:, 4].mean() / curves[:, 1].mean(), "vs", math.sqrt(4))
