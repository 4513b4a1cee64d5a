"""Fit the leading power of q in each term of the explicit series."""
import warnings

import numpy as np

from ecs import ModelParams, explicit_solve

warnings.simplefilter("ignore")

qs = np.array([0.01, 0.02, 0.04, 0.08])
n = (1, 0)
terms = np.array([explicit_solve(n, ModelParams.make(2, 2.5, q), eta_order=5).eta_terms for q in qs])
for m in range(terms.shape[1]):
    slope = np.polyfit(np.log(qs), np.log(np.abs(terms[:, m])), 1)[0]
    print(f"term {m + 1}: |t| ~ q^{slope:.2f}  (expected {2 * (m + 1)})")
