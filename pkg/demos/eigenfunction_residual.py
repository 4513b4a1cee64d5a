"""Assemble Psi_n from solver coefficients and check H Psi = E Psi on random points."""
import numpy as np

from ecs import ModelParams, implicit_solve
from ecs.eigenfunction import assemble_psi, eigen_residual

p = ModelParams.make(2, 2.5, 0.05)
res = implicit_solve((2, 1), p)
rng = np.random.default_rng(1)
print(f"E = {res.eigenvalue:.14f}")
for _ in range(5):
    x = rng.uniform(-np.pi, np.pi, 2)
    psi = assemble_psi(x, res.coefficients, p)
    r = eigen_residual(x, res.eigenvalue, res.coefficients, p)
    print(f"x = ({x[0]:+.3f}, {x[1]:+.3f})  |Psi| = {abs(psi):.3e}  residual = {r:.1e}")
