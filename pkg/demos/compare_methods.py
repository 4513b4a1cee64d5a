"""Eigenvalues of the two-particle Lame case from every solver next to the dense oracle."""
import warnings

from ecs import ModelParams, explicit_solve, implicit_solve, perturbative_solve
from ecs.oracle import build_truncated_operator, oracle_eigenpair

warnings.simplefilter("ignore")

print(f"{'q':>5} {'n':>7} {'oracle':>20} {'perturbative':>12} {'implicit':>10} {'explicit':>10}")
for q in (0.02, 0.05, 0.1):
    p = ModelParams.make(2, 2.5, q)
    for n in [(0, 0), (1, 0), (2, 1)]:
        E = oracle_eigenpair(build_truncated_operator(n, p, 16), n)[0]
        errs = [abs(s(n, p).eigenvalue - E) for s in (perturbative_solve, implicit_solve, explicit_solve)]
        print(f"{q:5.2f} {str(n):>7} {E:20.14f} " + f"{errs[0]:12.1e} {errs[1]:10.1e} {errs[2]:10.1e}")
