# Iteration counts of the three solvers on the manufactured cavity problem,
# refining the grid down the benchmark ladder.
import math

from cabinacoustics.helmholtz import build_grid, manufactured_problem
from cabinacoustics.krylov import SolverOptions, jacobi, solve
from cabinacoustics.pipeline import BENCH_LADDER

opts = SolverOptions(tol=1e-9, max_iter=20000)
omega = 2 * math.pi * 13.0

print(f"{'h':>9} {'n':>6} {'bicgstab':>9} {'bicgstab(8)':>12} {'tfqmr':>6}")
for h in BENCH_LADDER:
    p, exact = manufactured_problem(build_grid(2.4, 1.2, h), (1, 1), omega, 340.0, modulation=1.0)
    M = jacobi(p.A)
    its = []
    for name in ("bicgstab", "bicgstab_l", "tfqmr"):
        x, rep = solve(name, p.A, p.b, M, opts)
        its.append(rep.iterations)
    print(f"{h:>9g} {p.grid.n:>6d} {its[0]:>9d} {its[1]:>12d} {its[2]:>6d}")
