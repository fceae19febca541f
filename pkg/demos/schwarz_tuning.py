# Sweep two-sided Robin parameters on the 4-strip tuning case and compare
# the winner against the symmetric impedance baseline.
from cabinacoustics.helmholtz import relative_l2
from cabinacoustics.krylov import SolverOptions, bicgstab, jacobi
from cabinacoustics.pipeline import PipelineConfig, ddm_benchmark_problem
from cabinacoustics.schwarz import partition, schwarz_solve, symmetric_baseline, tune_parameters

p = ddm_benchmark_problem(PipelineConfig())   # 2.4 x 1.2 cavity, h = 0.1, 13 Hz, unit roof data
part = partition(p.grid, 4)
inner = SolverOptions(tol=1e-10, max_iter=5000)

best, table = tune_parameters(p, part, inner=inner, budget=100, ddm_tol=1e-6)
for tp, outer, conv, inner_its in sorted(table, key=lambda r: (not r[2], r[1]))[:5]:
    print(f"s_left={tp.s_left:.3g}  s_right={tp.s_right:.3g}  outer={outer}  converged={conv}")

base = symmetric_baseline(p)
_, rb = schwarz_solve(p, part, base, inner, 1e-6, 100)
x, rt = schwarz_solve(p, part, best, inner, 1e-10, 300)
ref, _ = bicgstab(p.A, p.b, jacobi(p.A), SolverOptions(tol=1e-12, max_iter=5000))

print(f"baseline {base.s_left:.3g}: {rb.outer_iterations} outer iterations, converged={rb.converged}")
print(f"tuned: {rt.outer_iterations} outer iterations to 1e-10, "
      f"relative L2 vs monodomain {relative_l2(x, ref):.1e}")
