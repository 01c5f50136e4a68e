#!/usr/bin/env python3
"""Relaxation: the discard budget may grow as the residual falls.

Runs the same preconditioned solve twice: once with the residual-scaled
budget schedule and once with the fixed budget eps / m_max.  The relaxed
budgets start near the fixed value and grow by orders of magnitude as the
computed residual decreases, so the most aggressive compressions happen
exactly where the basis ranks are largest; the stopping bound stays valid
throughout because the actually discarded norms (not the budgets) are what
enter it.

At this desk scale the stored-column counts of the two schedules end up
close (the orthogonalization compressions share the same cap); the relaxed
schedule's storage advantage grows with problem size and iteration count,
where the late-iteration products carry hundreds of columns.
"""

from lrkrylov import SolverConfig, build, convdiff_mean_precond, gen_convdiff, solve

prob = gen_convdiff(400, 0.5)
prec = build(convdiff_mean_precond(prob))

reports = {}
for schedule in ("relaxed_sigma", "fixed"):
    cfg = SolverConfig(variant="gmres", m_max=40, eps=1e-6, schedule=schedule,
                       flexible=True, est_steps=8, seed=0)
    _, reports[schedule] = solve(prob.op, prob.c1, prob.c2, cfg, precond=prec)

rel = reports["relaxed_sigma"]
fix = reports["fixed"]
print(" it   residual/beta   relaxed budget   fixed budget")
for i in range(max(rel.iterations, fix.iterations)):
    r = f"{rel.rel_residuals[i]:.3e}" if i < rel.iterations else "        -"
    a = f"{rel.eps_a_used[i]:.3e}" if i < len(rel.eps_a_used) else "        -"
    f = f"{fix.eps_a_used[i]:.3e}" if i < len(fix.eps_a_used) else "        -"
    print(f"{i + 1:3d}   {r}       {a}        {f}")

print()
for name, rep in (("relaxed", rel), ("fixed", fix)):
    print(f"{name:8s}: {rep.iterations} iterations, stored columns "
          f"{rep.columns_s}, true residual {rep.true_residual_final:.2e}")
print()
print("the relaxed budgets are nondecreasing along the run while the")
print("computed residual decreases; the cheap early iterations tolerate the")
print("tight budgets because their ranks are small by construction, and the")
print("loose late budgets cut the compression work where ranks are largest.")
