"""Checking the hypotheses before trusting the asymptotics.

Three audits: (1) the step-sequence conditions for a given grid law and
mixing rate, (2) the exponent inequalities tying moment orders to the
observable class, (3) an empirical strong-order regression of the scheme
against the exact transition.  All three are cheap relative to any
production run, so they belong at the front of an experiment.
"""

from lilstep import (
    ExponentParams,
    SchemeSpec,
    StepSpec,
    build_grid,
    check_exponent_constraints,
    check_step_conditions,
    ou_model,
    strong_order_fit,
)

print("step conditions, harmonic grid, exponential mixing at rate 1:")
report = check_step_conditions(
    StepSpec(kind="harmonic"),
    gamma=1.0, alpha=1.0, l_tilde=0.5,
    rho_rate=1.0, rho_tau_rate=1.0,
)
for entry in report:
    witness = "" if entry.witness is None else f"   witness = {entry.witness:.4g}"
    print(f"  {entry.name:<14} {entry.verdict}{witness}")

print("\nsame conditions, power grid theta = 0.5 (steps shrink too slowly):")
report = check_step_conditions(
    StepSpec(kind="power", theta=0.5),
    gamma=1.0, alpha=1.0, l_tilde=0.5,
    rho_rate=1.0, rho_tau_rate=1.0,
)
print(f"  {report.entry('condition_i').name}: {report.entry('condition_i').verdict} "
      f"({report.entry('condition_i').detail})")

params = ExponentParams(
    r=100.0, r_tilde=1.0, q=100.0, q_tilde=1.0, beta=0.0, kappa=0.0,
    gamma1=1.0, gamma=1.0, l=1.0, l_tilde=0.5, alpha=1.0, p=2.0,
)
creport = check_exponent_constraints(params, "thm3_1")
print(f"\nexponent constraints: {'all pass' if creport.passed else 'FAIL'}; "
      f"largest feasible gamma on a 0.05 grid: {creport.gamma_feasible}")

grid = build_grid(StepSpec(kind="harmonic"), 2**13)
fit = strong_order_fit(
    ou_model(1.0, 1.0), grid, [2**j for j in range(8, 14)], 2000,
    scheme=SchemeSpec(kind="bem"), seed=0,
)
print(f"\nstrong order of the implicit Euler scheme: alpha = {fit.alpha:.3f} "
      f"(95% CI [{fit.ci_low:.3f}, {fit.ci_high:.3f}])")
