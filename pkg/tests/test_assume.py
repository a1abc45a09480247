"""Oracle and property tests for the assumption audits."""

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lilstep.assume import (
    CONSTRAINT_CONTEXTS,
    ConditionEntry,
    ConditionReport,
    ExponentParams,
    check_exponent_constraints,
    check_step_conditions,
    contraction_fit,
    moment_scan,
    strong_order_fit,
)
from lilstep.errors import ConfigurationError
from lilstep.grid import StepSpec, build_grid
from lilstep.integrate import SchemeSpec
from lilstep.models import cubic_model, ou_model


def make_params(**overrides) -> ExponentParams:
    base = dict(
        r=8.0,
        r_tilde=1.0,
        q=8.0,
        q_tilde=1.0,
        beta=0.0,
        kappa=0.0,
        gamma1=0.5,
        gamma=1.0,
        l=0.0,
        l_tilde=1.0,
        alpha=0.0,
        p=2.0,
    )
    base.update(overrides)
    return ExponentParams(**base)


class TestExponentParams:
    def test_derived_quantities_by_hand(self):
        p = make_params(beta=1.5, r_tilde=1.0, q_tilde=2.0, kappa=3.0,
                        gamma=0.8, p=3.0)
        assert p.d_tilde == pytest.approx(2.5)
        # p/2 + p q_tilde/2 + gamma max(d_tilde, kappa)
        assert p.p_f == pytest.approx(1.5 + 3.0 + 0.8 * 3.0)

    def test_derived_values_follow_field_replacement(self):
        p = make_params()
        assert p.d_tilde == 1.0
        bumped = dataclasses.replace(p, q_tilde=3.0)
        assert bumped.d_tilde == 3.0
        assert bumped.p_f > p.p_f

    @pytest.mark.parametrize(
        "field, value",
        [
            ("r", 1.9),
            ("r", math.nan),
            ("r_tilde", 0.5),
            ("q", 1.0),
            ("q_tilde", 0.9),
            ("beta", -0.1),
            ("beta", 7.5),
            ("kappa", 7.5),
            ("gamma1", 0.0),
            ("gamma1", 1.2),
            ("gamma", 0.4),
            ("gamma", 1.1),
            ("l", -0.5),
            ("l", 9.0),
            ("l_tilde", 0.0),
            ("alpha", -1.0),
            ("p", 0.5),
        ],
    )
    def test_out_of_range_fields_rejected(self, field, value):
        with pytest.raises(ConfigurationError):
            make_params(**{field: value})

    def test_range_message_names_the_bounds(self):
        with pytest.raises(ConfigurationError, match=r"beta must lie in \[0, r - 1\]"):
            make_params(beta=7.5)
        with pytest.raises(ConfigurationError, match=r"gamma1 must lie in \(0, 1\]"):
            make_params(gamma1=0.0)
        with pytest.raises(ConfigurationError, match=r"gamma must lie in \[gamma1, 1\]"):
            make_params(gamma=0.2)


class TestExponentConstraints:
    def test_boundary_case_passes_with_zero_slack(self):
        p = make_params(r=8.0, p=2.0, gamma1=1.0, gamma=1.0)
        rep = check_exponent_constraints(p, "prop2_2")
        assert rep.passed
        assert rep.entries[1].witness == pytest.approx(0.0, abs=1e-12)
        assert rep.entries[2].witness == pytest.approx(0.0, abs=1e-12)

    def test_tightened_bound_fails_the_second_inequality_first(self):
        p = make_params(r=7.0, p=2.0, gamma1=1.0, gamma=1.0)
        rep = check_exponent_constraints(p, "prop2_2")
        assert not rep.passed
        assert rep.entries[0].verdict == "pass"
        assert rep.entries[1].verdict == "fail"
        assert rep.entries[1].witness < 0.0

    def test_dissipative_scalar_parameters_pass_the_thm3_1_set(self):
        p = make_params(
            r=100.0, q=100.0, r_tilde=1.0, q_tilde=1.0, beta=0.0, kappa=0.0,
            gamma1=1.0, gamma=1.0, l=2.0, l_tilde=0.5, alpha=1.0, p=1.0,
        )
        rep = check_exponent_constraints(p, "thm3_1")
        assert rep.passed
        assert rep.gamma_feasible == pytest.approx(1.0)

    @pytest.mark.parametrize(
        "context, count",
        [("prop2_2", 3), ("thm3_1", 6), ("prop4_3", 5), ("prop4_4", 6)],
    )
    def test_every_condition_appears_exactly_once(self, context, count):
        rep = check_exponent_constraints(make_params(), context)
        names = [e.name for e in rep]
        assert len(names) == count
        assert len(set(names)) == count

    def test_reports_are_pure_in_the_parameters(self):
        p = make_params(beta=0.3, gamma=0.9)
        assert check_exponent_constraints(p, "thm3_1") == (
            check_exponent_constraints(p, "thm3_1")
        )

    def test_unknown_context_rejected(self):
        with pytest.raises(ConfigurationError, match="context must be one of"):
            check_exponent_constraints(make_params(), "thm9")

    def test_params_type_guard(self):
        with pytest.raises(ConfigurationError, match="ExponentParams"):
            check_exponent_constraints({"r": 8.0}, "prop2_2")

    def test_gamma_scan_only_for_gamma_contexts(self):
        rep = check_exponent_constraints(make_params(), "prop2_2")
        assert rep.gamma_feasible is None
        assert rep.gamma_note == ""
        rep2 = check_exponent_constraints(make_params(r=40.0, q=40.0, p=1.0), "thm3_1")
        assert "heuristic" in rep2.gamma_note

    def test_gamma_scan_finds_the_binding_grid_point(self):
        # 4 p q_tilde + 8 d_tilde gamma <= q binds: 4 + 8 gamma <= 10
        p = make_params(r=100.0, q=10.0, p=1.0, gamma1=0.05, gamma=0.8)
        rep = check_exponent_constraints(p, "thm3_1")
        assert not rep.passed
        assert rep.gamma_feasible == pytest.approx(0.75)

    def test_entry_lookup_by_name(self):
        rep = check_exponent_constraints(make_params(), "prop2_2")
        assert rep.entry("p <= r").verdict == "pass"
        with pytest.raises(ConfigurationError, match="no condition named"):
            rep.entry("p <= twelve")

    def test_rows_carry_the_verify_schema(self):
        rep = check_exponent_constraints(make_params(), "prop4_3")
        rows = rep.rows()
        assert len(rows) == len(rep)
        for row in rows:
            assert set(row) == {"condition", "verdict", "witness", "detail"}

    def test_duplicate_condition_names_rejected(self):
        e = ConditionEntry(name="x <= y", verdict="pass", witness=0.0, detail="")
        with pytest.raises(ConfigurationError, match="unique"):
            ConditionReport(entries=(e, e))


@st.composite
def exponent_params(draw):
    r = draw(st.floats(2.0, 20.0))
    q = draw(st.floats(2.0, 40.0))
    g1 = draw(st.floats(0.05, 1.0))
    return ExponentParams(
        r=r,
        r_tilde=draw(st.floats(1.0, 4.0)),
        q=q,
        q_tilde=draw(st.floats(1.0, 4.0)),
        beta=draw(st.floats(0.0, min(r - 1.0, 5.0))),
        kappa=draw(st.floats(0.0, min(q - 1.0, 5.0))),
        gamma1=g1,
        gamma=draw(st.floats(g1, 1.0)),
        l=draw(st.floats(0.0, r)),
        l_tilde=draw(st.floats(0.05, 1.0)),
        alpha=draw(st.floats(0.0, 3.0)),
        p=draw(st.floats(1.0, 6.0)),
    )


class TestConstraintMonotonicity:
    @settings(max_examples=60, deadline=None)
    @given(
        params=exponent_params(),
        context=st.sampled_from(CONSTRAINT_CONTEXTS),
        bump=st.floats(0.1, 30.0),
        field=st.sampled_from(["r", "q"]),
    )
    def test_raising_integrability_never_flips_pass_to_fail(
        self, params, context, bump, field
    ):
        before = check_exponent_constraints(params, context)
        raised = dataclasses.replace(
            params, **{field: getattr(params, field) + bump}
        )
        after = check_exponent_constraints(raised, context)
        for e1, e2 in zip(before, after):
            assert e1.name == e2.name
            if e1.verdict == "pass":
                assert e2.verdict == "pass"


HARMONIC = StepSpec(kind="harmonic")


class TestStepConditions:
    def test_harmonic_reference_point_passes_everything(self):
        rep = check_step_conditions(HARMONIC, 1.0, 1.0, 0.5, 1.0, 1.0 / 3.0)
        assert rep.passed
        assert [e.name for e in rep] == [
            "condition_i", "condition_ii", "condition_iii", "condition_iv",
        ]
        assert rep.entry("condition_ii").witness <= 2.0 + 1e-6

    def test_summable_witness_matches_the_zeta_value(self):
        rep = check_step_conditions(HARMONIC, 1.0, 1.0, 0.5, 1.0, 1.0)
        assert rep.entry("condition_i").witness == pytest.approx(
            math.pi**2 / 6.0, abs=1e-5
        )

    def test_slow_power_law_fails_summability(self):
        rep = check_step_conditions(
            StepSpec(kind="power", theta=0.5), 1.0, 1.0, 0.5, 1.0, 1.0
        )
        assert rep.entry("condition_i").verdict == "fail"
        assert "diverges" in rep.entry("condition_i").detail
        assert rep.entry("condition_iv").verdict == "fail"
        assert rep.entry("condition_ii").verdict == "pass"

    def test_faster_power_law_passes(self):
        rep = check_step_conditions(
            StepSpec(kind="power", theta=0.75), 1.0, 1.0, 0.5, 1.0, 1.0
        )
        assert rep.passed

    def test_constant_steps_fail_the_series_conditions(self):
        rep = check_step_conditions(
            StepSpec(kind="constant", scale=0.5, cap=0.5), 1.0, 1.0, 0.5, 1.0, 1.0
        )
        assert rep.entry("condition_i").verdict == "fail"
        assert rep.entry("condition_iv").verdict == "fail"
        assert rep.entry("condition_ii").verdict == "pass"
        assert rep.entry("condition_iii").verdict == "pass"

    def test_power_law_decay_is_decided_by_the_product_exponent(self):
        rep = check_step_conditions(
            HARMONIC, 1.0, 1.0, 0.5, ("power", 2.0), ("power", 0.8)
        )
        assert rep.entry("condition_ii").verdict == "pass"
        assert rep.entry("condition_iii").verdict == "fail"
        # the same profile fails once gamma drags the product below 1
        rep2 = check_step_conditions(
            HARMONIC, 0.4, 1.0, 0.5, ("power", 2.0), 1.0
        )
        assert rep2.entry("condition_ii").verdict == "fail"

    def test_callable_decay_is_never_silently_passed(self):
        rep = check_step_conditions(
            HARMONIC, 1.0, 1.0, 0.5, lambda u: 1.0 / (1.0 + u**2), 1.0
        )
        entry = rep.entry("condition_ii")
        assert entry.verdict == "undecided"
        assert math.isfinite(entry.witness)
        assert "certificate" in entry.detail
        assert not rep.passed

    def test_certified_tail_makes_the_witness_horizon_stable(self):
        w = [
            check_step_conditions(
                HARMONIC, 1.0, 1.0, 0.5, 1.0, 1.0, horizon=h
            ).entry("condition_ii").witness
            for h in (100_000, 200_000, 400_000)
        ]
        assert abs(w[0] - w[2]) < 1e-4
        assert abs(w[1] - w[2]) < 1e-4

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(spec="harmonic"),
            dict(gamma=0.0),
            dict(gamma=1.2),
            dict(alpha=-1.0),
            dict(l_tilde=0.0),
            dict(horizon=500),
            dict(horizon=2000.5),
            dict(rho_rate=-1.0),
            dict(rho_rate=("power", -2.0)),
            dict(rho_rate="fast"),
        ],
    )
    def test_invalid_inputs_rejected(self, kwargs):
        args = dict(
            spec=HARMONIC, gamma=1.0, alpha=1.0, l_tilde=0.5,
            rho_rate=1.0, rho_tau_rate=1.0, horizon=2000,
        )
        args.update(kwargs)
        with pytest.raises(ConfigurationError):
            check_step_conditions(**args)


class TestStepConditionsBruteForce:
    """Verdicts must agree with direct partial-sum behavior on long grids."""

    CASES = [
        # (spec, gamma, alpha, expect_i)
        (HARMONIC, 1.0, 1.0, "pass"),
        (HARMONIC, 1.0, 0.0, "fail"),
        (StepSpec(kind="power", theta=0.75), 1.0, 1.0, "pass"),
        (StepSpec(kind="power", theta=0.75), 1.0, 0.0, "fail"),
        (StepSpec(kind="power", theta=0.5), 0.6, 1.0, "fail"),
        (StepSpec(kind="constant", scale=0.5, cap=0.5), 1.0, 1.0, "fail"),
    ]

    @pytest.mark.parametrize("spec, gamma, alpha, expect", CASES)
    def test_series_verdict_matches_partial_sums(self, spec, gamma, alpha, expect):
        rep = check_step_conditions(spec, gamma, alpha, 0.5, 1.0, 1.0)
        assert rep.entry("condition_i").verdict == expect

        tau = build_grid(spec, 1_000_000).steps
        e = 1.0 + gamma * alpha
        s_mid = float(np.sum(tau[1:100_001] ** e))
        s_full = float(np.sum(tau[1:] ** e))
        brute_converged = (s_full - s_mid) < 0.01
        assert brute_converged == (expect == "pass")

    @pytest.mark.parametrize(
        "spec, gamma, alpha, l_tilde, expect",
        [
            (HARMONIC, 1.0, 1.0, 0.5, "pass"),
            (HARMONIC, 1.0, 0.0, 1.0, "fail"),
            (StepSpec(kind="power", theta=0.5), 1.0, 1.0, 0.5, "fail"),
            (StepSpec(kind="constant", scale=0.5, cap=0.5), 1.0, 1.0, 0.5, "fail"),
        ],
    )
    def test_averaged_tail_verdict_matches_direct_averages(
        self, spec, gamma, alpha, l_tilde, expect
    ):
        rep = check_step_conditions(spec, gamma, alpha, l_tilde, 1.0, 1.0)
        assert rep.entry("condition_iv").verdict == expect

        e = min(1.0 + gamma * alpha, 1.0 + l_tilde * gamma)

        def cesaro(h: int) -> float:
            g = build_grid(spec, h)
            tau = g.steps[1:]
            suffix = np.cumsum((tau**e)[::-1])[::-1]
            return float(np.dot(tau, suffix)) / float(g.times[-1])

        ratio = cesaro(1_000_000) / cesaro(10_000)
        if expect == "pass":
            assert ratio < 0.9
        else:
            assert ratio > 0.95

    @pytest.mark.parametrize("s, expect", [(2.0, "pass"), (0.8, "fail")])
    def test_power_law_mixing_verdict_matches_partial_sups(self, s, expect):
        spec = StepSpec(kind="constant", scale=0.5, cap=0.5)
        rep = check_step_conditions(spec, 1.0, 1.0, 0.5, ("power", s), 1.0)
        assert rep.entry("condition_ii").verdict == expect

        # flat steps make real time grow linearly, so a horizon of 1e6
        # steps probes the time tail directly and the growth is decisive
        grid = build_grid(spec, 1_000_000)
        tau, times = grid.steps, grid.times

        def partial(k: int, h: int) -> float:
            u = times[k : h + 1] - times[k]
            return float(np.dot(tau[k : h + 1], (1.0 + u) ** (-s)))

        growth = max(
            partial(k, 1_000_000) - partial(k, 100_000) for k in (1, 100)
        )
        assert (growth < 0.01) == (expect == "pass")

    @pytest.mark.parametrize("s, expect", [(2.0, "pass"), (0.8, "fail")])
    def test_power_law_mixing_on_slow_clocks_by_decade_ratio(self, s, expect):
        # harmonic steps advance time logarithmically, so even convergent
        # sums creep; the decade-over-decade growth ratio still separates
        # the two regimes (measured: ~0.68 convergent, ~0.86 divergent)
        rep = check_step_conditions(HARMONIC, 1.0, 1.0, 0.5, ("power", s), 1.0)
        assert rep.entry("condition_ii").verdict == expect

        grid = build_grid(HARMONIC, 1_000_000)
        tau, times = grid.steps, grid.times

        def partial(h: int) -> float:
            u = times[1 : h + 1] - times[1]
            return float(np.dot(tau[1 : h + 1], (1.0 + u) ** (-s)))

        g1 = partial(100_000) - partial(10_000)
        g2 = partial(1_000_000) - partial(100_000)
        if expect == "pass":
            assert g2 / g1 < 0.75
        else:
            assert g2 / g1 > 0.8


class TestMomentScan:
    def test_ou_second_moment_sup_matches_stationary_variance(self):
        grid = build_grid(HARMONIC, 2000)
        est, = moment_scan(
            ou_model(a=1.0, sigma=1.0), SchemeSpec(kind="bem"), grid, [2.0],
            paths=2048, seed=3,
        )
        assert not est.diverged
        assert est.stderr > 0.0
        assert abs(est.sup_moment - 0.5) <= max(3.0 * est.stderr, 0.06)
        assert est.at_time > 1.0

    def test_zero_noise_from_the_origin_is_exactly_zero(self):
        grid = build_grid(HARMONIC, 300)
        for est in moment_scan(
            ou_model(a=1.0, sigma=0.0), SchemeSpec(kind="bem"), grid,
            [2.0, 4.0], paths=8,
        ):
            assert est.sup_moment == 0.0
            assert est.stderr == 0.0
            assert not est.diverged

    def test_explicit_baseline_on_coarse_steps_is_flagged_divergent(self):
        grid = build_grid(StepSpec(kind="constant", scale=1.0, cap=1.0), 400)
        est, = moment_scan(
            cubic_model(sigma=1.0), SchemeSpec(kind="em_baseline"), grid,
            [2.0], paths=32, seed=1,
        )
        assert est.diverged
        assert est.sup_moment == math.inf
        assert math.isnan(est.stderr)
        assert 0.0 < est.at_time <= grid.times[-1]

    def test_transient_from_a_shifted_origin_dominates_the_sup(self):
        grid = build_grid(HARMONIC, 1000)
        est, = moment_scan(
            ou_model(a=1.0, sigma=1.0), SchemeSpec(kind="bem"), grid, [2.0],
            m=500, x0=[3.0], paths=64, seed=11,
        )
        assert est.sup_moment > 5.0
        assert est.at_time - grid.times[500] < 0.1

    def test_identical_seeds_reproduce_and_seeds_matter(self):
        grid = build_grid(HARMONIC, 300)
        model = ou_model(a=1.0, sigma=1.0)
        a1, = moment_scan(model, SchemeSpec(kind="bem"), grid, [2.0], paths=32, seed=4)
        a2, = moment_scan(model, SchemeSpec(kind="bem"), grid, [2.0], paths=32, seed=4)
        b, = moment_scan(model, SchemeSpec(kind="bem"), grid, [2.0], paths=32, seed=5)
        assert a1 == a2
        assert a1.sup_moment != b.sup_moment

    def test_input_validation(self):
        grid = build_grid(HARMONIC, 50)
        model = ou_model(a=1.0, sigma=1.0)
        scheme = SchemeSpec(kind="bem")
        with pytest.raises(ConfigurationError, match="non-empty"):
            moment_scan(model, scheme, grid, [])
        with pytest.raises(ConfigurationError, match="> 0"):
            moment_scan(model, scheme, grid, [-1.0])
        with pytest.raises(ConfigurationError, match="0 <= m < horizon"):
            moment_scan(model, scheme, grid, [2.0], m=50)
        with pytest.raises(ConfigurationError, match="0 <= m < horizon"):
            moment_scan(model, scheme, grid, [2.0], horizon=51)
        with pytest.raises(ConfigurationError, match="shape"):
            moment_scan(model, scheme, grid, [2.0], x0=np.zeros(3))
        with pytest.raises(ConfigurationError, match="pair"):
            moment_scan(model, SchemeSpec(kind="exp_euler"), grid, [2.0])


class TestContractionFit:
    def test_zero_noise_difference_telescopes_at_every_checkpoint(self):
        grid = build_grid(HARMONIC, 1000)
        fit = contraction_fit(
            ou_model(a=1.0, sigma=0.0), SchemeSpec(kind="bem"), grid,
            1.5, -0.5, paths=4,
        )
        assert not fit.degenerate
        for t, dsq in zip(fit.times, fit.mean_sq_diffs):
            j = int(np.searchsorted(grid.times, t))
            assert grid.times[j] == pytest.approx(t, rel=1e-15)
            predicted = 4.0 * float(
                np.prod((1.0 + grid.steps[1 : j + 1]) ** -2)
            )
            assert dsq == pytest.approx(predicted, rel=1e-12)

    def test_shared_noise_cancels_in_the_linear_implicit_step(self):
        # three harmonic steps contract a unit difference to exactly 1/4
        grid = build_grid(HARMONIC, 3)
        fit = contraction_fit(
            ou_model(a=1.0, sigma=1.0), SchemeSpec(kind="bem"), grid,
            1.0, 0.0, paths=4, seed=2,
        )
        assert math.sqrt(fit.mean_sq_diffs[-1]) == pytest.approx(0.25, rel=1e-12)

    def test_fitted_rate_on_flat_steps_matches_the_per_step_factor(self):
        grid = build_grid(StepSpec(kind="constant", scale=1.0, cap=1.0), 60)
        fit = contraction_fit(
            ou_model(a=1.0, sigma=1.0), SchemeSpec(kind="bem"), grid,
            2.0, 0.0, paths=4, seed=2,
        )
        # per step the difference shrinks by 1/2, so on the root scale the
        # rate is log 2; the declared floor for this model sits at 1/3
        assert fit.rate >= 1.0 / 3.0
        assert fit.rate == pytest.approx(math.log(2.0), abs=0.05)
        assert fit.slope < 0.0

    def test_noise_amplitude_does_not_move_the_difference(self):
        grid = build_grid(HARMONIC, 500)
        loud = contraction_fit(
            ou_model(a=1.0, sigma=1.0), SchemeSpec(kind="bem"), grid,
            2.0, 0.0, paths=4, seed=8,
        )
        quiet = contraction_fit(
            ou_model(a=1.0, sigma=0.0), SchemeSpec(kind="bem"), grid,
            2.0, 0.0, paths=4, seed=8,
        )
        assert np.allclose(loud.mean_sq_diffs, quiet.mean_sq_diffs, rtol=1e-8)

    def test_coincident_starts_are_degenerate_not_an_error(self):
        grid = build_grid(HARMONIC, 50)
        fit = contraction_fit(
            ou_model(a=1.0, sigma=1.0), SchemeSpec(kind="bem"), grid,
            1.5, 1.5, paths=4,
        )
        assert fit.degenerate
        assert math.isnan(fit.rate)
        assert all(d == 0.0 for d in fit.mean_sq_diffs)

    def test_input_validation(self):
        grid = build_grid(HARMONIC, 50)
        model = ou_model(a=1.0, sigma=1.0)
        with pytest.raises(ConfigurationError, match=">= 1"):
            contraction_fit(model, SchemeSpec(kind="bem"), grid, 1.0, 0.0, paths=0)
        with pytest.raises(ConfigurationError, match="shape"):
            contraction_fit(model, SchemeSpec(kind="bem"), grid, np.zeros(2), 0.0)
        with pytest.raises(ConfigurationError, match="0 <= m < horizon"):
            contraction_fit(model, SchemeSpec(kind="bem"), grid, 1.0, 0.0, m=50)


class TestStrongOrderFit:
    LEVELS = [2**j for j in range(4, 11)]

    def test_strongly_dissipative_linear_model_fits_order_one(self):
        grid = build_grid(HARMONIC, 1024)
        fit = strong_order_fit(
            ou_model(a=2.0, sigma=1.0), grid, self.LEVELS, 2000, seed=5
        )
        assert not fit.exact
        assert 0.85 <= fit.alpha <= 1.15
        assert fit.stderr > 0.0
        assert fit.ci_low < fit.alpha < fit.ci_high
        assert len(fit.taus) == len(self.LEVELS)

    def test_marginally_dissipative_linear_model_stays_in_band(self):
        grid = build_grid(HARMONIC, 1024)
        fit = strong_order_fit(
            ou_model(a=1.0, sigma=1.0), grid, self.LEVELS, 2000, seed=5
        )
        assert 0.75 <= fit.alpha <= 1.05

    def test_errors_shrink_with_the_step(self):
        grid = build_grid(HARMONIC, 1024)
        fit = strong_order_fit(
            ou_model(a=2.0, sigma=1.0), grid, self.LEVELS, 500, seed=6
        )
        assert all(np.diff(fit.taus) < 0.0)
        assert all(np.diff(fit.mean_sq_errors) < 0.0)

    def test_exact_transition_scheme_short_circuits(self):
        grid = build_grid(HARMONIC, 64)
        fit = strong_order_fit(
            ou_model(a=1.0, sigma=1.0), grid, [8, 16, 32], 100,
            scheme=SchemeSpec(kind="exact_ou"),
        )
        assert fit.exact
        assert fit.alpha is None
        assert "identically 0" in fit.detail

    def test_exact_scheme_needs_linear_coefficients(self):
        grid = build_grid(HARMONIC, 64)
        with pytest.raises(ConfigurationError, match="linear"):
            strong_order_fit(
                cubic_model(sigma=1.0), grid, [8, 16, 32], 100,
                scheme=SchemeSpec(kind="exact_ou"),
            )

    def test_nonlinear_fallback_self_convergence_smoke(self):
        grid = build_grid(HARMONIC, 256)
        fit = strong_order_fit(
            cubic_model(sigma=1.0), grid, [16, 64, 256], 128, seed=9
        )
        assert not fit.exact
        assert "step-halving" in fit.detail
        assert math.isfinite(fit.alpha)
        assert 0.3 < fit.alpha < 1.6

    def test_identical_seeds_reproduce(self):
        grid = build_grid(HARMONIC, 256)
        a = strong_order_fit(ou_model(a=2.0, sigma=1.0), grid, [16, 64, 256], 64, seed=3)
        b = strong_order_fit(ou_model(a=2.0, sigma=1.0), grid, [16, 64, 256], 64, seed=3)
        assert a == b

    def test_level_and_path_validation(self):
        grid = build_grid(HARMONIC, 256)
        model = ou_model(a=2.0, sigma=1.0)
        with pytest.raises(ConfigurationError, match="3 distinct levels"):
            strong_order_fit(model, grid, [16, 64], 64)
        with pytest.raises(ConfigurationError, match="3 distinct levels"):
            strong_order_fit(model, grid, [16, 16, 64], 64)
        with pytest.raises(ConfigurationError, match=r"within \[1"):
            strong_order_fit(model, grid, [16, 64, 512], 64)
        with pytest.raises(ConfigurationError, match=">= 8"):
            strong_order_fit(model, grid, [16, 64, 256], 4)
