"""Grid construction and integer-clock subsequence tests.

Oracle values are computed independently here (exact rationals for harmonic
partial sums, closed forms for power/constant laws) and frozen as literals
where they are short enough to eyeball.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lilstep import (
    ConfigurationError,
    HorizonError,
    StepSpec,
    build_grid,
    quasi_uniform_index,
    tilde_of,
)


def harmonic_times_exact(n: int) -> list[Fraction]:
    out = [Fraction(0)]
    for k in range(1, n + 1):
        out.append(out[-1] + Fraction(1, k))
    return out


class TestBuildGrid:
    def test_harmonic_first_steps(self):
        g = build_grid(StepSpec("harmonic"), 3)
        np.testing.assert_allclose(g.steps, [0.0, 1.0, 0.5, 1.0 / 3.0], rtol=0, atol=0)
        np.testing.assert_allclose(
            g.times, [0.0, 1.0, 1.5, 1.5 + 1.0 / 3.0], rtol=1e-15
        )
        assert g.n_max == 3
        assert g.tau_bar == 1.0

    def test_power_step_sixteen_is_exact_eighth(self):
        g = build_grid(StepSpec("power", theta=0.75), 16)
        assert abs(g.steps[16] - 0.125) <= 1e-12

    def test_constant_times(self):
        g = build_grid(StepSpec("constant", scale=0.5), 4)
        np.testing.assert_array_equal(g.times, [0.0, 0.5, 1.0, 1.5, 2.0])
        assert not g.spec.vanishing

    def test_cap_clips_early_steps(self):
        g = build_grid(StepSpec("harmonic", scale=3.0, cap=1.0), 4)
        np.testing.assert_allclose(g.steps[1:], [1.0, 1.0, 1.0, 0.75], rtol=1e-15)
        assert g.tau_bar == 1.0

    def test_sentinel_step(self):
        g = build_grid(StepSpec("power", theta=0.5), 7)
        assert g.steps[0] == 0.0
        assert g.times[0] == 0.0

    @pytest.mark.parametrize(
        "bad_spec_kwargs, fragment",
        [
            (dict(kind="harmonic", scale=0.0), "grid.scale"),
            (dict(kind="harmonic", scale=-2.0), "grid.scale"),
            (dict(kind="power", theta=0.0), "grid.theta"),
            (dict(kind="power", theta=1.5), "grid.theta"),
            (dict(kind="harmonic", cap=0.0), "grid.cap"),
            (dict(kind="geometric"), "grid.kind"),
        ],
    )
    def test_invalid_spec_names_parameter(self, bad_spec_kwargs, fragment):
        with pytest.raises(ConfigurationError, match=fragment):
            StepSpec(**bad_spec_kwargs)

    def test_invalid_step_count(self):
        with pytest.raises(ConfigurationError, match="n_steps"):
            build_grid(StepSpec("harmonic"), 0)
        with pytest.raises(ConfigurationError, match="n_steps"):
            build_grid(StepSpec("harmonic"), 2.5)  # type: ignore[arg-type]

    def test_times_match_exact_rationals(self):
        # Compensated accumulation should sit within a few ulps of the exact
        # value even after thousands of terms.
        n = 2000
        g = build_grid(StepSpec("harmonic"), n)
        exact = harmonic_times_exact(n)
        for idx in (1, 17, 256, 1999, 2000):
            rel = abs(g.times[idx] - float(exact[idx])) / float(exact[idx])
            assert rel < 5e-15

    def test_times_match_fsum_long_run(self):
        n = 100_000
        g = build_grid(StepSpec("power", theta=0.75, scale=0.7), n)
        tail = math.fsum((0.7 * k ** -0.75 for k in range(1, n + 1)))
        assert abs(g.times[n] - tail) <= 1e-12 * tail

    def test_arrays_are_read_only(self):
        g = build_grid(StepSpec("harmonic"), 5)
        with pytest.raises(ValueError):
            g.times[0] = 1.0


class TestQuasiUniformIndex:
    def test_harmonic_subsequence_oracle(self):
        # t_1 = 1 <= 1 < t_2; t_3 = 1.8333 <= 2 < t_4; t_10 = 2.928968 <= 3 < t_11.
        g = build_grid(StepSpec("harmonic"), 12)
        ix = quasi_uniform_index(g, 3)
        np.testing.assert_array_equal(ix.n_of, [0, 1, 3, 10])
        assert ix.tilde_times[0] == 0.0
        assert ix.tilde_times[1] == 1.0
        assert abs(ix.tilde_times[2] - (1.5 + 1.0 / 3.0)) < 1e-12
        assert abs(ix.tilde_times[3] - 2.9289682539682538) < 1e-12
        assert abs(g.times[11] - 3.0198773448773446) < 1e-12
        assert ix.tilde_steps[0] == 0.0
        assert abs(ix.tilde_steps[3] - (ix.tilde_times[3] - ix.tilde_times[2])) == 0.0

    def test_horizon_error_names_first_unreachable_k(self):
        g = build_grid(StepSpec("harmonic"), 3)  # horizon 1.8333
        with pytest.raises(HorizonError, match="k = 2"):
            quasi_uniform_index(g, 2)
        ix = quasi_uniform_index(g, 1)
        np.testing.assert_array_equal(ix.n_of, [0, 1])

    def test_integer_horizon_is_not_bracketed(self):
        g = build_grid(StepSpec("constant", scale=0.5), 4)  # horizon exactly 2.0
        with pytest.raises(HorizonError):
            quasi_uniform_index(g, 2)

    def test_subsequence_bounds(self):
        g = build_grid(StepSpec("power", theta=0.6, scale=1.3, cap=0.9), 40_000)
        k_max = int(np.floor(g.horizon)) - 1
        ix = quasi_uniform_index(g, k_max)
        ks = np.arange(k_max + 1)
        assert np.all(ix.tilde_times <= ks)
        assert np.all(ix.tilde_times >= ks - g.tau_bar)
        assert np.all(ix.tilde_steps[1:] <= 1.0 + 2.0 * g.tau_bar)

    def test_tilde_time_series_dominated_by_shifted_integers(self):
        # sum tilde_t_k^-(1+eps) converges no slower than sum (k - tau_bar)^-(1+eps)
        g = build_grid(StepSpec("harmonic"), 200_000)
        ix = quasi_uniform_index(g, 11)
        eps = 0.5
        ks = np.arange(2, 12, dtype=np.float64)
        lhs = np.sum(ix.tilde_times[2:] ** -(1.0 + eps))
        rhs = np.sum((ks - g.tau_bar) ** -(1.0 + eps))
        assert lhs <= rhs + 1e-12


class TestTildeOf:
    def test_mid_block_lookup(self):
        g = build_grid(StepSpec("harmonic"), 12)
        ix = quasi_uniform_index(g, 3)
        # t_5 = 2.2833 lies in [tilde_t_2, tilde_t_3)
        assert abs(g.times[5] - 2.283333333333333) < 1e-12
        assert tilde_of(ix, g, 5) == 2
        assert tilde_of(ix, g, 1) == 1

    def test_fixed_points(self):
        g = build_grid(StepSpec("harmonic"), 50)
        ix = quasi_uniform_index(g, 4)
        for k in (1, 2, 3):
            assert tilde_of(ix, g, int(ix.n_of[k])) == k

    def test_beyond_coverage_raises(self):
        g = build_grid(StepSpec("harmonic"), 12)
        ix = quasi_uniform_index(g, 3)
        with pytest.raises(HorizonError):
            tilde_of(ix, g, int(ix.n_of[3]))  # t equals last subsequence time
        with pytest.raises(HorizonError):
            tilde_of(ix, g, 12)

    def test_bad_index_rejected(self):
        g = build_grid(StepSpec("harmonic"), 12)
        ix = quasi_uniform_index(g, 3)
        with pytest.raises(ConfigurationError):
            tilde_of(ix, g, 13)
        with pytest.raises(ConfigurationError):
            tilde_of(ix, g, -1)


@st.composite
def grid_cases(draw):
    kind = draw(st.sampled_from(["harmonic", "power", "constant"]))
    scale = draw(st.floats(0.05, 3.0))
    theta = draw(st.floats(0.05, 1.0))
    cap = draw(st.floats(0.1, 1.0))
    n = draw(st.integers(5, 800))
    return StepSpec(kind, scale=scale, theta=theta, cap=cap), n


@settings(max_examples=60, deadline=None)
@given(grid_cases(), st.data())
def test_round_trip_and_bracketing(case, data):
    spec, n = case
    g = build_grid(spec, n)
    k_max = int(np.floor(g.horizon - 1e-9))
    if k_max < 1:
        return
    ix = quasi_uniform_index(g, k_max)

    # n_of is the last index at or below the integer clock
    for k in range(k_max + 1):
        nk = int(ix.n_of[k])
        assert g.times[nk] <= k
        assert g.times[nk + 1] > k
        if 1 <= k < k_max:
            assert tilde_of(ix, g, nk) == k

    # any index below the last subsequence point lands in a consistent block
    n_probe = data.draw(st.integers(0, max(0, int(ix.n_of[k_max]) - 1)))
    k = tilde_of(ix, g, n_probe)
    assert ix.tilde_times[k] <= g.times[n_probe] < ix.tilde_times[k + 1]
