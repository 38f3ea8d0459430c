import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dro_lab.calibration import (
    CalibrationError,
    CalibrationInput,
    chi2_ball_size,
    chi2_min_sample,
    mmd_ball_size,
    sobolev_bound,
    rkhs_excess_bound,
    w1_ball_size,
)

# frozen against direct evaluation of the closed-form expressions
MMD_N100_D05 = 0.3447746830680817
CHI2_M1_D5_N1 = 8.042936856561438
CHI2_M5_D1_N200 = 0.1048357353758131
W1_D3_N100 = 0.39130103619430817
RKHS_BOUND_N400 = 0.7864915065723368
RKHS_BOUND_N100_D05 = 0.6895493661361634


class TestInputValidation:
    def test_bad_n(self):
        with pytest.raises(CalibrationError):
            CalibrationInput(n=0, delta=0.1)

    def test_bad_delta(self):
        for d in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(CalibrationError):
                CalibrationInput(n=10, delta=d)

    def test_bad_constants(self):
        with pytest.raises(CalibrationError):
            CalibrationInput(n=10, delta=0.1, c1=0.0)


class TestMmdBall:
    def test_frozen_value(self):
        assert mmd_ball_size(CalibrationInput(n=100, delta=0.05)) == pytest.approx(
            MMD_N100_D05, rel=1e-14
        )

    def test_scales_linearly_in_K(self):
        a = mmd_ball_size(CalibrationInput(n=50, delta=0.1, K=1.0))
        b = mmd_ball_size(CalibrationInput(n=50, delta=0.1, K=3.0))
        assert b == pytest.approx(3.0 * a, rel=1e-12)

    def test_shift_is_additive(self):
        base = mmd_ball_size(CalibrationInput(n=50, delta=0.1))
        shifted = mmd_ball_size(CalibrationInput(n=50, delta=0.1, shift=0.25))
        assert shifted == pytest.approx(base + 0.25, rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 10_000), st.floats(0.001, 0.999))
    def test_monotone(self, n, delta):
        inp = CalibrationInput(n=n, delta=delta)
        eta = mmd_ball_size(inp)
        assert eta > 0
        assert mmd_ball_size(CalibrationInput(n=n + n, delta=delta)) < eta
        smaller_delta = max(delta / 2, 1e-6)
        assert mmd_ball_size(CalibrationInput(n=n, delta=smaller_delta)) > eta


class TestW1Ball:
    def test_frozen_value(self):
        inp = CalibrationInput(n=100, delta=0.1, d=3, c1=2.0, c2=0.5)
        assert w1_ball_size(inp) == pytest.approx(W1_D3_N100, rel=1e-14)

    def test_low_dim_uses_exponent_two(self):
        a = w1_ball_size(CalibrationInput(n=100, delta=0.1, d=1))
        b = w1_ball_size(CalibrationInput(n=100, delta=0.1, d=2))
        assert a == pytest.approx(b, rel=1e-14)

    def test_needs_dimension(self):
        with pytest.raises(CalibrationError):
            w1_ball_size(CalibrationInput(n=100, delta=0.1))

    def test_sample_size_condition(self):
        # log(c1/delta)/c2 = log(1000) ~ 6.9, so n = 3 is too small
        with pytest.raises(CalibrationError):
            w1_ball_size(CalibrationInput(n=3, delta=0.001, d=2))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(20, 5000), st.floats(0.01, 0.5), st.integers(1, 8))
    def test_monotone_in_n(self, n, delta, d):
        a = w1_ball_size(CalibrationInput(n=n, delta=delta, d=d))
        b = w1_ball_size(CalibrationInput(n=2 * n, delta=delta, d=d))
        assert b < a


class TestChi2Ball:
    def test_frozen_values(self):
        assert chi2_ball_size(CalibrationInput(n=1, delta=0.5, m=1)) == pytest.approx(
            CHI2_M1_D5_N1, rel=1e-14
        )
        assert chi2_ball_size(CalibrationInput(n=200, delta=0.1, m=5)) == pytest.approx(
            CHI2_M5_D1_N200, rel=1e-14
        )

    def test_needs_m(self):
        with pytest.raises(CalibrationError):
            chi2_ball_size(CalibrationInput(n=10, delta=0.1))

    def test_min_sample_formula(self):
        inp = CalibrationInput(n=10, delta=0.1, m=2)
        want = math.ceil(1e6 * 4 / (0.25**3 * 0.01))
        assert chi2_min_sample(inp, 0.25) == want

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 1000), st.floats(0.01, 0.9), st.integers(1, 50))
    def test_monotone(self, n, delta, m):
        eta = chi2_ball_size(CalibrationInput(n=n, delta=delta, m=m))
        assert eta > 0
        assert chi2_ball_size(CalibrationInput(n=2 * n, delta=delta, m=m)) == pytest.approx(
            eta / 2, rel=1e-12
        )
        assert chi2_ball_size(CalibrationInput(n=n, delta=delta, m=m + 1)) > eta


class TestSobolevBound:
    def test_limit_small_C_approaches_concentration_term(self):
        # as C -> 0 the infimum is attained near R = 1
        bound, R = sobolev_bound(C=1e-12, d=4, n=100, delta=0.1)
        conc = (1.0 + math.sqrt(2.0 * math.log(10.0))) / 10.0
        assert bound == pytest.approx(2.0 * conc, rel=3e-2)
        assert R < 1.5

    def test_grid_restriction_respected(self):
        bound, R = sobolev_bound(C=1.0, d=2, n=100, delta=0.1, R_grid=[2.0, 4.0])
        assert R in (2.0, 4.0)
        direct = min(
            1.0 * math.log(r) ** (-2 / 16) + r * (1 + math.sqrt(2 * math.log(10))) / 10
            for r in (2.0, 4.0)
        )
        assert bound == pytest.approx(2.0 * direct, rel=1e-12)

    def test_bad_C(self):
        with pytest.raises(CalibrationError):
            sobolev_bound(C=0.0, d=2, n=100, delta=0.1)

    def test_decreases_with_n(self):
        b1, _ = sobolev_bound(C=1.0, d=4, n=100, delta=0.1)
        b2, _ = sobolev_bound(C=1.0, d=4, n=10_000, delta=0.1)
        assert b2 < b1


class TestRkhsExcessBound:
    def test_frozen_values(self):
        inp = CalibrationInput(n=400, delta=0.1)
        assert rkhs_excess_bound(inp, M=2.5) == pytest.approx(RKHS_BOUND_N400, rel=1e-14)
        inp2 = CalibrationInput(n=100, delta=0.05)
        assert rkhs_excess_bound(inp2, M=1.0) == pytest.approx(RKHS_BOUND_N100_D05, rel=1e-14)

    def test_is_twice_M_times_radius(self):
        inp = CalibrationInput(n=77, delta=0.2, K=1.5)
        assert rkhs_excess_bound(inp, M=3.0) == pytest.approx(
            6.0 * mmd_ball_size(inp), rel=1e-12
        )

    def test_ignores_shift(self):
        a = rkhs_excess_bound(CalibrationInput(n=50, delta=0.1), M=1.0)
        b = rkhs_excess_bound(CalibrationInput(n=50, delta=0.1, shift=0.7), M=1.0)
        assert a == b

    def test_bad_M(self):
        with pytest.raises(CalibrationError):
            rkhs_excess_bound(CalibrationInput(n=10, delta=0.1), M=-1.0)
