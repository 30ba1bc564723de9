"""Wiggly descent checked against stationarity roots, the closed-form fast
limit, and the analytic critical slope of the cosine wiggle."""

import math

import numpy as np
import pytest

from mmflows.errors import (
    BifurcationError,
    DivergedError,
    IncreaseTMaxError,
    NearSingularError,
    UnsupportedScheduleError,
)
from mmflows.perturbation import PerturbationSchedule
from mmflows.wiggly import (
    PotentialSpec,
    WigglyConfig,
    _check_confinement,
    fast_limit_curves,
    fast_limit_velocity,
    homogenized_velocity,
    limit_motion,
    pinning_threshold,
    rescaled_step,
    rescaled_trajectory,
)

COSINE = PotentialSpec.cosine()
CONST1 = PerturbationSchedule.constant(1.0)
TWO_WEIGHTS = PerturbationSchedule.periodic([1.0, 2.0])

# roots of sin(2*pi*y) + T + ag*(y - y_prev) = 0 and of the critical-slope
# equation asin(T)/(2*pi) + T/ag = 1/2, frozen from scipy.optimize.brentq
STEP_ROOT_T05_AG10 = -0.030780425497054547
TIE_LO = -1.9293681451858771
TIE_HI = -1.0706318548141229
CRIT_AG05 = 0.23141603604620425
CRIT_AG08 = 0.35393707896210752
CRIT_AG10 = 0.42936814518587685
CRIT_AG15 = 0.59720762756197321


def cosine_table(n=2048, scale=1.0, offset=0.0, odd=False):
    s = np.arange(n) / n
    if odd:
        return np.sin(2 * np.pi * s) / (2 * np.pi)
    return offset - scale * np.cos(2 * np.pi * s) / (2 * np.pi)


def cfg(T, gamma, schedule=CONST1, y0=0.0, **kw):
    return WigglyConfig(T=T, gamma=gamma, schedule=schedule, y0=y0,
                        potential=COSINE, **kw)


class TestPotentialSpec:
    def test_builtin_cosine(self):
        assert COSINE.kind == "cosine"
        assert COSINE.lip_dw == pytest.approx(2 * math.pi)
        assert COSINE.w_scalar(0.25) == pytest.approx(0.0, abs=1e-15)
        assert COSINE.dw_scalar(0.25) == pytest.approx(1.0)

    def test_table_of_cosine_samples(self):
        pot = PotentialSpec.from_table(cosine_table())
        assert pot.kind == "table"
        s = np.linspace(0.0, 1.0, 401)
        gap = np.max(np.abs(pot.w(s) - COSINE.w(s)))
        assert gap < 1e-10
        # spline curvature peaks near (2 pi)^2 / (2 pi) scaled; bound only
        assert pot.lip_dw > 2 * math.pi * 0.9

    def test_table_rejects_wrong_peak(self):
        with pytest.raises(ValueError, match="peak"):
            PotentialSpec.from_table(cosine_table(scale=0.5))

    def test_table_rejects_nonzero_mean(self):
        with pytest.raises(ValueError, match="zero"):
            PotentialSpec.from_table(cosine_table(offset=0.01))

    def test_table_rejects_odd_wiggle(self):
        with pytest.raises(ValueError, match="even"):
            PotentialSpec.from_table(cosine_table(odd=True))

    def test_table_rejects_short_table(self):
        with pytest.raises(ValueError, match="8"):
            PotentialSpec.from_table([0.0, 0.1, 0.0, -0.1])

    def test_rejects_bad_lipschitz_bound(self):
        for lip in (0.0, -1.0, math.inf):
            with pytest.raises(ValueError):
                PotentialSpec(w=COSINE.w, dw=COSINE.dw, lip_dw=lip)

    def test_scalar_twins_default_to_wrappers(self):
        pot = PotentialSpec(w=COSINE.w, dw=COSINE.dw, lip_dw=2 * math.pi)
        assert pot.w_scalar(0.2) == float(pot.w(0.2))
        assert pot.dw_scalar(0.2) == float(pot.dw(0.2))


class TestWigglyConfig:
    def test_rejects_bad_slope_and_scale(self):
        for kw in ({"T": 0.0}, {"T": -1.0}, {"T": math.inf},
                   {"gamma": 0.0}, {"gamma": math.nan}):
            base = {"T": 1.0, "gamma": 1.0}
            base.update(kw)
            with pytest.raises(ValueError):
                WigglyConfig(schedule=CONST1, potential=COSINE, **base)

    def test_rejects_bad_solver_knobs(self):
        with pytest.raises(ValueError):
            cfg(1.0, 1.0, grid_factor=0.5)
        for tol in (0.0, 1e-3):
            with pytest.raises(ValueError):
                cfg(1.0, 1.0, refine_tol=tol)


class TestRescaledStep:
    def test_moderate_dissipation_example(self):
        y = rescaled_step(0.0, 1.0, cfg(0.5, 10.0))
        assert -0.35 <= y <= 0.0
        assert abs(math.sin(2 * math.pi * y) + 0.5 + 10.0 * y) < 1e-10
        assert y == pytest.approx(STEP_ROOT_T05_AG10, abs=1e-11)

    def test_huge_dissipation_pins(self):
        y = rescaled_step(0.37, 1e8, cfg(0.37, 1.0))
        assert abs(y - 0.37) < 1e-7

    def test_integer_shift_equivariance(self):
        base = cfg(1.37, 0.9, TWO_WEIGHTS, y0=0.22)
        lifted = cfg(1.37, 0.9, TWO_WEIGHTS, y0=3.22)
        ys = rescaled_trajectory(base, 50)
        zs = rescaled_trajectory(lifted, 50)
        assert np.max(np.abs(zs - (ys + 3.0))) < 1e-9

    def test_larger_slope_steps_lower(self):
        y = rescaled_step(0.13, 1.0, cfg(0.7, 1.0))
        z = rescaled_step(0.13, 1.0, cfg(1.9, 1.0))
        assert z <= y

    def test_symmetric_tie_raises(self):
        # vertex y_prev - T/(a*gamma) = -3/2 sits on a symmetry axis of the
        # even wiggle, so two exact global minimizers face off
        with pytest.raises(BifurcationError) as err:
            rescaled_step(0.0, 1.0, cfg(1.5, 1.0))
        lo, hi = err.value.context["candidates"]
        assert lo < hi
        assert lo == pytest.approx(TIE_LO, abs=1e-9)
        assert hi == pytest.approx(TIE_HI, abs=1e-9)
        assert lo + hi == pytest.approx(-3.0, abs=1e-9)

    def test_rejects_nonpositive_weight(self):
        with pytest.raises(ValueError):
            rescaled_step(0.0, 0.0, cfg(1.0, 1.0))

    def test_solver_knobs_change_nothing_material(self):
        loose = rescaled_step(0.0, 1.0, cfg(0.5, 10.0))
        tight = rescaled_step(0.0, 1.0, cfg(0.5, 10.0, grid_factor=8.0,
                                            refine_tol=1e-10))
        assert tight == pytest.approx(loose, abs=1e-8)


class TestTrajectoryAndConfinement:
    def test_shape_and_initial_datum(self):
        ys = rescaled_trajectory(cfg(1.37, 0.9, TWO_WEIGHTS, y0=0.05), 10)
        assert len(ys) == 11
        assert ys[0] == 0.05

    def test_needs_at_least_one_step(self):
        with pytest.raises(ValueError):
            rescaled_trajectory(cfg(1.0, 1.0), 0)

    def test_confinement_checker(self):
        _check_confinement(np.array([0.0, 0.9, -0.3, -0.1]))
        with pytest.raises(DivergedError):
            _check_confinement(np.array([0.0, 2.5]))
        with pytest.raises(DivergedError):
            # the climb happens downstream of a low point
            _check_confinement(np.array([0.0, -2.0, -0.5]))

    def test_descent_never_climbs_a_full_well(self):
        ys = rescaled_trajectory(cfg(1.37, 0.9, TWO_WEIGHTS, y0=0.05), 400)
        suffix_max = np.maximum.accumulate(ys[::-1])[::-1]
        assert np.all(suffix_max[1:] <= ys[:-1] + 1.0 + 1e-9)


class TestHomogenizedVelocity:
    def test_pinned_below_threshold(self):
        v = homogenized_velocity(cfg(0.2, 1.0), 2000)
        assert abs(v.value) <= v.error_bound
        assert v.value >= -v.error_bound

    def test_constant_weight_matches_rescaled_gamma(self):
        fast = homogenized_velocity(cfg(1.37, 0.9, PerturbationSchedule.constant(2.0),
                                        y0=0.05), 4000)
        direct = homogenized_velocity(cfg(1.37, 1.8, y0=0.05), 4000)
        assert abs(fast.value - direct.value) <= 4.0 / (4000 - 100)

    def test_independent_of_initial_datum(self):
        starts = (0.0, 0.37, -1.2, 3.1, 0.5001)
        vals = [homogenized_velocity(cfg(1.37, 0.9, TWO_WEIGHTS, y0=y0), 4000).value
                for y0 in starts]
        bound = 4.0 / (4000 - 200)
        assert max(vals) - min(vals) <= bound

    def test_monotone_in_slope_and_nonnegative(self):
        vals = []
        for T in (0.3, 0.9, 1.37, 1.8, 2.4):
            v = homogenized_velocity(cfg(T, 0.9, TWO_WEIGHTS, y0=0.05), 4000)
            assert v.value >= -v.error_bound
            vals.append(v.value)
        bound = 4.0 / (4000 - 200)
        assert all(a <= b + bound for a, b in zip(vals, vals[1:]))

    def test_locked_plateau_values(self):
        # the two-weight schedule locks onto rational well-per-step rates
        for T, plateau in ((0.9, 0.75), (1.37, 1.0), (1.8, 1.5), (2.4, 2.0)):
            v = homogenized_velocity(cfg(T, 0.9, TWO_WEIGHTS, y0=0.05), 4000)
            assert v.value == pytest.approx(plateau, abs=v.error_bound)
        assert v.value == pytest.approx(2.0, abs=1e-9)

    def test_estimate_bookkeeping(self):
        v = homogenized_velocity(cfg(1.37, 0.9, TWO_WEIGHTS, y0=0.05), 4000)
        assert v.burn_in == 200
        assert v.n_steps == 4000
        assert v.error_bound == pytest.approx(2.0 / 3800)

    def test_default_step_count(self):
        v = homogenized_velocity(cfg(1.37, 1.8, y0=0.05))
        assert v.n_steps == 10_000

    def test_rejects_explicit_schedule(self):
        sched = PerturbationSchedule.explicit([1.0, 2.0], 1.0)
        with pytest.raises(UnsupportedScheduleError):
            homogenized_velocity(cfg(1.0, 1.0, sched))

    def test_rejects_bad_step_counts(self):
        base = cfg(1.37, 0.9, TWO_WEIGHTS, y0=0.05)
        with pytest.raises(ValueError):
            homogenized_velocity(base, 4001)
        with pytest.raises(ValueError):
            homogenized_velocity(base, 200)


class TestPinningThreshold:
    def test_matches_analytic_critical_slope(self):
        r = pinning_threshold(CONST1, 1.0, t_max=2.0, tol=2e-3)
        assert r.value == pytest.approx(CRIT_AG10, abs=2e-3)

    def test_two_weight_schedule_sees_only_min_weight(self):
        mixed = pinning_threshold(TWO_WEIGHTS, 0.8, t_max=2.0, tol=2e-3)
        plain = pinning_threshold(CONST1, 0.8, t_max=2.0, tol=2e-3)
        assert abs(mixed.value - plain.value) <= 4e-3
        assert mixed.value == pytest.approx(CRIT_AG08, abs=2e-3)

    def test_weight_scale_equivalence_hits_exact_half(self):
        # at a*gamma = 1.2 the critical slope solves asin(T)/(2 pi) + T/1.2
        # = 1/2 at exactly T = 1/2 (1/12 + 5/12), which the dyadic probe hits
        # dead on; the probe run ties from every start and short-circuits
        scaled = pinning_threshold(PerturbationSchedule.constant(2.0), 0.6,
                                   t_max=2.0, tol=2e-3)
        plain = pinning_threshold(CONST1, 1.2, t_max=2.0, tol=2e-3)
        assert scaled.value == 0.5
        assert plain.value == 0.5
        assert scaled.probes <= 5

    def test_monotone_in_weight_scale(self):
        frozen = {0.5: CRIT_AG05, 1.0: CRIT_AG10, 1.5: CRIT_AG15}
        got = {}
        for ag, expect in frozen.items():
            r = pinning_threshold(CONST1, ag, t_max=2.0, tol=2e-3)
            assert r.value == pytest.approx(expect, abs=2e-3)
            got[ag] = r.value
        assert got[0.5] <= got[1.0] + 4e-3
        assert got[1.0] <= got[1.5] + 4e-3

    def test_bracket_too_small(self):
        with pytest.raises(IncreaseTMaxError):
            pinning_threshold(CONST1, 1.0, t_max=0.3, tol=2e-3)

    def test_result_bookkeeping(self):
        r = pinning_threshold(CONST1, 1.0, t_max=2.0, tol=5e-3)
        assert 0.0 < r.value < 2.0
        assert r.tol == 5e-3
        assert r.probe_steps == 1000
        assert r.total_steps == r.probes * r.probe_steps

    def test_rejects_bad_arguments(self):
        with pytest.raises(UnsupportedScheduleError):
            pinning_threshold(PerturbationSchedule.explicit([1.0], 1.0), 1.0)
        with pytest.raises(ValueError):
            pinning_threshold(CONST1, 1.0, t_max=0.0)
        with pytest.raises(ValueError):
            pinning_threshold(CONST1, 1.0, tol=1.5)


class TestFastLimitVelocity:
    def test_matches_closed_form(self):
        # for the cosine wiggle the period integral inverts to sqrt(T^2 - 1)
        for T in (1.5, 2.0, 5.0):
            assert fast_limit_velocity(T) == pytest.approx(
                math.sqrt(T * T - 1.0), abs=1e-8)

    def test_sqrt_three_at_two(self):
        assert fast_limit_velocity(2.0) == pytest.approx(math.sqrt(3.0), abs=1e-8)

    def test_pinned_below_unit_slope(self):
        assert fast_limit_velocity(0.8) == 0.0
        assert fast_limit_velocity(1.0) == 0.0

    def test_asymptotically_linear(self):
        T = 1000.0
        assert abs(fast_limit_velocity(T) / T - 1.0) < 1e-3

    def test_near_singular_refused(self):
        with pytest.raises(NearSingularError):
            fast_limit_velocity(1.0 + 1e-10)

    def test_rejects_nonpositive_slope(self):
        for T in (0.0, -1.0, math.inf):
            with pytest.raises(ValueError):
                fast_limit_velocity(T)

    def test_table_potential_agrees(self):
        pot = PotentialSpec.from_table(cosine_table())
        assert fast_limit_velocity(2.0, pot) == pytest.approx(
            math.sqrt(3.0), abs=1e-6)


class TestFastLimitCurves:
    def test_envelope_at_unit_time(self):
        curves = fast_limit_curves(2.0, CONST1, u0=0.0, horizon=1.0)
        assert curves.times[-1] == 1.0
        assert curves.unwiggled[-1] == pytest.approx(-2.0)
        assert curves.wiggle_limited[-1] == pytest.approx(-math.sqrt(3.0), abs=1e-8)

    def test_pinned_curve_is_flat(self):
        curves = fast_limit_curves(0.5, TWO_WEIGHTS, u0=0.3, horizon=2.0)
        assert np.all(curves.wiggle_limited == 0.3)
        assert curves.slope_wiggle_limited == 0.0

    def test_constant_schedule_slope_is_minus_t(self):
        curves = fast_limit_curves(1.7, CONST1, u0=0.0, horizon=1.0)
        assert curves.slope_unwiggled == -1.7

    def test_harmonic_mean_scales_both_slopes(self):
        curves = fast_limit_curves(2.0, TWO_WEIGHTS, u0=0.0, horizon=1.0)
        # a* = 4/3 for weights [1, 2]
        assert curves.slope_unwiggled == pytest.approx(-1.5)
        assert curves.slope_wiggle_limited == pytest.approx(
            -math.sqrt(3.0) * 0.75, abs=1e-8)

    def test_rejects_degenerate_grid(self):
        with pytest.raises(ValueError):
            fast_limit_curves(2.0, CONST1, 0.0, horizon=0.0)
        with pytest.raises(ValueError):
            fast_limit_curves(2.0, CONST1, 0.0, horizon=1.0, samples=1)


class TestLimitMotion:
    def test_pinned_motion_is_flat(self):
        m = limit_motion(cfg(0.2, 1.0), horizon=1.0, n_steps=2000)
        assert abs(m.slope) <= 1.0 * m.velocity.error_bound
        assert m.intercept == 0.0

    def test_constant_weight_reduces_to_rescaled_gamma(self):
        mixed = limit_motion(cfg(1.37, 0.9, PerturbationSchedule.constant(2.0),
                                 y0=0.05), horizon=2.0, n_steps=4000)
        plain = homogenized_velocity(cfg(1.37, 1.8, y0=0.05), 4000)
        assert mixed.slope == pytest.approx(-0.9 * plain.value,
                                            abs=0.9 * 4.0 / 3900)

    def test_sampled_trajectory_slope_matches(self):
        m = limit_motion(cfg(1.37, 0.9, TWO_WEIGHTS, y0=0.05),
                         horizon=2.0, n_steps=4000)
        win = (m.times >= 1.0) & (m.times <= 2.0)
        t, u = m.times[win], m.trajectory[win]
        sampled = (u[-1] - u[0]) / (t[-1] - t[0])
        assert abs(sampled - m.slope) <= 3.0 * 0.9 / (np.sum(win) - 1)

    def test_scales_and_intercept(self):
        m = limit_motion(cfg(1.37, 0.9, TWO_WEIGHTS, y0=0.05),
                         horizon=2.0, n_steps=4000)
        assert m.tau == pytest.approx(2.0 / 4000)
        assert m.eps == pytest.approx(0.9 * 2.0 / 4000)
        assert m.intercept == pytest.approx(m.eps * 0.05)
        assert m.trajectory[0] == pytest.approx(m.intercept)
        assert len(m.times) == 4001

    def test_rejects_bad_horizon(self):
        with pytest.raises(ValueError):
            limit_motion(cfg(1.0, 1.0), horizon=0.0)


class TestComparisonProperty:
    def test_steeper_slope_stays_below(self):
        # z runs under slope S >= T from z0 <= y0; ordering must persist
        rng = np.random.default_rng(20260822)
        checked = 0
        for _ in range(1000):
            T = rng.uniform(0.1, 2.2)
            S = T + rng.uniform(0.0, 1.0)
            y0 = rng.uniform(-2.0, 2.0)
            z0 = y0 - rng.uniform(0.0, 1.5)
            gamma = rng.uniform(0.3, 2.0)
            n_weights = rng.integers(1, 4)
            sched = PerturbationSchedule.periodic(
                list(rng.uniform(0.5, 3.0, n_weights)))
            try:
                ys = rescaled_trajectory(cfg(T, gamma, sched, y0=y0), 100)
                zs = rescaled_trajectory(cfg(S, gamma, sched, y0=z0), 100)
            except BifurcationError:
                continue
            assert np.all(zs <= ys + 1e-10)
            checked += 1
        assert checked >= 950
