"""Left-state solve, self-similar temperature profile, and the wave field.

Oracles used here and nowhere in the implementation:
  * the closed-form quasineutral pressure of each electron family turns the
    left-state equation into a scalar equation solvable by plain bisection;
  * for boltzmann electrons with R = A_e the volume along the wave is the
    affine map v(theta) = (R theta + A_e) / (p_minus + A_e/v_minus).
Frozen values below were computed from those closed forms by hand.
"""

import math
import os

import numpy as np
import pytest

from nspcontact import electron_density as ed
from nspcontact import wave_profile as wp

GAS = wp.GasParams(R=1.0, gamma=5.0 / 3.0, mu=1.0, kappa=1.0)
BOLTZ = ed.make_model("boltzmann", A_e=1.0)
RIGHT = (1.0, 0.0, 1.0)
COARSE = wp.ProfileNumerics(n_nodes=801)


def closed_form_pressure(model, v, ref):
    if model.kind == "boltzmann":
        return model.A_e * (1.0 / v - 1.0 / ref)
    ge = model.gamma_e
    return model.A_e * (v**-ge - ref**-ge)


def test_left_state_frozen_example_boltzmann():
    # p_minus = 1.2: v_minus = 1.25, theta_minus = 1.5 (hand computation)
    end = wp.solve_left_state(RIGHT, 1.2, BOLTZ, GAS)
    assert abs(end.v_minus - 1.25) < 1e-12
    assert abs(end.theta_minus - 1.5) < 1e-12
    assert abs(end.phi_minus - math.log(1.25)) < 1e-12
    assert end.phi_plus == 0.0
    assert abs(end.delta - 0.5) < 1e-12


def test_left_state_against_closed_form_bisection():
    """Dual route: eliminate theta via the total-pressure relation and
    bisect on volume using only the closed-form electron pressure."""
    rng = np.random.default_rng(8)
    models = [BOLTZ, ed.make_model("generalized", A_e=1.3, gamma_e=1.7)]
    for model in models:
        p_plus = GAS.R * RIGHT[2] / RIGHT[0]
        for _ in range(10):
            p_minus = p_plus * (1.0 + rng.uniform(0.01, 0.35))

            # implementation result
            end = wp.solve_left_state(RIGHT, p_minus, model, GAS)

            # oracle: theta drops out since R*theta/v = p_minus - p^phi(v),
            # and matching the far state requires p^phi continuity:
            # K(v) = p^phi(v; v_plus) - (p_plus - p_minus) has one root
            def K(v):
                return closed_form_pressure(model, v, RIGHT[0]) - (p_plus - p_minus)

            # p_minus > p_plus needs electron pressure below its far value,
            # so the root sits at v > v_plus
            lo, hi = RIGHT[0], 50.0
            assert K(lo) > 0.0 > K(hi)
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if K(mid) > 0.0:
                    lo = mid
                else:
                    hi = mid
            v_oracle = 0.5 * (lo + hi)
            # the boundary gas pressure is p_minus itself
            theta_oracle = p_minus * v_oracle / GAS.R
            assert abs(end.v_minus - v_oracle) < 1e-10
            assert abs(end.theta_minus - theta_oracle) < 1e-10


def test_left_state_rejects_out_of_range_pressure():
    with pytest.raises(ValueError):
        wp.solve_left_state(RIGHT, -0.1, BOLTZ, GAS)
    # generalized electrons have a finite admissible pressure interval;
    # a huge boundary pressure cannot be matched
    gen = ed.make_model("generalized", A_e=1.0, gamma_e=2.0)
    with pytest.raises(wp.NoBracketError):
        wp.solve_left_state(RIGHT, 50.0, gen, GAS)


def test_p_minus_for_strength_frozen_value_and_round_trip():
    # delta = 0.1 with the baseline boltzmann setup: p_minus = 22/21 exactly
    p = wp.p_minus_for_strength(0.1, BOLTZ, GAS, RIGHT)
    assert abs(p - 22.0 / 21.0) < 1e-12
    end = wp.solve_left_state(RIGHT, p, BOLTZ, GAS)
    assert abs(end.theta_minus - 1.1) < 1e-10
    assert abs(end.delta - 0.1) < 1e-10
    # delta = 0 returns the far pressure exactly
    assert wp.p_minus_for_strength(0.0, BOLTZ, GAS, RIGHT) == 1.0


def test_volume_map_matches_affine_closed_form():
    """boltzmann, R = A_e = 1: v(theta) = (theta + 1)/(p_minus + 1/v_minus)."""
    end = wp.solve_left_state(RIGHT, 1.2, BOLTZ, GAS)
    # delta = 0.5 sits above the default strength cap; raise it knowingly
    wide = wp.ProfileNumerics(n_nodes=801, delta_cap=0.6)
    profile = wp.solve_self_similar(end, GAS.kappa, GAS, BOLTZ, wide)
    wave = wp.ContactWaveField(end, profile, BOLTZ, GAS)
    denom = end.p_minus + 1.0 / end.v_minus
    thetas = np.linspace(end.theta_plus, end.theta_minus, 41)
    want = (thetas + 1.0) / denom
    got = wp.v_of_theta(thetas, wave)
    assert np.max(np.abs(got - want)) < 1e-10
    # f' is the constant 1/denom here, g = R/(gamma-1) + (R theta/v) f'
    assert np.max(np.abs(wp.f_prime(thetas, wave) - 1.0 / denom)) < 1e-9
    g_want = 1.5 + (thetas / want) / denom
    assert np.max(np.abs(wp.g_of_theta(thetas, wave) - g_want)) < 1e-9


def test_fprime_and_g_frozen_point_values():
    end = wp.solve_left_state(RIGHT, 1.2, BOLTZ, GAS)
    wide = wp.ProfileNumerics(n_nodes=801, delta_cap=0.6)
    profile = wp.solve_self_similar(end, GAS.kappa, GAS, BOLTZ, wide)
    wave = wp.ContactWaveField(end, profile, BOLTZ, GAS)
    assert abs(wp.f_prime(1.0, wave) - 0.5) < 1e-10
    assert abs(wp.g_of_theta(1.0, wave) - 2.0) < 1e-10


@pytest.fixture(scope="module")
def baseline_wave():
    p = wp.p_minus_for_strength(0.1, BOLTZ, GAS, RIGHT)
    end = wp.solve_left_state(RIGHT, p, BOLTZ, GAS)
    profile = wp.solve_self_similar(end, GAS.kappa, GAS, BOLTZ)
    return wp.ContactWaveField(end, profile, BOLTZ, GAS)


def test_bvp_residual_endpoints_monotone(baseline_wave):
    prof = baseline_wave.profile
    end = baseline_wave.end_states
    assert prof.residual_norm < 1e-10
    assert abs(prof.theta[0] - end.theta_minus) < 1e-8
    assert abs(prof.theta[-1] - end.theta_plus) < 1e-8
    diffs = np.diff(prof.theta)
    assert np.all(diffs <= 0.0)  # hotter boundary relaxes to the far state
    gap = np.abs(prof.theta[:-1] - end.theta_plus)
    active = gap > 1e3 * np.finfo(float).eps * end.theta_minus
    assert np.all(diffs[active] < 0.0)


def test_bvp_self_convergence_second_order():
    p = wp.p_minus_for_strength(0.1, BOLTZ, GAS, RIGHT)
    end = wp.solve_left_state(RIGHT, p, BOLTZ, GAS)
    sols = {}
    for mult in (1, 2, 4):
        num = wp.ProfileNumerics(n_nodes=250 * mult + 1)
        sols[mult] = wp.solve_self_similar(end, GAS.kappa, GAS, BOLTZ, num)
    e12 = np.max(np.abs(sols[1].theta - sols[2].theta[::2]))
    e24 = np.max(np.abs(sols[2].theta - sols[4].theta[::2]))
    assert abs(e12 / e24 - 4.0) < 0.8


def test_zero_strength_profile_is_constant():
    end = wp.solve_left_state(RIGHT, 1.0, BOLTZ, GAS)
    assert end.delta == 0.0
    profile = wp.solve_self_similar(end, GAS.kappa, GAS, BOLTZ, COARSE)
    assert np.all(profile.theta == end.theta_plus)
    assert np.all(profile.dtheta == 0.0)
    wave = wp.ContactWaveField(end, profile, BOLTZ, GAS)
    r1, r2, r3 = wp.wave_residuals(wave, 1.0)
    assert max(r1, r2, r3) < 1e-10


def test_evaluate_wave_far_field_and_boundary(baseline_wave):
    end = baseline_wave.end_states
    x = np.array([0.0, 5.0, 500.0, 1e6])
    out = wp.evaluate_wave(baseline_wave, x, 2.0)
    assert abs(out.theta[0] - end.theta_minus) < 1e-8
    assert abs(out.theta[-1] - end.theta_plus) < 1e-14
    assert abs(out.v[-1] - end.v_plus) < 1e-14
    assert abs(out.u[-1] - end.u_plus) < 1e-12
    assert abs(out.phi[-1] - end.phi_plus) < 1e-14
    assert out.dx_theta[-1] == 0.0


def test_evaluate_wave_volume_velocity_compatibility(baseline_wave):
    """The kinematic relation: time derivative of v equals x-derivative of u."""
    x = np.linspace(0.5, 30.0, 300)
    t = 2.0
    dt = 1e-5
    lo = wp.evaluate_wave(baseline_wave, x, t - dt)
    hi = wp.evaluate_wave(baseline_wave, x, t + dt)
    dv_dt = (hi.v - lo.v) / (2.0 * dt)
    mid = wp.evaluate_wave(baseline_wave, x, t)
    assert np.max(np.abs(dv_dt - mid.dx_u)) < 1e-6


def test_evaluate_wave_dx_consistency(baseline_wave):
    x = np.linspace(1.0, 25.0, 200)
    t = 1.5
    dx = 1e-5
    lo = wp.evaluate_wave(baseline_wave, x - dx, t)
    hi = wp.evaluate_wave(baseline_wave, x + dx, t)
    mid = wp.evaluate_wave(baseline_wave, x, t)
    for name in ("theta", "v", "u", "phi"):
        fdiff = (getattr(hi, name) - getattr(lo, name)) / (2.0 * dx)
        stated = getattr(mid, "dx_" + name)
        assert np.max(np.abs(fdiff - stated)) < 2e-6, name


def test_decay_integrals_exact_time_scaling(baseline_wave):
    """The integrals transform exactly under the self-similar stretching, so
    ratios between times are powers of s^2 = (1+t) with no quadrature error."""
    i0 = wp.profile_decay_integrals(baseline_wave, 0.0)
    i3 = wp.profile_decay_integrals(baseline_wave, 3.0)
    assert abs(i0[0] / i3[0] - 8.0) < 1e-10   # I4 ~ s^-3
    assert abs(i0[1] / i3[1] - 8.0) < 1e-10   # I2xx ~ s^-3
    assert abs(i0[2] / i3[2] - 32.0) < 1e-9   # I2xxx ~ s^-5
    assert abs(i0[3] / i3[3] - 1.0) < 1e-12   # Ix invariant


def test_lp_distance_scaling_and_positivity(baseline_wave):
    d0 = wp.lp_distance_to_sharp(baseline_wave, 1.0, 0.0)
    d3 = wp.lp_distance_to_sharp(baseline_wave, 1.0, 3.0)
    assert d0 > 0.0
    # the v/theta/phi channels stretch exactly with s = sqrt(1+t) while the
    # velocity channel scales like 1/s times the stretching, so the total
    # sits strictly between constant and exact doubling
    assert 1.0 < d3 / d0 < 2.0
    with pytest.raises(ValueError):
        wp.lp_distance_to_sharp(baseline_wave, 0.5, 1.0)


def test_kappa_rescaling_collapse():
    """theta_kappa(xi) = theta_1(xi/sqrt(kappa)) for the family of BVPs."""
    p = wp.p_minus_for_strength(0.1, BOLTZ, GAS, RIGHT)
    end = wp.solve_left_state(RIGHT, p, BOLTZ, GAS)
    num1 = wp.ProfileNumerics(xi_max=20.0, n_nodes=2001)
    num4 = wp.ProfileNumerics(xi_max=40.0, n_nodes=4001)
    gas4 = wp.GasParams(R=GAS.R, gamma=GAS.gamma, mu=GAS.mu, kappa=4.0)
    prof1 = wp.solve_self_similar(end, 1.0, GAS, BOLTZ, num1)
    prof4 = wp.solve_self_similar(end, 4.0, gas4, BOLTZ, num4)
    # prof4's grid is 0..40 step 0.01; every second node sits at 2*xi of
    # prof1's grid (0..20 step 0.01), and sqrt(kappa) = 2
    assert prof4.xi_grid[2] == pytest.approx(2.0 * prof1.xi_grid[1])
    assert np.max(np.abs(prof4.theta[::2] - prof1.theta)) < 1e-6


def test_gaussian_tail_bound(baseline_wave):
    C, c1 = wp.fit_gaussian_tail(baseline_wave)
    assert C > 0.0 and c1 > 0.0
    end = baseline_wave.end_states
    xi = baseline_wave.profile.xi_grid
    gap = np.abs(baseline_wave.profile.theta - end.theta_plus)
    bound = C * end.delta * np.exp(-c1 * xi**2)
    # pointwise above the 1e-12 noise floor (the fit's stated coverage)
    usable = gap > 1e-12
    assert np.all(gap[usable] <= bound[usable] * (1.0 + 1e-9))


def test_save_load_round_trip_bitwise(baseline_wave, tmp_path):
    path = os.path.join(tmp_path, "profile.txt")
    wp.save_profile(baseline_wave, path)
    loaded = wp.load_profile(path)
    assert np.array_equal(loaded.profile.xi_grid, baseline_wave.profile.xi_grid)
    assert np.array_equal(loaded.profile.theta, baseline_wave.profile.theta)
    assert np.array_equal(loaded.v_nodes, baseline_wave.v_nodes)
    assert loaded.end_states == baseline_wave.end_states
    # derived tables rebuilt from the same bytes are identical
    assert np.array_equal(loaded.d2theta, baseline_wave.d2theta)
    # a second save produces identical bytes
    path2 = os.path.join(tmp_path, "profile2.txt")
    wp.save_profile(loaded, path2)
    assert open(path, "rb").read() == open(path2, "rb").read()


def test_wave_residual_time_decay(baseline_wave):
    r1 = wp.wave_residuals(baseline_wave, 1.0)
    r4 = wp.wave_residuals(baseline_wave, 4.0)
    # each residual shrinks with time
    assert all(b < a for a, b in zip(r1, r4))


def test_gas_params_validation():
    with pytest.raises(ValueError, match="gamma must exceed 1"):
        wp.GasParams(R=1.0, gamma=1.0, mu=1.0, kappa=1.0)
    with pytest.raises(ValueError):
        wp.GasParams(R=-1.0, gamma=1.4, mu=1.0, kappa=1.0)
