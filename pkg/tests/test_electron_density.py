"""Electron density closures.

The closed-form pressure of each family is an independent oracle here:
    boltzmann (A_e = a):   p(v; ref) = a (1/v - 1/ref)
    generalized:           p(v; ref) = a (v^{-ge} - ref^{-ge})
Both follow from substituting rho = 1/v into the integrand and integrating
by hand; the implementation itself only ever integrates numerically.
"""

import math

import numpy as np
import pytest

from nspcontact import electron_density as ed


BOLTZ = ed.make_model("boltzmann", A_e=1.0)
GEN = ed.make_model("generalized", A_e=1.0, gamma_e=2.0)
GEN_HOT = ed.make_model("generalized", A_e=0.7, gamma_e=1.4)


def closed_form_pressure(model, v, ref):
    if model.kind == "boltzmann":
        return model.A_e * (1.0 / v - 1.0 / ref)
    ge = model.gamma_e
    return model.A_e * (v**-ge - ref**-ge)


def test_make_model_validation():
    with pytest.raises(ValueError):
        ed.make_model("boltzmann", A_e=0.0)
    with pytest.raises(ValueError):
        ed.make_model("isothermal")
    with pytest.raises(ValueError):
        ed.make_model("generalized", gamma_e=0.8)
    # gamma_e = 1 collapses to boltzmann
    m = ed.make_model("generalized", A_e=2.0, gamma_e=1.0)
    assert m.kind == "boltzmann" and math.isinf(m.phi_max)


def test_density_reference_values():
    assert ed.density(BOLTZ, 0.0) == 1.0
    assert abs(ed.density(BOLTZ, 1.0) - math.exp(-1.0)) < 1e-15
    # generalized, gamma_e=2, A_e=1: rho = 1 - phi/2, phi_max = 2
    assert GEN.phi_max == 2.0
    assert abs(ed.density(GEN, 1.0) - 0.5) < 1e-15
    assert abs(ed.density(GEN, -2.0) - 2.0) < 1e-15


def test_density_is_positive_and_decreasing():
    rng = np.random.default_rng(42)
    for model in (BOLTZ, GEN, GEN_HOT):
        hi = 4.0 if math.isinf(model.phi_max) else model.phi_max - 1e-6
        phis = np.sort(rng.uniform(-5.0, hi, size=200))
        rho = ed.density(model, phis)
        assert np.all(rho > 0.0)
        assert np.all(np.diff(rho) < 0.0)


def test_derivatives_match_finite_differences():
    rng = np.random.default_rng(3)
    for model in (BOLTZ, GEN, GEN_HOT):
        hi = 3.0 if math.isinf(model.phi_max) else model.phi_max - 0.2
        phis = rng.uniform(-2.0, hi, size=60)
        d1, d2 = ed.density_derivatives(model, phis)
        eps = 1e-6
        fd1 = (ed.density(model, phis + eps) - ed.density(model, phis - eps)) / (2 * eps)
        assert np.max(np.abs(d1 - fd1) / (np.abs(fd1) + 1e-12)) < 1e-8
        # wider step for the second difference: cancellation kills 1e-6 here
        eps2 = 1e-4
        fd2 = (
            ed.density(model, phis + eps2)
            - 2.0 * ed.density(model, phis)
            + ed.density(model, phis - eps2)
        ) / eps2**2
        assert np.max(np.abs(d2 - fd2)) < 1e-6 * (1.0 + np.max(np.abs(d2)))
        assert np.all(d1 < 0.0)


def test_inverse_density_round_trip():
    rng = np.random.default_rng(11)
    for model in (BOLTZ, GEN, GEN_HOT):
        rho = rng.uniform(0.05, 5.0, size=100)
        phi = ed.inverse_density(model, rho)
        back = ed.density(model, phi)
        assert np.max(np.abs(back - rho)) < 1e-12
    with pytest.raises(ed.RangeError):
        ed.inverse_density(BOLTZ, -1.0)
    with pytest.raises(ed.RangeError):
        ed.inverse_density(GEN, 0.0)


def test_phi_max_guard_enforced():
    with pytest.raises(ed.DomainError):
        ed.density(GEN, GEN.phi_max)
    with pytest.raises(ed.DomainError):
        ed.density(GEN, GEN.phi_max - 1e-12)
    # just inside the guard is fine
    ed.density(GEN, GEN.phi_max - 1e-6)
    # a tiny density would need phi inside the guard
    with pytest.raises(ed.RangeError):
        ed.inverse_density(GEN, 1e-12)


def test_boltzmann_limit_of_generalized():
    """gamma_e -> 1+ recovers exp(-phi/A_e) pointwise."""
    phis = np.linspace(-1.5, 1.5, 7)
    target = ed.density(BOLTZ, phis)
    errs = []
    for ge in (1.1, 1.01, 1.001, 1.0001):
        m = ed.make_model("generalized", A_e=1.0, gamma_e=ge)
        errs.append(np.max(np.abs(ed.density(m, phis) - target)))
    # first-order convergence in gamma_e - 1
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))
    assert errs[-1] < 2e-3
    assert 0.05 < errs[-1] / errs[-2] < 0.2


def test_quasineutral_pressure_against_closed_form():
    rng = np.random.default_rng(5)
    for model in (BOLTZ, GEN, GEN_HOT):
        vs = rng.uniform(0.3, 3.0, size=25)
        refs = rng.uniform(0.3, 3.0, size=25)
        got = ed.quasineutral_pressure_batch(model, vs, refs, abs_tol=1e-13)
        want = closed_form_pressure(model, vs, refs)
        assert np.max(np.abs(got - want)) < 1e-11
        one = ed.quasineutral_pressure(model, vs[0], refs[0], abs_tol=1e-13)
        assert abs(one - want[0]) < 1e-12


def test_quasineutral_pressure_strictly_decreasing_in_v():
    vs = np.linspace(0.4, 2.5, 40)
    p = ed.quasineutral_pressure_batch(GEN_HOT, vs, np.full_like(vs, 1.0))
    assert np.all(np.diff(p) < 0.0)


def test_pressure_integrand_sign_and_consistency():
    vols = np.linspace(0.3, 4.0, 30)
    for model in (BOLTZ, GEN):
        vals = ed.pressure_integrand(model, vols)
        assert np.all(vals < 0.0)
    # boltzmann closed form: integrand = -A_e / v^2
    assert np.max(np.abs(ed.pressure_integrand(BOLTZ, vols) + 1.0 / vols**2)) < 1e-13
