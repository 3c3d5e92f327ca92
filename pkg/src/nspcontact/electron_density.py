"""Electron density closures and the quasineutral pressure integral.

Two analytic families are supported: the isothermal (Boltzmann) relation
``rho_e(phi) = exp(-phi / A_e)`` and the polytropic generalization
``rho_e(phi) = [1 - ((gamma_e - 1)/gamma_e) * phi / A_e]^(1/(gamma_e - 1))``,
which recovers the Boltzmann relation as gamma_e -> 1.  Both are normalized
so rho_e(0) = 1, are strictly decreasing, and map their admissible potential
interval onto (0, +inf).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import quadrature

__all__ = [
    "DomainError",
    "RangeError",
    "ElectronDensityModel",
    "make_model",
    "density",
    "density_derivatives",
    "inverse_density",
    "quasineutral_pressure",
    "quasineutral_pressure_batch",
    "pressure_integrand",
    "PHI_MAX_GUARD",
]

# Evaluations this close to the finite endpoint phi_max are rejected: the
# fractional power in the generalized family loses its branch there.
PHI_MAX_GUARD = 1e-9


class DomainError(ValueError):
    """Potential argument outside the admissible interval."""


class RangeError(ValueError):
    """Density argument outside the attainable range of rho_e."""


@dataclass(frozen=True)
class ElectronDensityModel:
    """Immutable description of one electron-density closure.

    Attributes:
        kind: 'boltzmann' or 'generalized'.
        A_e: positive scale constant.
        gamma_e: polytropic exponent (> 1 for the generalized kind; stored
            as 1.0 for the boltzmann kind).
        phi_min: lower end of the admissible potential interval (-inf here).
        phi_max: upper end; gamma_e*A_e/(gamma_e-1) for the generalized
            kind, +inf for boltzmann.
    """

    kind: str
    A_e: float
    gamma_e: float
    phi_min: float
    phi_max: float


def make_model(kind, A_e=1.0, gamma_e=1.0):
    """Validate parameters and build an :class:`ElectronDensityModel`.

    A generalized model with gamma_e exactly 1 is normalized to the
    boltzmann kind (the same function, without the removable 0/0 limit
    in hot paths).
    """
    A_e = float(A_e)
    gamma_e = float(gamma_e)
    if A_e <= 0.0:
        raise ValueError("A_e must be positive")
    if kind not in ("boltzmann", "generalized"):
        raise ValueError(f"unknown electron density kind {kind!r}")
    if kind == "generalized":
        if gamma_e < 1.0:
            raise ValueError("gamma_e must be >= 1")
        if gamma_e == 1.0:
            kind = "boltzmann"
    if kind == "boltzmann":
        return ElectronDensityModel("boltzmann", A_e, 1.0, -math.inf, math.inf)
    phi_max = gamma_e * A_e / (gamma_e - 1.0)
    return ElectronDensityModel("generalized", A_e, gamma_e, -math.inf, phi_max)


def _check_phi(model, phi):
    phi = np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(phi)):
        raise DomainError("potential must be finite")
    if model.kind == "generalized":
        if np.any(phi > model.phi_max - PHI_MAX_GUARD):
            raise DomainError(
                f"potential within {PHI_MAX_GUARD:g} of phi_max={model.phi_max:g}"
            )
    return phi


def _scalar_like(template, value):
    if np.isscalar(template) or np.ndim(template) == 0:
        return float(value)
    return value


def density(model, phi):
    """Evaluate rho_e(phi); accepts scalars or arrays."""
    p = _check_phi(model, phi)
    if model.kind == "boltzmann":
        out = np.exp(-p / model.A_e)
    else:
        ge = model.gamma_e
        base = 1.0 - ((ge - 1.0) / ge) * (p / model.A_e)
        out = base ** (1.0 / (ge - 1.0))
    return _scalar_like(phi, out)


def density_derivatives(model, phi):
    """Return (rho_e', rho_e'') in closed form; rho_e' < 0 everywhere."""
    p = _check_phi(model, phi)
    if model.kind == "boltzmann":
        rho = np.exp(-p / model.A_e)
        d1 = -rho / model.A_e
        d2 = rho / model.A_e**2
    else:
        ge = model.gamma_e
        base = 1.0 - ((ge - 1.0) / ge) * (p / model.A_e)
        d1 = -(1.0 / (ge * model.A_e)) * base ** ((2.0 - ge) / (ge - 1.0))
        d2 = ((2.0 - ge) / (ge**2 * model.A_e**2)) * base ** (
            (3.0 - 2.0 * ge) / (ge - 1.0)
        )
    return _scalar_like(phi, d1), _scalar_like(phi, d2)


def inverse_density(model, rho):
    """Return the unique phi with rho_e(phi) = rho.

    Closed-form in both families; raises RangeError off the attainable
    range (0, +inf) or when the result would violate the phi_max guard.
    """
    r = np.asarray(rho, dtype=float)
    if np.any(~np.isfinite(r)) or np.any(r <= 0.0):
        raise RangeError("density must be finite and positive")
    if model.kind == "boltzmann":
        out = -model.A_e * np.log(r)
    else:
        ge = model.gamma_e
        out = model.phi_max * (1.0 - r ** (ge - 1.0))
        if np.any(out > model.phi_max - PHI_MAX_GUARD):
            raise RangeError(
                "density so small its potential falls inside the phi_max guard"
            )
    return _scalar_like(rho, out)


def pressure_integrand(model, vol):
    """Integrand of the quasineutral pressure: 1/(vol^3 rho_e'(rho_e^{-1}(1/vol))).

    Strictly negative for vol > 0.  Vectorized; used by the adaptive
    quadrature and by Newton solvers that need d(p^phi)/dv directly.
    """
    vol = np.asarray(vol, dtype=float)
    phi = inverse_density(model, 1.0 / vol)
    d1, _ = density_derivatives(model, phi)
    return 1.0 / (vol**3 * d1)


def quasineutral_pressure(model, v, v_ref, abs_tol=1e-12):
    """Oriented integral of :func:`pressure_integrand` from v_ref to v.

    Adaptive Gauss-Kronrod panel refinement to absolute tolerance
    ``abs_tol``; strictly decreasing in v.  Scalar in, scalar out.
    """
    v = float(v)
    v_ref = float(v_ref)
    if v <= 0.0 or v_ref <= 0.0:
        raise DomainError("specific volumes must be positive")
    return quadrature.integrate(
        lambda q: pressure_integrand(model, q), v_ref, v, abs_tol=abs_tol
    )


def quasineutral_pressure_batch(model, v, v_ref, abs_tol=1e-12):
    """Batched form of :func:`quasineutral_pressure` over paired arrays."""
    v = np.asarray(v, dtype=float)
    v_ref = np.asarray(v_ref, dtype=float)
    if np.any(v <= 0.0) or np.any(v_ref <= 0.0):
        raise DomainError("specific volumes must be positive")
    return quadrature.integrate_batch(
        lambda q: pressure_integrand(model, q), v_ref, v, abs_tol=abs_tol
    )
