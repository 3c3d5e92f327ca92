"""Perturbation variables, norms, energy functionals, and decay fits.

Perturbations against the wave follow the usual naming: varphi = v - v_cd,
psi = u - u_cd, zeta = theta - theta_cd, sigma = phi - phi_cd.  The
temperature and potential perturbations vanish at x = 0 (both fields are
Dirichlet-pinned there), and sigma vanishes in the far field.

All reductions are plain trapezoid sums in fixed left-to-right order, so a
repeated identical run yields bit-identical records.
"""

import csv
import math
from dataclasses import dataclass, fields as dataclass_fields

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import electron_density as ed
from . import wave_profile as wp

__all__ = [
    "PerturbationFields",
    "DiagnosticsRecord",
    "RecordBuilder",
    "perturbation",
    "entropy_phi",
    "zero_order_energy",
    "cross_energy",
    "boundary_identity_residual",
    "weight_w",
    "decay_fit",
    "exponential_rate_fit",
    "sobolev_check",
    "l2_norm",
    "h1_norm",
    "difference_table",
    "records_to_csv",
    "read_records_csv",
]

CSV_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PerturbationFields:
    """Differences against the wave on the grid nodes at time t."""

    t: float
    varphi: np.ndarray   # v - v_cd
    psi: np.ndarray      # u - u_cd
    zeta: np.ndarray     # theta - theta_cd
    sigma: np.ndarray    # phi - phi_cd


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    l2_varphi: float
    l2_psi: float
    l2_zeta: float
    l2_sigma: float
    h1_varphi: float
    h1_psi: float
    h1_zeta: float
    h1_sigma: float
    sup_varphi: float
    sup_psi: float
    sup_zeta: float
    sup_sigma: float
    zero_order_energy: float
    cross_energy: float
    boundary_residual: float
    weight_sup: float
    log1p_t: float
    log_h1_total: float

    @classmethod
    def field_names(cls):
        return [f.name for f in dataclass_fields(cls)]


def perturbation(state, wave, grid):
    """Componentwise differences against evaluate_wave at (x_i, t)."""
    w = wp.evaluate_wave(wave, grid.nodes, state.t)
    return PerturbationFields(
        t=state.t,
        varphi=state.v - np.asarray(w.v),
        psi=state.u - np.asarray(w.u),
        zeta=state.theta - np.asarray(w.theta),
        sigma=state.phi - np.asarray(w.phi),
    )


def entropy_phi(s):
    """Phi(s) = s - 1 - ln(s) >= 0, zero only at s = 1."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0.0):
        raise ValueError("entropy argument must be positive")
    out = s_arr - 1.0 - np.log(s_arr)
    return float(out) if np.ndim(s) == 0 else out


def _trapz(values, h, reverse=False):
    w = np.ones_like(values)
    w[0] = 0.5
    w[-1] = 0.5
    prod = w * values
    if reverse:
        prod = prod[::-1]
    return h * float(np.add.reduce(prod))


def difference_table(field, h):
    """Second-order first derivative: central interior, one-sided ends."""
    field = np.asarray(field, dtype=float)
    out = np.empty_like(field)
    out[1:-1] = (field[2:] - field[:-2]) / (2.0 * h)
    out[0] = (-3.0 * field[0] + 4.0 * field[1] - field[2]) / (2.0 * h)
    out[-1] = (3.0 * field[-1] - 4.0 * field[-2] + field[-3]) / (2.0 * h)
    return out


def l2_norm(field, h, reverse=False):
    field = np.asarray(field, dtype=float)
    return math.sqrt(_trapz(field * field, h, reverse=reverse))


def h1_norm(field, h, reverse=False):
    field = np.asarray(field, dtype=float)
    deriv = difference_table(field, h)
    return math.sqrt(
        _trapz(field * field, h, reverse=reverse)
        + _trapz(deriv * deriv, h, reverse=reverse)
    )


def sup_norm(field):
    return float(np.max(np.abs(field)))


def zero_order_energy(pert, state, wave, model, gas, grid):
    """Trapezoid integral of the nonnegative zero-order energy density:

    psi^2/2 + R theta_cd Phi(v/v_cd) + (R/(gamma-1)) theta_cd Phi(theta/theta_cd)
    + (v_cd/2)|rho_e'(phi_cd)| sigma^2 + (v_cd/(2 v^2)) (d sigma/dx)^2.
    """
    w = wp.evaluate_wave(wave, grid.nodes, state.t)
    d1, _ = ed.density_derivatives(model, np.asarray(w.phi))
    h = grid.h
    dsigma = difference_table(pert.sigma, h)
    density = (
        0.5 * pert.psi**2
        + gas.R * np.asarray(w.theta) * entropy_phi(state.v / np.asarray(w.v))
        + (gas.R / (gas.gamma - 1.0))
        * np.asarray(w.theta)
        * entropy_phi(state.theta / np.asarray(w.theta))
        + 0.5 * np.asarray(w.v) * np.abs(d1) * pert.sigma**2
        + np.asarray(w.v) / (2.0 * state.v**2) * dsigma**2
    )
    return _trapz(density, h)


def cross_energy(pert, state, wave, model, gas, grid):
    """Velocity-coupled cross term (logged, not sign-constrained):

    -integral of psi [R zeta + (1/(v v_cd rho_e'(phi_cd)) - p_cd) varphi] v w dx
    with w the cumulative weight of weight_w.
    """
    w_eval = wp.evaluate_wave(wave, grid.nodes, state.t)
    d1, _ = ed.density_derivatives(model, np.asarray(w_eval.phi))
    p_cd = gas.R * np.asarray(w_eval.theta) / np.asarray(w_eval.v)
    weight = weight_w(wave, grid.nodes, state.t)
    bracket = (
        gas.R * pert.zeta
        + (1.0 / (state.v * np.asarray(w_eval.v) * d1) - p_cd) * pert.varphi
    )
    return -_trapz(pert.psi * bracket * state.v * weight, grid.h)


def boundary_identity_residual(history, p_minus, mu):
    """max_k |varphi(0,t_k) - varphi(0,0) exp(-p_minus t_k / mu)|."""
    ts = np.asarray([t for t, _ in history], dtype=float)
    vals = np.asarray([q for _, q in history], dtype=float)
    if ts.size == 0:
        raise ValueError("empty history")
    predicted = vals[0] * np.exp(-p_minus * (ts - ts[0]) / mu)
    return float(np.max(np.abs(vals - predicted)))


def weight_w(wave, x, t):
    """Cumulative weight w(x,t) = integral_0^x (d theta_cd/dy)^2 dy."""
    anti = _dtheta_sq_antiderivative(wave)
    s = math.sqrt(1.0 + t)
    xi = np.clip(np.asarray(x, dtype=float) / s, 0.0, wave.profile.xi_grid[-1])
    out = anti(xi) / s
    return float(out) if np.ndim(x) == 0 else out


def _dtheta_sq_antiderivative(wave):
    cached = getattr(wave, "_w_weight_anti", None)
    if cached is None:
        cached = PchipInterpolator(
            wave.profile.xi_grid, wave.profile.dtheta**2
        ).antiderivative()
        wave._w_weight_anti = cached
    return cached


def decay_fit(samples):
    """Least-squares slope of log q against log(1+t).

    Returns (slope, r_squared); a constant sample list yields slope 0 with
    r_squared = nan (undefined goodness of fit).
    """
    ts = np.asarray([t for t, _ in samples], dtype=float)
    qs = np.asarray([q for _, q in samples], dtype=float)
    if ts.size < 4:
        raise ValueError("need at least 4 samples")
    if np.any(qs <= 0.0):
        raise ValueError("samples must be positive")
    x = np.log1p(ts)
    y = np.log(qs)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0.0:
        return 0.0, float("nan")
    return float(slope), 1.0 - ss_res / ss_tot


def exponential_rate_fit(samples):
    """Least-squares slope of log q against t (exponential decay rate)."""
    ts = np.asarray([t for t, _ in samples], dtype=float)
    qs = np.asarray([q for _, q in samples], dtype=float)
    if ts.size < 4:
        raise ValueError("need at least 4 samples")
    if np.any(qs <= 0.0):
        raise ValueError("samples must be positive")
    slope, _ = np.polyfit(ts, np.log(qs), 1)
    return float(slope)


def sobolev_check(field, grid):
    """sup|h| <= sqrt(2) (1 + 10h) ||h||^{1/2} ||h_x||^{1/2} on the nodes."""
    field = np.asarray(field, dtype=float)
    h = grid.h
    lhs = sup_norm(field)
    norm = l2_norm(field, h)
    dnorm = l2_norm(difference_table(field, h), h)
    rhs = math.sqrt(2.0) * (1.0 + 10.0 * h) * math.sqrt(norm) * math.sqrt(dnorm)
    return lhs <= rhs


class RecordBuilder:
    """Sink that turns recorded states into DiagnosticsRecords.

    Captures varphi(0, 0) from the first state it sees, for the running
    boundary-identity residual.
    """

    def __init__(self, wave, model, gas, grid):
        self.wave = wave
        self.model = model
        self.gas = gas
        self.grid = grid
        self.records = []
        self._varphi0 = None

    def __call__(self, state):
        pert = perturbation(state, self.wave, self.grid)
        if self._varphi0 is None:
            self._varphi0 = (state.t, float(pert.varphi[0]))
        t0, q0 = self._varphi0
        end = self.wave.end_states
        predicted = q0 * math.exp(-end.p_minus * (state.t - t0) / self.gas.mu)
        boundary_res = abs(float(pert.varphi[0]) - predicted)

        h = self.grid.h
        l2s = {name: l2_norm(getattr(pert, name), h)
               for name in ("varphi", "psi", "zeta", "sigma")}
        h1s = {name: h1_norm(getattr(pert, name), h)
               for name in ("varphi", "psi", "zeta", "sigma")}
        sups = {name: sup_norm(getattr(pert, name))
                for name in ("varphi", "psi", "zeta", "sigma")}
        h1_total = math.sqrt(sum(val**2 for val in h1s.values()))
        rec = DiagnosticsRecord(
            t=state.t,
            l2_varphi=l2s["varphi"], l2_psi=l2s["psi"],
            l2_zeta=l2s["zeta"], l2_sigma=l2s["sigma"],
            h1_varphi=h1s["varphi"], h1_psi=h1s["psi"],
            h1_zeta=h1s["zeta"], h1_sigma=h1s["sigma"],
            sup_varphi=sups["varphi"], sup_psi=sups["psi"],
            sup_zeta=sups["zeta"], sup_sigma=sups["sigma"],
            zero_order_energy=zero_order_energy(
                pert, state, self.wave, self.model, self.gas, self.grid
            ),
            cross_energy=cross_energy(
                pert, state, self.wave, self.model, self.gas, self.grid
            ),
            boundary_residual=boundary_res,
            weight_sup=weight_w(self.wave, self.grid.L, state.t),
            log1p_t=math.log1p(state.t),
            log_h1_total=math.log(h1_total) if h1_total > 0.0 else float("-inf"),
        )
        self.records.append(rec)
        return rec


def records_to_csv(records, path, config_hash=None):
    """Write the record stream; floats at full precision for bit-exactness."""
    names = DiagnosticsRecord.field_names()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema_version = {CSV_SCHEMA_VERSION}\n")
        if config_hash is not None:
            fh.write(f"# config_hash = {config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(names)
        for rec in records:
            writer.writerow(f"{getattr(rec, n):.17g}" for n in names)


def read_records_csv(path):
    """Read :func:`records_to_csv` output; returns (records, metadata)."""
    meta = {}
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                meta[key.strip()] = val.strip()
                continue
            row = next(csv.reader([line]))
            if header is None:
                header = row
                if header != DiagnosticsRecord.field_names():
                    raise ValueError(f"unexpected CSV columns in {path}")
                continue
            records.append(DiagnosticsRecord(*(float(tok) for tok in row)))
    return records, meta
