"""Semi-implicit solver for the Navier-Stokes-Poisson half-line IBVP.

Fields live on the uniform node grid x_i = i*h.  Each time step runs a
predictor pass and a corrector pass of the same semi-implicit update:
viscosity and heat conduction are treated implicitly (theta-weighted),
pressure and the self-consistent electric force explicitly from the pass
source state, and the potential is re-solved from the quasineutral Poisson
equation after every pass.  At theta_scheme = 0.5 the update is second
order in time; the default theta_scheme = 1 trades that for robustness.

Boundary conditions at x = 0: Dirichlet temperature theta_minus, Dirichlet
potential phi_minus, and the stress condition (p - mu u_x / v) = p_minus,
which enters both as the momentum half-cell flux and as the exact Robin
closure for du/dx in the volume update.  The far end pins the fields to
the right state ("dirichlet", default) or imposes zero gradient
("neumann").
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from . import electron_density as ed

__all__ = [
    "SolverError",
    "PoissonError",
    "PositivityError",
    "Grid",
    "FluidState",
    "BoundaryData",
    "SolverConfig",
    "solve_poisson",
    "step",
    "run",
    "make_initial_data",
    "save_snapshot",
    "load_snapshot",
]


class SolverError(RuntimeError):
    """Solver failure; carries the last healthy state when available."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class PoissonError(SolverError):
    pass


class PositivityError(SolverError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform grid of N cells (N+1 nodes) on [0, L]."""

    L: float
    N: int

    def __post_init__(self):
        if self.L <= 0.0:
            raise ValueError("L must be positive")
        if self.N < 16:
            raise ValueError("N must be at least 16")

    @property
    def h(self):
        return self.L / self.N

    @property
    def nodes(self):
        return np.linspace(0.0, self.L, self.N + 1)


@dataclass
class FluidState:
    """Node values of the unknown fields at time t."""

    t: float
    v: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    phi: np.ndarray

    def copy(self):
        return FluidState(
            self.t, self.v.copy(), self.u.copy(), self.theta.copy(), self.phi.copy()
        )


@dataclass(frozen=True)
class BoundaryData:
    """Boundary temperature/stress/potential and the far-field state."""

    theta_minus: float
    p_minus: float
    phi_minus: float
    v_plus: float
    u_plus: float
    theta_plus: float
    phi_plus: float

    @classmethod
    def from_end_states(cls, end):
        return cls(
            theta_minus=end.theta_minus,
            p_minus=end.p_minus,
            phi_minus=end.phi_minus,
            v_plus=end.v_plus,
            u_plus=end.u_plus,
            theta_plus=end.theta_plus,
            phi_plus=end.phi_plus,
        )


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_end: float
    theta_scheme: float = 1.0
    newton_tol: float = 1e-10
    newton_max: int = 50
    far_field_bc: str = "dirichlet"
    cfl_safety: float = 0.5

    def __post_init__(self):
        if self.dt <= 0.0 or self.t_end < 0.0:
            raise ValueError("dt must be positive and t_end nonnegative")
        if not 0.0 <= self.theta_scheme <= 1.0:
            raise ValueError("theta_scheme must lie in [0, 1]")
        if self.far_field_bc not in ("dirichlet", "neumann"):
            raise ValueError("far_field_bc must be 'dirichlet' or 'neumann'")
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ValueError("cfl_safety must lie in (0, 1]")


# --------------------------------------------------------------------------
# Poisson solve
# --------------------------------------------------------------------------

def solve_poisson(v, model, phi_bc, grid, guess=None, source=None,
                  tol=1e-10, max_iter=50):
    """Solve d/dx((d phi/dx)/v) = 1 - v rho_e(phi) + source on the grid.

    Dirichlet data ``phi_bc = (phi_left, phi_right)``.  Damped Newton with a
    tridiagonal Jacobian; iterates are kept inside the model's domain.
    Returns the node array; raises PoissonError if Newton stalls.
    """
    v = np.asarray(v, dtype=float)
    n_nodes = grid.N + 1
    if v.shape != (n_nodes,):
        raise ValueError(f"v must have shape ({n_nodes},)")
    if np.any(v <= 0.0):
        raise PositivityError("nonpositive volume passed to the Poisson solve")
    h = grid.h
    phi_l, phi_r = float(phi_bc[0]), float(phi_bc[1])

    phi = np.empty(n_nodes)
    if guess is not None:
        phi[:] = np.asarray(guess, dtype=float)
    else:
        phi[:] = np.linspace(phi_l, phi_r, n_nodes)
    phi[0], phi[-1] = phi_l, phi_r
    if model.kind == "generalized":
        cap = model.phi_max - 2.0 * ed.PHI_MAX_GUARD
        phi = np.minimum(phi, cap)
        phi[0], phi[-1] = phi_l, phi_r

    src = np.zeros(n_nodes) if source is None else np.asarray(source, dtype=float)
    v_mid = 0.5 * (v[:-1] + v[1:])

    def residual(p):
        flux = (p[1:] - p[:-1]) / (h * v_mid)
        return (flux[1:] - flux[:-1]) / h - (1.0 - v[1:-1] * ed.density(model, p[1:-1])) - src[1:-1]

    f = residual(phi)
    norm = float(np.max(np.abs(f)))
    for _ in range(max_iter):
        if norm <= tol:
            return phi
        d1, _ = ed.density_derivatives(model, phi[1:-1])
        diag = -(1.0 / v_mid[1:] + 1.0 / v_mid[:-1]) / h**2 + v[1:-1] * d1
        ab = np.zeros((3, grid.N - 1))
        ab[0, 1:] = 1.0 / (h**2 * v_mid[1:-1])
        ab[1, :] = diag
        ab[2, :-1] = 1.0 / (h**2 * v_mid[1:-1])
        step_vec = solve_banded((1, 1), ab, -f)

        lam = 1.0
        while True:
            cand = phi.copy()
            cand[1:-1] += lam * step_vec
            ok = True
            if model.kind == "generalized":
                hi = model.phi_max - 2.0 * ed.PHI_MAX_GUARD
                ok = bool(np.all(cand[1:-1] < hi))
            if ok:
                fc = residual(cand)
                normc = float(np.max(np.abs(fc)))
                if normc < norm or normc <= tol:
                    phi, f, norm = cand, fc, normc
                    break
            lam *= 0.5
            if lam < 2.0**-30:
                raise PoissonError(
                    f"Poisson Newton stalled at residual {norm:.3e}"
                )
    raise PoissonError(
        f"Poisson solve did not reach {tol:.1e} in {max_iter} iterations "
        f"(residual {norm:.3e})"
    )


# --------------------------------------------------------------------------
# Spatial operators
# --------------------------------------------------------------------------

def _dx_u(u, v0, bdata, gas, h):
    """du/dx on nodes: central interior, Robin closure at 0, one-sided at N.

    The stress condition gives u_x(0) = (R theta_minus - p_minus v0) / mu
    exactly, with theta(0) pinned at theta_minus.
    """
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - u[:-2]) / (2.0 * h)
    out[0] = (gas.R * bdata.theta_minus - bdata.p_minus * v0) / gas.mu
    out[-1] = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * h)
    return out


def _second_flux(y, v_mid, h):
    """D_x((D_x y)/v) on interior nodes."""
    flux = (y[1:] - y[:-1]) / (h * v_mid)
    return (flux[1:] - flux[:-1]) / h


def _pass(state, src, dt, grid, bdata, model, gas, config):
    """One semi-implicit sweep from ``state`` over dt, with coefficients and
    explicit terms taken from ``src``.  Returns a FluidState at t + dt."""
    h = grid.h
    th_w = config.theta_scheme
    n_nodes = grid.N + 1
    dirichlet_far = config.far_field_bc == "dirichlet"

    v_src = src.v
    v_mid = 0.5 * (v_src[:-1] + v_src[1:])
    p_src = gas.R * src.theta / v_src

    # --- momentum ---------------------------------------------------------
    beta = th_w * gas.mu * dt
    ab = np.zeros((3, n_nodes))
    rhs = np.empty(n_nodes)

    visc_old = _second_flux(state.u, v_mid, h)
    dphi_c = np.empty(n_nodes)
    dphi_c[1:-1] = (src.phi[2:] - src.phi[:-2]) / (2.0 * h)
    dp_c = np.empty(n_nodes)
    dp_c[1:-1] = (p_src[2:] - p_src[:-2]) / (2.0 * h)

    ab[1, 1:-1] = 1.0 + beta / h**2 * (1.0 / v_mid[1:] + 1.0 / v_mid[:-1])
    ab[0, 2:] = -beta / (h**2 * v_mid[1:])      # superdiag entries A[i, i+1]
    ab[2, :-2] = -beta / (h**2 * v_mid[:-1])    # subdiag entries A[i, i-1]
    rhs[1:-1] = state.u[1:-1] + dt * (
        (1.0 - th_w) * gas.mu * visc_old
        - dp_c[1:-1]
        + dphi_c[1:-1] / v_src[1:-1]
    )

    # node 0: half-cell balance of the stress flux against p_minus
    p_half = 0.5 * (p_src[0] + p_src[1])
    coef = 2.0 * beta / (h**2 * v_mid[0])
    ab[1, 0] = 1.0 + coef
    ab[0, 1] = -coef
    rhs[0] = state.u[0] + dt * (
        (2.0 / h) * (bdata.p_minus - p_half)
        + (1.0 - th_w) * 2.0 * gas.mu * (state.u[1] - state.u[0]) / (h**2 * v_mid[0])
        + (src.phi[1] - src.phi[0]) / (h * v_mid[0])
    )

    if dirichlet_far:
        ab[1, -1] = 1.0
        rhs[-1] = bdata.u_plus
    else:
        ab[1, -1] = 1.0
        ab[2, -2] = -1.0
        rhs[-1] = 0.0
    u_new = solve_banded((1, 1), ab, rhs)

    # --- volume (trapezoid; the node-0 closure is exact in v) --------------
    dxu_old = _dx_u(state.u, state.v[0], bdata, gas, h)
    dxu_new = _dx_u(u_new, state.v[0], bdata, gas, h)
    v_new = state.v + 0.5 * dt * (dxu_old + dxu_new)
    a_coef = bdata.p_minus * dt / (2.0 * gas.mu)
    v_new[0] = (
        state.v[0] * (1.0 - a_coef) + dt * gas.R * bdata.theta_minus / gas.mu
    ) / (1.0 + a_coef)
    if np.any(v_new <= 0.0):
        raise PositivityError("volume lost positivity", state=state)

    # --- temperature --------------------------------------------------------
    c_v = gas.R / (gas.gamma - 1.0)
    beta_t = th_w * gas.kappa * dt / c_v
    dxu_src = _dx_u(src.u, src.v[0], bdata, gas, h)
    cond_old = _second_flux(state.theta, v_mid, h)
    heat = -p_src * dxu_src + gas.mu * dxu_src**2 / v_src

    ab = np.zeros((3, n_nodes))
    rhs = np.empty(n_nodes)
    ab[1, 1:-1] = 1.0 + beta_t / h**2 * (1.0 / v_mid[1:] + 1.0 / v_mid[:-1])
    ab[0, 2:] = -beta_t / (h**2 * v_mid[1:])
    ab[2, :-2] = -beta_t / (h**2 * v_mid[:-1])
    rhs[1:-1] = state.theta[1:-1] + (dt / c_v) * (
        (1.0 - th_w) * gas.kappa * cond_old + heat[1:-1]
    )
    ab[1, 0] = 1.0
    rhs[0] = bdata.theta_minus
    if dirichlet_far:
        ab[1, -1] = 1.0
        rhs[-1] = bdata.theta_plus
    else:
        ab[1, -1] = 1.0
        ab[2, -2] = -1.0
        rhs[-1] = 0.0
    theta_new = solve_banded((1, 1), ab, rhs)
    if np.any(theta_new <= 0.0):
        raise PositivityError("temperature lost positivity", state=state)

    phi_new = solve_poisson(
        v_new, model, (bdata.phi_minus, bdata.phi_plus), grid,
        guess=src.phi, tol=config.newton_tol, max_iter=config.newton_max,
    )
    return FluidState(state.t + dt, v_new, u_new, theta_new, phi_new)


def step(state, dt, grid, bdata, model, gas, config):
    """Advance one step: a predictor pass from the current state, then a
    corrector pass with coefficients at the theta-weighted intermediate."""
    th_w = config.theta_scheme
    pred = _pass(state, state, dt, grid, bdata, model, gas, config)
    blend = FluidState(
        state.t + th_w * dt,
        (1.0 - th_w) * state.v + th_w * pred.v,
        (1.0 - th_w) * state.u + th_w * pred.u,
        (1.0 - th_w) * state.theta + th_w * pred.theta,
        (1.0 - th_w) * state.phi + th_w * pred.phi,
    )
    return _pass(state, blend, dt, grid, bdata, model, gas, config)


def _cfl_dt(state, grid, gas, config):
    speed = (np.abs(state.u) + np.sqrt(gas.gamma * gas.R * state.theta)) / state.v
    return config.cfl_safety * grid.h / float(np.max(speed))


def run(initial, cfg, grid, model, gas, wave, cadence=None, sinks=()):
    """March from ``initial`` to cfg.t_end with the wave's boundary data.

    The step size is min(cfg.dt, CFL bound) and is clipped so that record
    times k*cadence and t_end are hit exactly.  A failed Poisson solve
    retries the step with halved dt (up to 5 times).  Returns
    ``(final_state, records)`` where records holds state copies at the
    cadence times (including t = 0 and t_end when cadence is set); each
    sink is called with every recorded state, in order.
    """
    bdata = BoundaryData.from_end_states(wave.end_states)
    state = initial.copy()
    records = []
    tiny = 1e-12 * max(1.0, cfg.t_end)

    def record():
        snap = state.copy()
        records.append(snap)
        for sink in sinks:
            sink(snap)

    if cadence is not None:
        if cadence <= 0.0:
            raise ValueError("cadence must be positive")
        record()
        next_rec = cadence

    while state.t < cfg.t_end - tiny:
        dt = min(cfg.dt, _cfl_dt(state, grid, gas, cfg))
        dt = min(dt, cfg.t_end - state.t)
        if cadence is not None and state.t + dt > next_rec - tiny:
            dt = next_rec - state.t
        attempt = dt
        for retry in range(6):
            try:
                new_state = step(state, attempt, grid, bdata, model, gas, cfg)
                break
            except PoissonError as exc:
                if retry == 5:
                    raise SolverError(
                        f"Poisson solve kept failing at t = {state.t:.6g} "
                        f"(dt = {attempt:.3e}): {exc}", state=state,
                    ) from exc
                attempt *= 0.5
        state = new_state
        if cadence is not None and state.t >= next_rec - tiny:
            record()
            next_rec += cadence
    return state, records


# --------------------------------------------------------------------------
# Initial data
# --------------------------------------------------------------------------

def _bump(x, center, width, kind):
    z = (x - center) / width
    if kind == "gaussian_bump":
        return np.exp(-z * z)
    if kind == "compact_bump":
        out = np.where(np.abs(z) < 1.0, np.cos(0.5 * np.pi * z) ** 2, 0.0)
        return out
    raise ValueError(f"unknown perturbation shape {kind!r}")


def make_initial_data(wave, grid, model, amplitude_v=0.0, amplitude_u=0.0,
                      amplitude_theta=0.0, shape="gaussian_bump",
                      center=None, width=1.0):
    """Wave field at t = 0 plus localized perturbations, with phi re-solved.

    The temperature perturbation is multiplied by 1 - exp(-(x/width)^2) so
    the boundary value theta(0) stays compatible with the Dirichlet data.
    The potential comes from a fresh Poisson solve for the perturbed volume,
    so the initial state satisfies the constraint exactly.
    """
    from . import wave_profile as wp

    x = grid.nodes
    if center is None:
        center = 0.25 * grid.L
    w = wp.evaluate_wave(wave, x, 0.0)
    v = np.array(w.v, dtype=float)
    u = np.array(w.u, dtype=float)
    theta = np.array(w.theta, dtype=float)

    if amplitude_v or amplitude_u or amplitude_theta:
        bump = _bump(x, center, width, shape)
        v = v + amplitude_v * bump
        u = u + amplitude_u * bump
        theta = theta + amplitude_theta * bump * (1.0 - np.exp(-((x / width) ** 2)))
    if np.any(v <= 0.0) or np.any(theta <= 0.0):
        raise PositivityError("perturbation drives v or theta nonpositive")

    end = wave.end_states
    phi = solve_poisson(v, model, (end.phi_minus, end.phi_plus), grid,
                        guess=np.asarray(w.phi, dtype=float))
    return FluidState(0.0, v, u, theta, phi)


# --------------------------------------------------------------------------
# Snapshots
# --------------------------------------------------------------------------

def save_snapshot(state, grid, path, extra=None):
    """Columnar text snapshot (x v u theta phi) with a key=value header."""
    header = {
        "format": "nsp-snapshot",
        "schema_version": 1,
        "t": float(state.t),
        "L": float(grid.L),
        "N": int(grid.N),
    }
    if extra:
        for key, val in extra.items():
            header[str(key)] = val
    lines = [f"# {k} = {v!r}" for k, v in header.items()]
    lines.append("# columns: x v u theta phi")
    cols = np.column_stack([grid.nodes, state.v, state.u, state.theta, state.phi])
    body = "\n".join(" ".join(f"{val:.17e}" for val in row) for row in cols)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n" + body + "\n")


def load_snapshot(path):
    """Read :func:`save_snapshot` output; returns (state, grid, header)."""
    import ast

    header = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "=" in line:
                    key, _, val = line[1:].partition("=")
                    header[key.strip()] = ast.literal_eval(val.strip())
                continue
            rows.append([float(tok) for tok in line.split()])
    if header.get("format") != "nsp-snapshot":
        raise ValueError(f"{path} is not a solver snapshot")
    data = np.asarray(rows, dtype=float)
    grid = Grid(L=float(header["L"]), N=int(header["N"]))
    state = FluidState(
        t=float(header["t"]),
        v=np.ascontiguousarray(data[:, 1]),
        u=np.ascontiguousarray(data[:, 2]),
        theta=np.ascontiguousarray(data[:, 3]),
        phi=np.ascontiguousarray(data[:, 4]),
    )
    return state, grid, header
