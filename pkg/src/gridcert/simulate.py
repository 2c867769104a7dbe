"""Nonlinear time-domain simulation and storage-function evaluation.

Two integrators are provided. ``simulate_dae`` integrates the
structure-preserving model in reference-bus coordinates with a
half-explicit fixed-stage scheme: the differential states (relative
generator angles, generator frequencies, internal states) advance through
classical RK4 stages while the load-bus angles are re-solved from the
algebraic power balance by Newton at every stage. ``simulate_ode``
integrates the all-generator model in absolute coordinates with an
adaptive RK45 from scipy.

Along trajectories the incremental storage function (kinetic energy plus
the Bregman distance of the cosine potential) and its dissipation
identity can be sampled, which is how the certificates are validated
empirically.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import dynamics as dyn_mod
from .errors import (InconsistentInitialStateError, ModelError,
                     SingularityStopError)
from .network import (edge_weights, incidence_matrix, reduced_incidence,
                      reference_projector)

ALG_TOL = 1e-11          # Newton tolerance for the algebraic constraint
SINGULAR_SV = 1e-8       # smallest singular value treated as singular


@dataclass
class SimState:
    """Snapshot in reference-bus coordinates.

    ``phi_g`` and ``phi_l`` both live in R^n (n = buses - 1) and sum to
    the relative angle vector phi; ``phi_l`` is supported on the load-bus
    coordinates only. ``xi`` concatenates the internal states in
    generator order.
    """

    phi_g: np.ndarray
    phi_l: np.ndarray
    omega_g: np.ndarray
    xi: np.ndarray
    t: float = 0.0

    @property
    def phi(self):
        return self.phi_g + self.phi_l

    def copy(self):
        return SimState(self.phi_g.copy(), self.phi_l.copy(),
                        self.omega_g.copy(), self.xi.copy(), self.t)


@dataclass
class Trajectory:
    """Recorded samples of one simulation run."""

    times: np.ndarray
    states: list
    storage: np.ndarray
    dissipation: np.ndarray
    u: np.ndarray                 # injections per generator, row per sample
    alg_residual: np.ndarray
    events: list = field(default_factory=list)

    @property
    def final_state(self):
        return self.states[-1]

    def omega_matrix(self):
        return np.array([s.omega_g for s in self.states])

    def eta_matrix(self, model):
        Rphi = reduced_incidence(model)
        return np.array([Rphi.T @ s.phi for s in self.states])


class _Geometry:
    """Cached index bookkeeping shared by both integrators."""

    def __init__(self, model):
        self.model = model
        self.gens = list(model.generator_set)
        self.loads = list(model.load_set)
        self.E = reference_projector(model)
        self.Eg = self.E[self.gens, :]
        self.El = self.E[self.loads, :]
        self.Rphi = reduced_incidence(model)
        self.gamma = edge_weights(model)
        self.M = np.array([model.buses[i].M for i in self.gens])
        self.D = np.array([model.buses[i].D for i in self.gens])
        self.pg = np.array([model.buses[i].p_star for i in self.gens])
        self.pl = np.array([model.buses[i].p_star for i in self.loads])
        self.dyn = [model.buses[i].dynamics for i in self.gens]
        sizes = [dyn_mod.n_states(d) for d in self.dyn]
        self.xi_slices = []
        off = 0
        for s in sizes:
            self.xi_slices.append(slice(off, off + s))
            off += s
        self.n_xi = off

    def grad_U(self, phi):
        return self.Rphi @ (self.gamma * np.sin(self.Rphi.T @ phi))

    def hess_U(self, phi):
        cos = np.cos(self.Rphi.T @ phi)
        return self.Rphi @ np.diag(self.gamma * cos) @ self.Rphi.T

    def injections(self, xi, omega, u_override=None):
        if u_override is not None:
            return np.asarray(u_override, dtype=float)
        return np.array([dyn_mod.output(d, xi[sl], w) for d, sl, w
                         in zip(self.dyn, self.xi_slices, omega)])

    def xi_rates(self, xi, omega):
        out = np.zeros_like(xi)
        for d, sl, w in zip(self.dyn, self.xi_slices, omega):
            if sl.stop > sl.start:
                out[sl] = dyn_mod.rhs(d, xi[sl], w)
        return out


def _solve_algebraic(geo, phi_g, theta_l, max_iter=30):
    """Newton solve of the load power balance for the load angles.

    Returns ``(theta_l, residual)``; raises ``SingularityStopError`` when
    the constraint Jacobian's smallest singular value drops below
    ``SINGULAR_SV`` and ``InconsistentInitialStateError`` style failure is
    signalled by returning ``None`` for the caller to handle.
    """
    if len(geo.loads) == 0:
        return theta_l, 0.0
    th = theta_l.copy()
    for _ in range(max_iter):
        phi = phi_g + geo.El.T @ th
        g = geo.pl - geo.El @ geo.grad_U(phi)
        if np.max(np.abs(g)) <= ALG_TOL:
            return th, float(np.max(np.abs(g)))
        J = geo.El @ geo.hess_U(phi) @ geo.El.T
        sv = np.linalg.svd(J, compute_uv=False)
        if sv[-1] < SINGULAR_SV:
            raise SingularityStopError(
                "algebraic constraint Jacobian is singular "
                f"(smallest singular value {sv[-1]:.2e})")
        step = np.linalg.solve(J, g)
        # full Newton, shortened if it would throw the angles far out
        cap = np.max(np.abs(step))
        if cap > 0.5:
            step *= 0.5 / cap
        th = th + step
    return None


def equilibrium_state(model, sol):
    """Simulation state sitting exactly at the synchronous solution."""
    geo = _Geometry(model)
    theta = sol.theta0_bar
    phi_full = geo.E.T @ theta
    theta_l = theta[geo.loads] if geo.loads else np.zeros(0)
    phi_l = geo.El.T @ theta_l
    xi = np.concatenate([np.asarray(x, dtype=float).ravel()
                         for x in sol.xi_bar]) if sol.xi_bar else np.zeros(0)
    return SimState(phi_g=phi_full - phi_l, phi_l=phi_l,
                    omega_g=np.full(len(geo.gens), sol.omega_star),
                    xi=xi, t=0.0)


def perturbed_state(model, sol, d_omega=None, d_phi_g=None, seed=None,
                    omega_scale=0.0, angle_scale=0.0):
    """Equilibrium state displaced by given or randomly drawn offsets."""
    state = equilibrium_state(model, sol)
    rng = np.random.default_rng(seed)
    n_g = state.omega_g.size
    n = state.phi_g.size
    if d_omega is None:
        d_omega = omega_scale * rng.uniform(-1.0, 1.0, n_g)
    if d_phi_g is None:
        d_phi_g = angle_scale * rng.uniform(-1.0, 1.0, n)
    state.omega_g = state.omega_g + np.asarray(d_omega, dtype=float)
    state.phi_g = state.phi_g + np.asarray(d_phi_g, dtype=float)
    return state


def _record(geo, samples, state, residual, equilibrium, u):
    phi = state.phi_g + state.phi_l
    if equilibrium is not None:
        S = storage_value(geo, phi, state.omega_g, equilibrium)
        dw = state.omega_g - equilibrium.omega_star
        diss = float(-dw @ (geo.D * dw) + dw @ (u - equilibrium.u_bar))
    else:
        S = np.nan
        diss = np.nan
    samples["t"].append(state.t)
    samples["states"].append(state.copy())
    samples["S"].append(S)
    samples["diss"].append(diss)
    samples["u"].append(u.copy())
    samples["res"].append(residual)


def _finish(samples, events):
    return Trajectory(
        times=np.array(samples["t"]),
        states=samples["states"],
        storage=np.array(samples["S"]),
        dissipation=np.array(samples["diss"]),
        u=np.array(samples["u"]) if samples["u"] else np.zeros((0, 0)),
        alg_residual=np.array(samples["res"]),
        events=events,
    )


def simulate_dae(model, initial, horizon, dt, equilibrium=None,
                 u_override=None, record_every=1, max_halvings=18):
    """Half-explicit RK4 integration of the differential-algebraic model.

    The initial load angles are projected onto the algebraic constraint
    first; failure to project raises ``InconsistentInitialStateError``.
    Stages that cannot be projected halve the step (at most
    ``max_halvings`` times below the base step); a singular constraint
    Jacobian raises ``SingularityStopError`` carrying the partial
    trajectory.

    When ``u_override`` is given the generator injections are frozen at
    that vector and the internal states are held, which simulates the
    open-loop network driven by a constant input.
    """
    geo = _Geometry(model)
    if u_override is not None:
        u_override = np.asarray(u_override, dtype=float)
        if u_override.shape != (len(geo.gens),):
            raise ModelError("u_override must have one entry per generator")

    state = initial.copy()
    state.t = 0.0
    theta_l = (state.phi_l[[_phi_coord(geo, i) for i in geo.loads]]
               if geo.loads else np.zeros(0))
    solved = _solve_algebraic(geo, state.phi_g, theta_l)
    if solved is None:
        raise InconsistentInitialStateError(
            "could not project the initial condition onto the "
            "algebraic constraints")
    theta_l, res0 = solved
    state.phi_l = geo.El.T @ theta_l

    events = []
    samples = {"t": [], "states": [], "S": [], "diss": [], "u": [],
               "res": []}
    u0 = geo.injections(state.xi, state.omega_g, u_override)
    _record(geo, samples, state, res0, equilibrium, u0)

    def rhs_at(y, th_guess):
        """y = (phi_g, omega, xi); returns (dy, theta_l)."""
        phi_g = y[: geo.E.shape[1]]
        omega = y[geo.E.shape[1]: geo.E.shape[1] + len(geo.gens)]
        xi = y[geo.E.shape[1] + len(geo.gens):]
        solved = _solve_algebraic(geo, phi_g, th_guess)
        if solved is None:
            return None
        th, res = solved
        phi = phi_g + geo.El.T @ th
        u = geo.injections(xi, omega, u_override)
        domega = (-geo.D * omega - geo.Eg @ geo.grad_U(phi)
                  + geo.pg + u) / geo.M
        dphi_g = geo.Eg.T @ omega
        dxi = (np.zeros_like(xi) if u_override is not None
               else geo.xi_rates(xi, omega))
        return np.concatenate([dphi_g, domega, dxi]), th, res

    y = np.concatenate([state.phi_g, state.omega_g, state.xi])
    t = 0.0
    step = dt
    accepted = 0
    while t < horizon - 1e-12:
        h = min(step, horizon - t)
        while True:
            try:
                trial = _rk4_trial(rhs_at, y, h, theta_l)
            except SingularityStopError as exc:
                raise SingularityStopError(
                    str(exc), _finish(samples, events)) from None
            if trial is not None:
                break
            h *= 0.5
            events.append(f"t={t:.6g}: stage projection failed, "
                          f"step halved to {h:.3g}")
            if h < dt / 2 ** max_halvings:
                raise SingularityStopError(
                    "step size underflow while projecting the algebraic "
                    "constraints", _finish(samples, events))
        y, theta_l, res = trial
        t += h
        accepted += 1
        if h < step:
            step = min(step * 2.0, dt)
        n = geo.E.shape[1]
        state = SimState(phi_g=y[:n], phi_l=geo.El.T @ theta_l,
                         omega_g=y[n: n + len(geo.gens)],
                         xi=y[n + len(geo.gens):], t=t)
        if accepted % record_every == 0 or t >= horizon - 1e-12:
            u = geo.injections(state.xi, state.omega_g, u_override)
            _record(geo, samples, state, res, equilibrium, u)
    return _finish(samples, events)


def _rk4_trial(rhs_at, y, h, th_guess):
    """One classical RK4 step; None when any stage fails to project."""
    r1 = rhs_at(y, th_guess)
    if r1 is None:
        return None
    k1, th1, _ = r1
    r2 = rhs_at(y + 0.5 * h * k1, th1)
    if r2 is None:
        return None
    k2, th2, _ = r2
    r3 = rhs_at(y + 0.5 * h * k2, th2)
    if r3 is None:
        return None
    k3, th3, _ = r3
    r4 = rhs_at(y + h * k3, th3)
    if r4 is None:
        return None
    k4, th4, _ = r4
    y_next = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    rN = rhs_at(y_next, th4)
    if rN is None:
        return None
    _, th_next, res = rN
    return y_next, th_next, res


def _phi_coord(geo, bus):
    """Coordinate of a non-reference bus in the relative angle vector."""
    others = [i for i in range(geo.model.n_bus)
              if i != geo.model.reference_bus]
    return others.index(bus)


def simulate_ode(model, initial, horizon, equilibrium=None, rtol=1e-8,
                 atol=1e-10, u_override=None, max_step=np.inf, t_eval=None):
    """Adaptive RK45 integration of the all-generator model.

    The model must have no load buses. The initial ``SimState`` fixes the
    reference angle to zero; a common shift of the absolute angles does
    not affect the recorded frequencies or line angle differences.
    ``t_eval`` pins the sample times, otherwise the solver steps are
    recorded.
    """
    if model.load_set:
        raise ModelError("simulate_ode needs a model without load buses")
    geo = _Geometry(model)
    n = model.n_bus
    if u_override is not None:
        u_override = np.asarray(u_override, dtype=float)

    # reconstruct absolute angles with the reference pinned at zero
    theta0 = np.zeros(n)
    others = [i for i in range(n) if i != model.reference_bus]
    theta0[others] = initial.phi

    R = incidence_matrix(model)
    gamma = edge_weights(model)
    M = geo.M
    D = geo.D

    def fun(t, y):
        theta = y[:n]
        omega = y[n: 2 * n]
        xi = y[2 * n:]
        p = R @ (gamma * np.sin(R.T @ theta))
        u = geo.injections(xi, omega, u_override)
        domega = (-D * omega - p + geo.pg + u) / M
        dxi = (np.zeros_like(xi) if u_override is not None
               else geo.xi_rates(xi, omega))
        return np.concatenate([omega, domega, dxi])

    y0 = np.concatenate([theta0, initial.omega_g, initial.xi])
    out = solve_ivp(fun, (0.0, float(horizon)), y0, method="RK45",
                    rtol=rtol, atol=atol, max_step=max_step, t_eval=t_eval)
    if not out.success:
        raise ModelError(f"integration failed: {out.message}")

    samples = {"t": [], "states": [], "S": [], "diss": [], "u": [],
               "res": []}
    for idx in range(out.t.size):
        theta = out.y[:n, idx]
        omega = out.y[n: 2 * n, idx]
        xi = out.y[2 * n:, idx]
        state = SimState(phi_g=geo.E.T @ theta, phi_l=np.zeros(n - 1),
                         omega_g=omega, xi=xi, t=float(out.t[idx]))
        u = geo.injections(xi, omega, u_override)
        _record(geo, samples, state, 0.0, equilibrium, u)
    return _finish(samples, [f"solver steps: {out.t.size}"])


# ---------------------------------------------------------------------------
# Storage functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StorageEval:
    """Storage sample: value, region flag, optional Popov angle term."""

    S: float
    in_region: bool
    Z: Optional[float] = None


def potential_energy(model, phi):
    """U(phi) = -sum_k gamma_k cos(eta_k) with eta = R_phi^T phi."""
    Rphi = reduced_incidence(model)
    gamma = edge_weights(model)
    return float(-gamma @ np.cos(Rphi.T @ phi))


def storage_value(geo, phi, omega, sol):
    dw = omega - sol.omega_star
    eta = geo.Rphi.T @ phi
    eta_bar = sol.eta_bar
    kinetic = 0.5 * float(dw @ (geo.M * dw))
    bregman = float(-geo.gamma @ np.cos(eta) + geo.gamma @ np.cos(eta_bar)
                    - (eta - eta_bar) @ (geo.gamma * np.sin(eta_bar)))
    return kinetic + bregman


def storage_S(model, state, sol):
    """Incremental storage: kinetic energy plus the angle Bregman distance.

    Nonnegative inside the security region and zero exactly at the
    synchronous solution; ``in_region`` is False when either the state or
    the reference sits outside (-pi/2, pi/2) line angles, where
    nonnegativity is no longer guaranteed.
    """
    geo = _Geometry(model)
    phi = state.phi_g + state.phi_l
    eta = geo.Rphi.T @ phi
    in_region = bool(np.all(np.abs(eta) < np.pi / 2)
                     and np.all(np.abs(sol.eta_bar) < np.pi / 2))
    return StorageEval(S=storage_value(geo, phi, state.omega_g, sol),
                       in_region=in_region)


def popov_Z(model, theta, theta_bar, rho):
    """Bregman angle term of the Popov Lyapunov function.

    Z = rho * (-1^T Gamma cos(R^T theta) + 1^T Gamma cos(R^T theta_bar))
        - rho * (theta - theta_bar)^T R Gamma sin(R^T theta_bar).
    Nonnegative for line angles inside (-pi/2, pi/2), zero when the line
    angle differences match the reference.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    R = incidence_matrix(model)
    gamma = edge_weights(model)
    eta = R.T @ np.asarray(theta, dtype=float)
    eta_bar = R.T @ np.asarray(theta_bar, dtype=float)
    val = (-gamma @ np.cos(eta) + gamma @ np.cos(eta_bar)
           - (eta - eta_bar) @ (gamma * np.sin(eta_bar)))
    return float(rho * val)


def passivity_identity_check(traj, model, sol):
    """Max residual of dS/dt = -dw^T D dw + dw^T (u - u_bar) on samples.

    Uses centered differences of the recorded storage samples against the
    recorded dissipation, skipping the endpoints. Needs at least three
    samples and a trajectory recorded with an equilibrium reference.
    """
    if traj.times.size < 3:
        raise ValueError("need at least three samples")
    if np.any(np.isnan(traj.storage)):
        raise ValueError("trajectory was recorded without an equilibrium "
                         "reference, storage samples are undefined")
    worst = 0.0
    for k in range(1, traj.times.size - 1):
        dt_f = traj.times[k + 1] - traj.times[k]
        dt_b = traj.times[k] - traj.times[k - 1]
        if abs(dt_f - dt_b) > 1e-9 * max(dt_f, dt_b):
            continue  # centered difference needs even spacing
        dS = (traj.storage[k + 1] - traj.storage[k - 1]) / (dt_f + dt_b)
        worst = max(worst, abs(dS - traj.dissipation[k]))
    return worst


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def write_trajectory_csv(traj, model, path):
    """Write t, per-generator frequencies, per-edge angles, S, residual.

    Column order follows the bus and edge ordering of the model, so the
    same scenario always produces the same header and layout.
    """
    gens = list(model.generator_set)
    eta = traj.eta_matrix(model)
    header = (["t"] + [f"omega_bus{i}" for i in gens]
              + [f"eta_{e.i}_{e.j}" for e in model.lines]
              + ["storage", "alg_residual"])
    lines = [",".join(header)]
    for k in range(traj.times.size):
        row = [repr(float(traj.times[k]))]
        row += [repr(float(w)) for w in traj.states[k].omega_g]
        row += [repr(float(x)) for x in eta[k]]
        row.append(repr(float(traj.storage[k])))
        row.append(repr(float(traj.alg_residual[k])))
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
