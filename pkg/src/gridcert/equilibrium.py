"""Synchronous solutions: frequency, internal states and angle profiles.

A synchronous solution is the steady operating point in reference-bus
coordinates: a common frequency deviation omega_star, steady internal
states xi_bar, and bus angles theta0_bar (reference entry pinned to zero)
solving the lossless power flow. Feasibility additionally requires the
security constraint that every line angle difference stays inside
(-pi/2, pi/2).
"""

from dataclasses import dataclass

import numpy as np

from . import dynamics as dyn_mod
from .dynamics import LinearSS
from .errors import (DegenerateDroopError, InfeasiblePowerFlowError, ModelError,
                     NoSynchronousSolutionError, TreeRequiredError,
                     UnsupportedDynamicsError)
from .network import (active_power, coupling_bound_sigma, edge_weights,
                      incidence_matrix)

SECURITY_MARGIN = 1e-6  # rad


@dataclass(frozen=True)
class SynchronousSolution:
    """Steady state of the network in reference-bus coordinates."""

    omega_star: float
    theta0_bar: np.ndarray        # absolute angle offsets, reference = 0
    phi_bar: np.ndarray           # relative angles (reference entry removed)
    xi_bar: tuple                 # per-generator internal state arrays
    u_bar: np.ndarray             # per-generator steady injections
    eta_bar: np.ndarray           # per-edge angle differences R^T theta0_bar
    residual_norm: float
    security_ok: bool

    @property
    def xi_concat(self):
        return np.concatenate(self.xi_bar) if self.xi_bar else np.zeros(0)


def security_check(eta, margin=SECURITY_MARGIN):
    """True when every line angle difference obeys |eta_k| <= pi/2 - margin."""
    eta = np.asarray(eta, dtype=float)
    if eta.size == 0:
        return True
    return bool(np.max(np.abs(eta)) <= np.pi / 2 - margin)


def steady_droop_terms(model):
    """Per-generator steady droop D_i - C_i A_i^-1 B_i for linear blocks."""
    terms = []
    for i in model.generator_set:
        bus = model.buses[i]
        if bus.dynamics is None:
            terms.append(bus.D)
        elif isinstance(bus.dynamics, LinearSS):
            terms.append(bus.D + bus.dynamics.dc_droop())
        else:
            raise UnsupportedDynamicsError(
                f"bus {i}: linear synchronous frequency needs LinearSS blocks")
    return np.array(terms)


def sync_frequency_linear(model):
    """Synchronous frequency for all-linear generation dynamics.

    Solves the column-summed steady equations: since the power transfers
    cancel under the column sum, sum_i p*_i = omega_star * sum_i
    (D_i - C_i A_i^-1 B_i). The returned value back-substitutes into the
    summed steady equations with zero residual by construction; the full
    per-bus validation happens once the angles are solved.
    """
    if model.load_set:
        raise ModelError("linear synchronous frequency assumes no load buses")
    droop = steady_droop_terms(model)
    total = float(droop.sum())
    if total <= 0.0:
        raise DegenerateDroopError(
            f"aggregate steady droop {total:.4g} is nonpositive")
    p_net = float(sum(b.p_star for b in model.buses))
    return p_net / total


def harmonic_mean_frequency(model):
    """Alternative closed form 1^T p* / (1^T (D - C A^-1 B)^-1 1).

    Normalizes by the sum of reciprocal droops instead of the sum of
    droops. The two agree only when all per-bus droop terms are equal;
    reports surface the relative discrepancy so nobody trips over it.
    """
    droop = steady_droop_terms(model)
    if np.any(droop <= 0):
        raise DegenerateDroopError("nonpositive per-bus steady droop")
    p_net = float(sum(b.p_star for b in model.buses))
    return p_net / float((1.0 / droop).sum())


def solve_power_flow(model, c, tol=1e-10, max_iter=60,
                     security_margin=SECURITY_MARGIN):
    """Angles theta0_bar with R Gamma sin(R^T theta0_bar) = c, reference 0.

    Damped Newton on the reduced system (reference row and column
    removed), starting from zero angles. Steps use Armijo backtracking on
    the residual norm (initial step 1, halving, at most 40 backtracks) and
    every iterate is kept strictly inside the security region, where the
    reduced Jacobian R Gamma diag(cos) R^T is positive definite.

    Raises ``InfeasiblePowerFlowError`` (carrying the last iterate) on
    stagnation or when progress requires leaving the security region.
    """
    c = np.asarray(c, dtype=float)
    if c.shape != (model.n_bus,):
        raise ModelError(f"c must have length {model.n_bus}")
    if abs(c.sum()) > 1e-10 * max(1.0, np.abs(c).max()):
        raise ModelError("power flow right side must sum to zero")
    if model.n_bus == 1:
        return np.zeros(1)
    R = incidence_matrix(model)
    gamma = edge_weights(model)
    ref = model.reference_bus
    keep = [i for i in range(model.n_bus) if i != ref]
    eta_cap = np.pi / 2 - security_margin

    theta = np.zeros(model.n_bus)

    def residual(th):
        return (R @ (gamma * np.sin(R.T @ th)))[keep] - c[keep]

    r = residual(theta)
    for _ in range(max_iter):
        if np.max(np.abs(r)) <= tol:
            eta = R.T @ theta
            if np.max(np.abs(eta), initial=0.0) >= eta_cap:
                raise InfeasiblePowerFlowError(
                    "solution sits outside the security region", theta)
            return theta
        eta = R.T @ theta
        J = (R @ np.diag(gamma * np.cos(eta)) @ R.T)[np.ix_(keep, keep)]
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise InfeasiblePowerFlowError(
                "singular power-flow Jacobian", theta) from None
        rnorm = np.linalg.norm(r)
        alpha = 1.0
        for _ in range(40):
            trial = theta.copy()
            trial[keep] += alpha * step
            eta_t = R.T @ trial
            if np.max(np.abs(eta_t), initial=0.0) < eta_cap:
                r_t = residual(trial)
                if np.linalg.norm(r_t) <= (1.0 - 1e-4 * alpha) * rnorm:
                    theta, r = trial, r_t
                    break
            alpha *= 0.5
        else:
            raise InfeasiblePowerFlowError(
                "Newton stagnated inside the security region", theta)
    raise InfeasiblePowerFlowError("Newton did not converge", theta)


def _steady_injection(model, omega):
    """Per-generator (xi_bar, u_bar) at a common frequency omega."""
    xi, u = [], []
    for i in model.generator_set:
        xb, ub = dyn_mod.steady_state(model.buses[i].dynamics, omega)
        xi.append(xb)
        u.append(ub)
    return xi, np.array(u)


def solve_equilibrium_dae(model, tol=1e-12, max_expand=60):
    """Synchronous solution of the full differential-algebraic model.

    Splits into a scalar equation for omega_star and a power flow for the
    angles: summing the steady equations over all buses leaves
    g(w) = 1^T p* - sum_i D_i w + sum_i u_bar_i(w) = 0, with g strictly
    decreasing because D_i > 0 and every block's steady injection is
    nonincreasing in w. The root is found by bisection on an expanding
    bracket; ``NoSynchronousSolutionError`` if no sign change appears.
    """
    gens = model.generator_set
    D = np.array([model.buses[i].D for i in gens])
    p_net = float(sum(b.p_star for b in model.buses))

    def g(w):
        _, u = _steady_injection(model, w)
        return p_net - float(D.sum()) * w + float(u.sum())

    width = (1.0 + abs(p_net)) / float(D.sum())
    lo, hi = -width, width
    expand = 0
    while g(lo) < 0 and expand < max_expand:
        lo *= 2.0
        expand += 1
    while g(hi) > 0 and expand < max_expand:
        hi *= 2.0
        expand += 1
    if g(lo) < 0 or g(hi) > 0:
        raise NoSynchronousSolutionError(
            "no sign change in the synchronous-frequency bracket")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo < tol * (1.0 + abs(mid)):
            break
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    omega_star = 0.5 * (lo + hi)

    xi_bar, u_bar = _steady_injection(model, omega_star)
    c = np.array([b.p_star for b in model.buses], dtype=float)
    for pos, i in enumerate(gens):
        c[i] += -model.buses[i].D * omega_star + u_bar[pos]
    c -= c.sum() / model.n_bus  # remove the bisection remainder exactly

    theta0 = solve_power_flow(model, c)
    R = incidence_matrix(model)
    eta = R.T @ theta0
    keep = [i for i in range(model.n_bus) if i != model.reference_bus]
    res = _steady_residual(model, omega_star, theta0, xi_bar, u_bar)
    return SynchronousSolution(
        omega_star=float(omega_star),
        theta0_bar=theta0,
        phi_bar=theta0[keep] - theta0[model.reference_bus],
        xi_bar=tuple(xi_bar),
        u_bar=u_bar,
        eta_bar=eta,
        residual_norm=float(res),
        security_ok=security_check(eta),
    )


def _steady_residual(model, omega_star, theta0, xi_bar, u_bar):
    p = active_power(model, theta0)
    res = 0.0
    for pos, i in enumerate(model.generator_set):
        bus = model.buses[i]
        swing = -bus.D * omega_star - p[i] + bus.p_star + u_bar[pos]
        res = max(res, abs(swing))
        dxi = dyn_mod.rhs(bus.dynamics, xi_bar[pos], omega_star)
        if dxi.size:
            res = max(res, float(np.max(np.abs(dxi))))
    for i in model.load_set:
        res = max(res, abs(model.buses[i].p_star - p[i]))
    return res


def equilibrium_residual(model, sol):
    """Max-norm residual of the steady equations at a candidate solution."""
    return _steady_residual(model, sol.omega_star, sol.theta0_bar,
                            sol.xi_bar, sol.u_bar)


@dataclass(frozen=True)
class TreeFeasibility:
    """Closed-form feasibility test outcome on a tree network."""

    feasible_guarantee: bool
    norm_value: float
    eta_bar: np.ndarray = None


def tree_feasibility(model, c):
    """Tree-network feasibility: ||Gamma^-1 (R^T R)^-1 R^T c||_inf < 1.

    On trees the incidence matrix has full column rank, so the per-line
    loadings are available in closed form; when the test passes, the line
    angles follow directly as eta_bar = arcsin of the loading vector.
    """
    if not model.is_tree():
        raise TreeRequiredError(
            f"graph has {model.n_edge} edges and {model.n_bus} buses; "
            "a tree requires edges = buses - 1")
    c = np.asarray(c, dtype=float)
    R = incidence_matrix(model)
    gamma = edge_weights(model)
    loading = np.linalg.solve(R.T @ R, R.T @ c) / gamma
    norm = float(np.max(np.abs(loading))) if loading.size else 0.0
    ok = norm < 1.0
    eta = np.arcsin(loading) if ok else None
    return TreeFeasibility(feasible_guarantee=ok, norm_value=norm,
                           eta_bar=eta)


def sigma_with_overrides(model, overrides=None):
    """Coupling bounds with optional upward per-bus overrides.

    Overrides below the computed bound are rejected: the certificates only
    need an upper bound on the neighborhood coupling, so lowering it below
    the physical value would void them.
    """
    sigma = coupling_bound_sigma(model)
    if overrides:
        for i, value in overrides.items():
            if value < sigma[i] - 1e-12:
                raise ModelError(
                    f"sigma override {value} at bus {i} is below the "
                    f"computed coupling bound {sigma[i]:.6g}")
            sigma[i] = value
    return sigma
