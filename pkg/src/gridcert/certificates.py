"""Decentralized frequency-stability certificates.

Three families of sufficient conditions are implemented, all decided per
bus from local data:

* small incremental gain: the generation block's incremental L2 gain must
  stay below the bus damping, delta_i < D_i;
* secant: the block is split into a cascade of output-strictly
  incrementally passive subsystems with coefficients Q_ij, and the loop
  gain must satisfy 1/D_i < Q_i1 ... Q_in * sec(pi/(n+1))^(n+1);
* Popov-like: for linear generation dynamics on an all-generator network,
  a common multiplier rho must make the shifted transfer
  1/sigma_i + (1 + rho s)/s * G_i(s) positive real at every bus, where
  sigma_i bounds twice the neighborhood coupling.

All the inequalities are strict; a result is certified only when its
margin clears ``PASS_MARGIN`` and anything closer is flagged borderline.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import lti
from .dynamics import FirstOrder, LinearSS, SecondOrder, StaticMonotone
from .errors import (BracketError, DivisionByZeroSigmaError,
                     IncompleteGainsError, PolePlacementConflictError,
                     UnsupportedDynamicsError,
                     UnsupportedTopologyForPopovError)
from .network import BusParams, NetworkModel, coupling_bound_sigma, \
    edge_weights, incidence_matrix

PASS_MARGIN = 1e-9
DEFAULT_RHO_GRID = (1e-3, 1e3, 61)


@dataclass(frozen=True)
class CascadeBlock:
    kind: str          # "static" or "dynamic"
    q: float           # output-strict passivity coefficient, > 0
    storage: str       # description of the storage function used


@dataclass(frozen=True)
class CascadeDecomposition:
    """Ordered chain of passive blocks; the output of each feeds the next."""

    blocks: tuple

    @property
    def n_blocks(self):
        return len(self.blocks)

    @property
    def q_product(self):
        out = 1.0
        for b in self.blocks:
            out *= b.q
        return out


def secant_factor(n_blocks):
    """sec(pi/(n+1))^(n+1), the cyclic-cascade gain allowance."""
    if n_blocks < 1:
        raise ValueError("secant factor needs at least one block")
    return (1.0 / math.cos(math.pi / (n_blocks + 1))) ** (n_blocks + 1)


def cascade_decompose(dynamics):
    """Split a generation block into its passive cascade.

    A first-order lag behind a monotone map gives two blocks with
    coefficients (1/slope, 1). The second-order block gives three:
    the input map, the gradient-flow stage with coefficient equal to the
    convexity modulus, and the output lag. A strictly increasing output
    map folds into the last stage through a Bregman storage, keeping the
    chain at three blocks with coefficient 1/output_slope instead of 1.
    """
    if dynamics is None:
        return CascadeDecomposition(blocks=())
    if isinstance(dynamics, StaticMonotone):
        return CascadeDecomposition(blocks=(
            CascadeBlock("static", 1.0 / dynamics.slope,
                         "incremental sector bound"),))
    if isinstance(dynamics, FirstOrder):
        return CascadeDecomposition(blocks=(
            CascadeBlock("static", 1.0 / dynamics.slope,
                         "incremental sector bound"),
            CascadeBlock("dynamic", 1.0,
                         "tau/2 (xi - xi_bar)^2"),
        ))
    if isinstance(dynamics, SecondOrder):
        if dynamics.output_map is None:
            last = CascadeBlock("dynamic", 1.0,
                                "tau_b/2 (beta - beta_bar)^2")
        else:
            last = CascadeBlock("dynamic", 1.0 / dynamics.output_slope,
                                "Bregman distance of the output primitive")
        return CascadeDecomposition(blocks=(
            CascadeBlock("static", 1.0 / dynamics.k_slope,
                         "incremental sector bound"),
            CascadeBlock("dynamic", dynamics.cost_modulus,
                         "tau_a/2 (alpha - alpha_bar)^2"),
            last,
        ))
    raise UnsupportedDynamicsError(
        "cascade decomposition covers static, first- and second-order "
        "blocks; linear state-space blocks go through the Popov test")


def block_l2_gain(dynamics):
    """Incremental L2-gain bound of a generation block.

    Slope-bounded static and first-order blocks pass their slope through;
    the second-order block has gain k_slope / cost_modulus, multiplied by
    the output-map slope when one is present.
    """
    if dynamics is None:
        return 0.0
    if isinstance(dynamics, (StaticMonotone, FirstOrder)):
        return float(dynamics.slope)
    if isinstance(dynamics, SecondOrder):
        gain = dynamics.k_slope / dynamics.cost_modulus
        if dynamics.output_map is not None:
            gain *= dynamics.output_slope
        return float(gain)
    raise UnsupportedDynamicsError(
        "no generic L2-gain bound for linear state-space blocks; "
        "use the Popov test")


# ---------------------------------------------------------------------------
# Report containers
# ---------------------------------------------------------------------------

@dataclass
class BusCertificate:
    bus: int
    passed: bool
    margin: float
    borderline: bool
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {"bus": self.bus, "passed": self.passed,
                "margin": self.margin, "borderline": self.borderline,
                "params": dict(self.params)}


@dataclass
class Lemma3Result:
    psd: bool
    min_eigenvalue: float
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {"psd": self.psd, "min_eigenvalue": self.min_eigenvalue,
                "warnings": list(self.warnings)}


@dataclass
class CertificateReport:
    """Per-bus outcomes of one certificate family plus network-level data."""

    test: str
    passed: bool
    entries: list
    rho: Optional[float] = None
    passive_limit: bool = False
    rho_grid: Optional[np.ndarray] = None
    rho_min_margins: Optional[np.ndarray] = None
    lemma3: Optional[Lemma3Result] = None
    warnings: list = field(default_factory=list)

    def entry(self, bus):
        for e in self.entries:
            if e.bus == bus:
                return e
        raise KeyError(bus)

    def to_dict(self):
        out = {
            "test": self.test,
            "passed": self.passed,
            "buses": [e.to_dict() for e in self.entries],
            "warnings": list(self.warnings),
        }
        if self.test == "popov":
            out["rho"] = self.rho
            out["passive_limit"] = self.passive_limit
            if self.rho_grid is not None:
                out["rho_grid"] = [float(r) for r in self.rho_grid]
                out["rho_min_margins"] = [float(m)
                                          for m in self.rho_min_margins]
        if self.lemma3 is not None:
            out["lemma3"] = self.lemma3.to_dict()
        return out


def _certify(margin):
    passed = margin > PASS_MARGIN
    borderline = abs(margin) <= PASS_MARGIN
    return passed, borderline


# ---------------------------------------------------------------------------
# Small-gain and secant checks
# ---------------------------------------------------------------------------

def small_gain_check(model, gains=None):
    """delta_i < D_i per generator bus.

    ``gains`` optionally supplies the incremental L2 gains per bus index;
    missing entries are derived with ``block_l2_gain`` where possible.
    """
    gains = dict(gains or {})
    entries = []
    for i in model.generator_set:
        bus = model.buses[i]
        if i in gains:
            delta = float(gains[i])
        else:
            try:
                delta = block_l2_gain(bus.dynamics)
            except UnsupportedDynamicsError:
                raise IncompleteGainsError(
                    f"bus {i}: supply an L2 gain, none can be derived for "
                    "linear state-space dynamics") from None
        if delta < 0:
            raise IncompleteGainsError(f"bus {i}: gain must be nonnegative")
        margin = bus.D - delta
        passed, borderline = _certify(margin)
        entries.append(BusCertificate(i, passed, margin, borderline,
                                      {"delta": delta, "D": bus.D}))
    return CertificateReport("small_gain", all(e.passed for e in entries),
                             entries)


def secant_check(model):
    """Cascade secant condition per generator bus."""
    entries = []
    for i in model.generator_set:
        bus = model.buses[i]
        decomp = cascade_decompose(bus.dynamics)
        if decomp.n_blocks == 0:
            entries.append(BusCertificate(
                i, True, math.inf, False,
                {"n_blocks": 0, "note": "no feedback block"}))
            continue
        allowance = decomp.q_product * secant_factor(decomp.n_blocks)
        margin = allowance - 1.0 / bus.D
        passed, borderline = _certify(margin)
        entries.append(BusCertificate(
            i, passed, margin, borderline,
            {"n_blocks": decomp.n_blocks,
             "q": [b.q for b in decomp.blocks],
             "secant_factor": secant_factor(decomp.n_blocks),
             "D": bus.D}))
    return CertificateReport("secant", all(e.passed for e in entries),
                             entries)


# ---------------------------------------------------------------------------
# Coupling-bound PSD check
# ---------------------------------------------------------------------------

def lemma3_psd_check(model, sigma, tol=1e-10):
    """Minimum eigenvalue of Gamma^-1 - R^T Sigma^-1 R.

    The matrix is positive semidefinite whenever every sigma_i is at least
    twice the weighted degree; callers may pass larger values. A zero
    sigma on a bus with incident lines is rejected, a zero sigma on an
    isolated bus contributes nothing.
    """
    sigma = np.asarray(sigma, dtype=float)
    bound = coupling_bound_sigma(model)
    warnings_ = []
    inv_sigma = np.zeros(model.n_bus)
    for i in range(model.n_bus):
        if sigma[i] <= 0.0:
            if bound[i] > 0.0:
                raise DivisionByZeroSigmaError(
                    f"sigma is zero at bus {i}, which has incident lines")
            continue
        inv_sigma[i] = 1.0 / sigma[i]
        if sigma[i] < bound[i] - 1e-12:
            warnings_.append(
                f"sigma[{i}]={sigma[i]:.6g} is below the coupling bound "
                f"{bound[i]:.6g}; the PSD property is not guaranteed")
    if model.n_edge == 0:
        return Lemma3Result(True, math.inf, warnings_)
    R = incidence_matrix(model)
    gamma = edge_weights(model)
    mat = np.diag(1.0 / gamma) - R.T @ np.diag(inv_sigma) @ R
    min_eig = float(np.linalg.eigvalsh(mat)[0])
    return Lemma3Result(min_eig >= -tol, min_eig, warnings_)


# ---------------------------------------------------------------------------
# Popov-like check with a common multiplier
# ---------------------------------------------------------------------------

def _rho_grid_array(rho_grid):
    if rho_grid is None:
        rho_grid = DEFAULT_RHO_GRID
    if isinstance(rho_grid, tuple) and len(rho_grid) == 3:
        lo, hi, n = rho_grid
        return np.geomspace(lo, hi, int(n))
    return np.asarray(rho_grid, dtype=float)


def popov_check(model, sigma=None, rho_grid=None):
    """Common-multiplier positive-realness certificate.

    Requires an all-generator network with LinearSS (or absent) internal
    dynamics. Each candidate rho from the grid is tried as the single
    shared multiplier; the certificate passes when one rho makes every
    shifted bus transfer positive real with margin, or when every raw bus
    transfer is itself positive real (the large-rho limit, independent of
    sigma). A bus with sigma_i = 0 is decoupled, so only the pole
    conditions of its shifted transfer are binding there.

    Per-bus screening failures (imaginary eigenvalues of the isolated bus
    matrix, nonpositive steady droop) are reported as failed entries
    rather than raised.
    """
    if model.load_set:
        raise UnsupportedTopologyForPopovError(
            "the Popov certificate needs inertia at every bus; "
            f"buses {list(model.load_set)} are algebraic loads")
    if sigma is None:
        sigma = coupling_bound_sigma(model)
    sigma = np.asarray(sigma, dtype=float)
    gens = list(model.generator_set)
    warnings_ = []

    bound = coupling_bound_sigma(model)
    for i in gens:
        if sigma[i] < bound[i] - 1e-12:
            warnings_.append(
                f"sigma[{i}]={sigma[i]:.6g} is below the coupling bound "
                f"{bound[i]:.6g}; the certificate then only covers weaker "
                "line parameters")

    screen_fail = []
    transfers = {}
    for i in gens:
        bus = model.buses[i]
        if bus.dynamics is not None and not isinstance(bus.dynamics,
                                                       LinearSS):
            raise UnsupportedDynamicsError(
                f"bus {i}: the Popov certificate needs LinearSS dynamics")
        screening = lti.screen_bus(bus)
        if not screening.ok:
            screen_fail.append(BusCertificate(
                i, False, -math.inf, False,
                {"screening": "failed",
                 "imaginary_eigenvalues":
                     [str(l) for l in screening.imaginary_eigenvalues],
                 "dc_droop": screening.dc_droop}))
            continue
        dyn = bus.dynamics
        if isinstance(dyn, LinearSS) and dyn.n > 0:
            if not (lti.pbh_controllable(dyn.A, dyn.B)
                    and lti.pbh_observable(dyn.C, dyn.A)):
                warnings_.append(f"bus {i}: internal realization is not "
                                 "minimal; the certificate storage may be "
                                 "degenerate")
        transfers[i] = lti.bus_transfer(bus)

    if screen_fail:
        return CertificateReport("popov", False, screen_fail,
                                 warnings=warnings_)

    # large-rho limit: every raw bus transfer positive real
    passive_entries = []
    for i in gens:
        verdict = lti.is_positive_real(transfers[i])
        passive_entries.append(BusCertificate(
            i, verdict.is_pr and verdict.margin > PASS_MARGIN,
            verdict.margin, verdict.borderline,
            {"sigma": float(sigma[i]), "rho": None}))
    passive_pass = all(e.passed for e in passive_entries)

    grid = _rho_grid_array(rho_grid)
    margins = np.full((len(grid), len(gens)), -math.inf)
    for r, rho in enumerate(grid):
        for b, i in enumerate(gens):
            s_i = float(sigma[i])
            try:
                if s_i == 0.0:
                    H = lti.popov_transform(transfers[i], None, rho)
                    verdict = lti.is_positive_real(H, slack=math.inf)
                else:
                    H = lti.popov_transform(transfers[i], s_i, rho)
                    verdict = lti.is_positive_real(H)
            except PolePlacementConflictError:
                break  # this rho collides with a pole; try the next one
            margins[r, b] = verdict.margin
    min_margins = margins.min(axis=1)
    best = int(np.argmax(min_margins))
    grid_pass = bool(min_margins[best] > PASS_MARGIN)

    if grid_pass:
        rho_star = float(grid[best])
        entries = [BusCertificate(
            i, True, float(margins[best, b]),
            abs(margins[best, b]) <= PASS_MARGIN,
            {"sigma": float(sigma[i]), "rho": rho_star})
            for b, i in enumerate(gens)]
        return CertificateReport("popov", True, entries, rho=rho_star,
                                 passive_limit=False, rho_grid=grid,
                                 rho_min_margins=min_margins,
                                 warnings=warnings_)
    if passive_pass:
        return CertificateReport("popov", True, passive_entries, rho=None,
                                 passive_limit=True, rho_grid=grid,
                                 rho_min_margins=min_margins,
                                 warnings=warnings_)
    entries = [BusCertificate(
        i, bool(margins[best, b] > PASS_MARGIN), float(margins[best, b]),
        abs(margins[best, b]) <= PASS_MARGIN,
        {"sigma": float(sigma[i]), "rho": float(grid[best])})
        for b, i in enumerate(gens)]
    return CertificateReport("popov", False, entries, rho=None,
                             passive_limit=False, rho_grid=grid,
                             rho_min_margins=min_margins,
                             warnings=warnings_)


def scaled_droop_dynamics(dynamics, k):
    """LinearSS with the input matrix rescaled to steady droop k."""
    if not isinstance(dynamics, LinearSS):
        raise UnsupportedDynamicsError(
            "droop rescaling needs LinearSS dynamics")
    ref = dynamics.dc_droop()
    if ref <= 0:
        raise UnsupportedDynamicsError(
            "droop rescaling needs a positive reference steady droop")
    return LinearSS(dynamics.A, dynamics.B * (k / ref), dynamics.C)


def _with_bus_dynamics(model, bus_index, dynamics):
    buses = list(model.buses)
    old = buses[bus_index]
    buses[bus_index] = BusParams(p_star=old.p_star, V=old.V, M=old.M,
                                 D=old.D, dynamics=dynamics)
    return NetworkModel(tuple(buses), model.lines, model.reference_bus)


def max_droop_search(model, bus_index, sigma=None, bracket=(1.0, 40.0),
                     tol=0.05, rho_grid=None, dynamics_factory=None):
    """Largest droop gain at one bus keeping the Popov certificate valid.

    ``dynamics_factory(k)`` builds the bus dynamics for a candidate gain;
    by default the existing LinearSS input matrix is rescaled so that its
    steady droop equals k. The bracket endpoints must straddle the
    pass/fail transition; bisection then narrows the gain to ``tol``.
    """
    if dynamics_factory is None:
        base = model.buses[bus_index].dynamics

        def dynamics_factory(k):
            return scaled_droop_dynamics(base, k)

    def passes(k):
        candidate = _with_bus_dynamics(model, bus_index, dynamics_factory(k))
        return popov_check(candidate, sigma=sigma, rho_grid=rho_grid).passed

    lo, hi = float(bracket[0]), float(bracket[1])
    if not passes(lo):
        raise BracketError(f"lower bracket k={lo} already fails")
    if passes(hi):
        raise BracketError(f"upper bracket k={hi} still passes")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
