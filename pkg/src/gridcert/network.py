"""Structure-preserving network model and graph primitives.

Buses are indexed 0..n. Generator buses carry inertia, damping and a
generation-dynamics block; load buses are purely algebraic constant-power
nodes. Lines are lossless with constant voltage magnitudes, so every edge
k joining buses {i, j} has weight gamma_k = b_abs * V_i * V_j.

Edge ordering is deterministic: lexicographic by (min endpoint,
max endpoint), oriented from the smaller to the larger bus index. The
incidence matrix column for an edge holds -1 at its source (smaller index)
and +1 at its sink.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import GenerationDynamics
from .errors import DisconnectedGraphError, ModelError


@dataclass(frozen=True)
class Line:
    """Transmission line between buses i and j with |susceptance| b_abs."""

    i: int
    j: int
    b_abs: float

    def __post_init__(self):
        if self.i == self.j:
            raise ModelError(f"self-loop at bus {self.i}")
        if self.b_abs <= 0:
            raise ModelError(f"line ({self.i},{self.j}) needs b_abs > 0")
        if self.i > self.j:  # canonical orientation: small -> large
            i, j = self.j, self.i
            object.__setattr__(self, "i", i)
            object.__setattr__(self, "j", j)


@dataclass(frozen=True)
class BusParams:
    """Per-bus data. Generator buses set M, D (and usually dynamics)."""

    p_star: float
    V: float = 1.0
    M: Optional[float] = None       # s^2 pu, generators only
    D: Optional[float] = None       # pu, generators only
    dynamics: object = None         # GenerationDynamics block or None

    def __post_init__(self):
        if self.V <= 0:
            raise ModelError("bus voltage must be positive")
        if self.is_generator:
            if self.M is None or self.D is None or self.M <= 0 or self.D <= 0:
                raise ModelError("generator bus needs M > 0 and D > 0")
        else:
            if self.dynamics is not None:
                raise ModelError("load bus cannot carry generation dynamics")
        if self.dynamics is not None and not isinstance(
                self.dynamics, GenerationDynamics):
            raise ModelError(f"unknown dynamics block {self.dynamics!r}")

    @property
    def is_generator(self):
        return self.M is not None or self.D is not None


@dataclass(frozen=True)
class NetworkModel:
    """Immutable bus/line model with a designated reference generator bus."""

    buses: tuple
    lines: tuple
    reference_bus: int = 0

    def __post_init__(self):
        buses = tuple(self.buses)
        lines = tuple(sorted(self.lines, key=lambda e: (e.i, e.j)))
        object.__setattr__(self, "buses", buses)
        object.__setattr__(self, "lines", lines)
        n = len(buses)
        if n < 1:
            raise ModelError("model needs at least one bus")
        seen = set()
        for e in lines:
            if not (0 <= e.i < n and 0 <= e.j < n):
                raise ModelError(f"line ({e.i},{e.j}) references unknown bus")
            if (e.i, e.j) in seen:
                raise ModelError(f"duplicate line ({e.i},{e.j})")
            seen.add((e.i, e.j))
        if not self.generator_set:
            raise ModelError("model needs at least one generator bus")
        if not (0 <= self.reference_bus < n):
            raise ModelError("reference bus out of range")
        if not buses[self.reference_bus].is_generator:
            raise ModelError("reference bus must be a generator")
        comps = connected_components(n, lines)
        if len(comps) > 1:
            raise DisconnectedGraphError(comps)

    @property
    def n_bus(self):
        return len(self.buses)

    @property
    def n_edge(self):
        return len(self.lines)

    @property
    def generator_set(self):
        return tuple(i for i, b in enumerate(self.buses) if b.is_generator)

    @property
    def load_set(self):
        return tuple(i for i, b in enumerate(self.buses)
                     if not b.is_generator)

    def is_tree(self):
        return self.n_edge == self.n_bus - 1


def connected_components(n_bus, lines):
    """Vertex sets of the connected components (union-find)."""
    parent = list(range(n_bus))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in lines:
        ra, rb = find(e.i), find(e.j)
        if ra != rb:
            parent[ra] = rb
    groups = {}
    for v in range(n_bus):
        groups.setdefault(find(v), []).append(v)
    return list(groups.values())


def incidence_matrix(model):
    """Oriented incidence matrix R, shape (n_bus, n_edge).

    Column k has -1 at the source (smaller endpoint) and +1 at the sink of
    edge k, so R^T theta gives the per-line angle differences
    theta_sink - theta_source and 1^T R = 0.
    """
    R = np.zeros((model.n_bus, model.n_edge))
    for k, e in enumerate(model.lines):
        R[e.i, k] = -1.0
        R[e.j, k] = 1.0
    return R


def edge_weights(model):
    """gamma_k = b_abs * V_i * V_j per edge, ordered like the incidence."""
    V = np.array([b.V for b in model.buses])
    return np.array([e.b_abs * V[e.i] * V[e.j] for e in model.lines])


def laplacian(model):
    """Weighted graph Laplacian R Gamma R^T (symmetric PSD, 1 in kernel)."""
    R = incidence_matrix(model)
    return R @ np.diag(edge_weights(model)) @ R.T


def active_power(model, theta):
    """Lossless active power drawn at each bus for absolute angles theta.

    Evaluates R Gamma sin(R^T theta); the result sums to zero and is
    invariant under a common shift of all angles.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.n_bus,):
        raise ModelError(f"theta must have length {model.n_bus}")
    R = incidence_matrix(model)
    gamma = edge_weights(model)
    return R @ (gamma * np.sin(R.T @ theta))


def coupling_bound_sigma(model):
    """Per-bus coupling bound: twice the weighted degree, 2 sum_j gamma_ij.

    This is the tightest sigma for which the line-parameter bound
    sum_j b_abs V_i V_j <= sigma_i / 2 holds with equality.
    """
    sigma = np.zeros(model.n_bus)
    gamma = edge_weights(model)
    for k, e in enumerate(model.lines):
        sigma[e.i] += 2.0 * gamma[k]
        sigma[e.j] += 2.0 * gamma[k]
    return sigma


def reference_projector(model):
    """E with E^T = [-1 I] arranged for this model's reference bus.

    Maps absolute angles to the n relative angles phi = E^T theta
    (reference entry removed). Rows of E are indexed by bus, so row
    slices E_g, E_l select generator and load buses.
    """
    n = model.n_bus
    others = [i for i in range(n) if i != model.reference_bus]
    E = np.zeros((n, n - 1))
    E[model.reference_bus, :] = -1.0
    for col, i in enumerate(others):
        E[i, col] = 1.0
    return E


def reduced_incidence(model):
    """Incidence with the reference row removed (R_phi), shape (n, m)."""
    R = incidence_matrix(model)
    keep = [i for i in range(model.n_bus) if i != model.reference_bus]
    return R[keep, :]
