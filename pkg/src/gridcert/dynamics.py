"""Per-bus generation dynamics blocks.

Each generator bus carries one block describing how its controllable
injection u responds to the local frequency deviation. The input to every
block is -omega (frequency rise lowers generation). Four block types are
supported:

* ``StaticMonotone``  u = k(-omega), k monotonically increasing
* ``FirstOrder``      tau xi' = -xi + k(-omega), u = xi
* ``SecondOrder``     tau_a a' = -grad_c(a) + k(-omega), tau_b b' = -b + a,
                      u = b (optionally u = h(b) through an output map)
* ``LinearSS``        xi' = A xi - B omega, u = C xi

A bus with ``dynamics=None`` injects u = 0 (plain swing dynamics).
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import SingularInternalDynamicsError, UnsupportedDynamicsError


# ---------------------------------------------------------------------------
# Static scalar maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearMap:
    """y = gain * x."""

    gain: float

    def __call__(self, x):
        return self.gain * x

    @property
    def slope(self):
        return self.gain


@dataclass(frozen=True)
class DeadbandMap:
    """Zero inside [-width, width], slope ``gain`` outside.

    Globally Lipschitz and monotonically nondecreasing; the slope bound
    used by the certificates is ``gain``.
    """

    gain: float
    width: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self.gain * (np.abs(x) - self.width).clip(min=0.0) * np.sign(x)
        return float(out) if out.ndim == 0 else out

    @property
    def slope(self):
        return self.gain


def invert_monotone(f, y, lo=-1.0, hi=1.0, tol=1e-13, max_expand=80):
    """Solve f(x) = y for a monotonically increasing scalar map f."""
    while f(lo) > y and max_expand > 0:
        lo *= 2.0
        max_expand -= 1
    while f(hi) < y and max_expand > 0:
        hi *= 2.0
        max_expand -= 1
    if f(lo) > y or f(hi) < y:
        raise ValueError("could not bracket the inverse of the monotone map")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo < tol * (1.0 + abs(mid)):
            break
        if f(mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Block types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StaticMonotone:
    """Static injection u = k(-omega) with slope bound ``slope``."""

    k: Callable[[float], float]
    slope: float

    def __post_init__(self):
        if self.slope <= 0:
            raise ValueError("slope bound must be positive")


@dataclass(frozen=True)
class FirstOrder:
    """tau xi' = -xi + k(-omega), u = xi."""

    tau: float
    k: Callable[[float], float]
    slope: float

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("time constant must be positive")
        if self.slope <= 0:
            raise ValueError("slope bound must be positive")


@dataclass(frozen=True)
class SecondOrder:
    """tau_a a' = -grad_c(a) + k(-omega); tau_b b' = -b + a; u = b or h(b).

    ``cost_grad`` is the gradient of a strongly convex cost with convexity
    modulus ``cost_modulus``; ``k`` has slope bound ``k_slope``; the optional
    strictly increasing ``output_map`` has slope bound ``output_slope``.
    """

    tau_alpha: float
    tau_beta: float
    cost_grad: Callable[[float], float]
    cost_modulus: float
    k: Callable[[float], float]
    k_slope: float
    output_map: Optional[Callable[[float], float]] = None
    output_slope: Optional[float] = None

    def __post_init__(self):
        if self.tau_alpha <= 0 or self.tau_beta <= 0:
            raise ValueError("time constants must be positive")
        if self.cost_modulus <= 0 or self.k_slope <= 0:
            raise ValueError("slope bounds must be positive")
        if (self.output_map is None) != (self.output_slope is None):
            raise ValueError("output_map and output_slope go together")
        if self.output_slope is not None and self.output_slope <= 0:
            raise ValueError("slope bounds must be positive")


class LinearSS:
    """Minimal SISO internal dynamics xi' = A xi - B omega, u = C xi.

    A must be invertible. B and C should be nonzero with (A, B) controllable
    and (C, A) observable for the Popov certificate; those minimality
    properties are verified where they are needed rather than at
    construction, so reduced blocks (for example C = 0) remain expressible.
    """

    def __init__(self, A, B, C):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.asarray(B, dtype=float).reshape(-1)
        C = np.asarray(C, dtype=float).reshape(-1)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        if B.shape != (n,) or C.shape != (n,):
            raise ValueError("B and C must have length matching A")
        if n > 0 and abs(np.linalg.det(A)) < 1e-14 * max(
                1.0, np.abs(A).max() ** n):
            raise SingularInternalDynamicsError(
                "internal state matrix A is singular")
        for arr in (A, B, C):
            arr.setflags(write=False)
        self.A = A
        self.B = B
        self.C = C

    @property
    def n(self):
        return self.A.shape[0]

    def dc_droop(self):
        """Steady-state gain -C A^-1 B of the map -omega -> u."""
        if self.n == 0:
            return 0.0
        return float(-self.C @ np.linalg.solve(self.A, self.B))

    def __repr__(self):
        return f"LinearSS(n={self.n}, dc_droop={self.dc_droop():.4g})"


GenerationDynamics = (StaticMonotone, FirstOrder, SecondOrder, LinearSS)


def droop_lag2(k, tau_alpha=0.5, tau_beta=1.0):
    """Linear droop with gain k behind two first-order lags, as ``LinearSS``.

    Realizes tau_a a' = -a - k omega, tau_b b' = -b + a, u = b. The
    steady-state droop -C A^-1 B equals k.
    """
    if k < 0:
        raise ValueError("droop gain must be nonnegative")
    A = np.array([[-1.0 / tau_alpha, 0.0],
                  [1.0 / tau_beta, -1.0 / tau_beta]])
    B = np.array([k / tau_alpha, 0.0])
    C = np.array([0.0, 1.0])
    return LinearSS(A, B, C)


# ---------------------------------------------------------------------------
# Evaluation helpers used by the equilibrium solver and the simulator
# ---------------------------------------------------------------------------

def n_states(dyn):
    """Number of internal states carried by the block."""
    if dyn is None or isinstance(dyn, StaticMonotone):
        return 0
    if isinstance(dyn, FirstOrder):
        return 1
    if isinstance(dyn, SecondOrder):
        return 2
    if isinstance(dyn, LinearSS):
        return dyn.n
    raise UnsupportedDynamicsError(f"unknown dynamics block {dyn!r}")


def rhs(dyn, xi, omega):
    """Time derivative of the internal state for frequency deviation omega."""
    if dyn is None or isinstance(dyn, StaticMonotone):
        return np.zeros(0)
    if isinstance(dyn, FirstOrder):
        return np.array([(-xi[0] + dyn.k(-omega)) / dyn.tau])
    if isinstance(dyn, SecondOrder):
        a, b = xi
        da = (-dyn.cost_grad(a) + dyn.k(-omega)) / dyn.tau_alpha
        db = (-b + a) / dyn.tau_beta
        return np.array([da, db])
    if isinstance(dyn, LinearSS):
        return dyn.A @ xi - dyn.B * omega
    raise UnsupportedDynamicsError(f"unknown dynamics block {dyn!r}")


def output(dyn, xi, omega):
    """Injection u produced by the block."""
    if dyn is None:
        return 0.0
    if isinstance(dyn, StaticMonotone):
        return float(dyn.k(-omega))
    if isinstance(dyn, FirstOrder):
        return float(xi[0])
    if isinstance(dyn, SecondOrder):
        b = xi[1]
        return float(dyn.output_map(b)) if dyn.output_map else float(b)
    if isinstance(dyn, LinearSS):
        return float(dyn.C @ xi)
    raise UnsupportedDynamicsError(f"unknown dynamics block {dyn!r}")


def steady_state(dyn, omega):
    """Steady internal state and injection for constant frequency omega.

    Returns ``(xi_bar, u_bar)``. u_bar is nonincreasing in omega for every
    supported block, which the synchronous-frequency bisection relies on.
    """
    if dyn is None:
        return np.zeros(0), 0.0
    if isinstance(dyn, StaticMonotone):
        return np.zeros(0), float(dyn.k(-omega))
    if isinstance(dyn, FirstOrder):
        v = float(dyn.k(-omega))
        return np.array([v]), v
    if isinstance(dyn, SecondOrder):
        v = float(dyn.k(-omega))
        if isinstance(dyn.cost_grad, LinearMap):
            a = v / dyn.cost_grad.gain
        else:
            a = invert_monotone(dyn.cost_grad, v)
        u = float(dyn.output_map(a)) if dyn.output_map else a
        return np.array([a, a]), u
    if isinstance(dyn, LinearSS):
        if dyn.n == 0:
            return np.zeros(0), 0.0
        xi = np.linalg.solve(dyn.A, dyn.B * omega)
        return xi, float(dyn.C @ xi)
    raise UnsupportedDynamicsError(f"unknown dynamics block {dyn!r}")
