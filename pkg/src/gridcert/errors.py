"""Exception types raised across the package."""


class GridcertError(Exception):
    """Base class for all errors raised by gridcert."""


class ModelError(GridcertError):
    """Invalid network model data."""


class DisconnectedGraphError(ModelError):
    """Graph is not connected; carries the vertex components found."""

    def __init__(self, components):
        self.components = [sorted(c) for c in components]
        parts = "; ".join(str(c) for c in self.components)
        super().__init__(f"graph is disconnected, components: {parts}")


class UnsupportedDynamicsError(GridcertError):
    """Operation does not support this generation-dynamics block type."""


class SingularInternalDynamicsError(GridcertError):
    """Internal state matrix A is singular where its inverse is required."""


class PolePlacementConflictError(GridcertError):
    """-1/rho coincides with a pole of the bus transfer function."""


class DegenerateDroopError(GridcertError):
    """Aggregate steady-state droop is nonpositive."""


class InfeasiblePowerFlowError(GridcertError):
    """Newton power flow failed; carries the last iterate."""

    def __init__(self, message, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(message)


class NoSynchronousSolutionError(GridcertError):
    """No synchronous frequency found within the bisection bracket."""


class TreeRequiredError(GridcertError):
    """Operation is defined only for tree graphs."""


class IncompleteGainsError(GridcertError):
    """A generator bus is missing a required gain value."""


class DivisionByZeroSigmaError(GridcertError):
    """Coupling bound sigma is zero on a bus with incident lines."""


class UnsupportedTopologyForPopovError(GridcertError):
    """Popov certificate requires every bus to carry inertia (no load buses)."""


class BracketError(GridcertError):
    """Bisection bracket endpoints do not straddle a pass/fail transition."""


class InconsistentInitialStateError(GridcertError):
    """Initial condition cannot be projected onto the algebraic constraints."""


class SingularityStopError(GridcertError):
    """Simulation stopped at a singular algebraic constraint Jacobian.

    Carries the trajectory integrated up to the stop time.
    """

    def __init__(self, message, trajectory=None):
        self.trajectory = trajectory
        super().__init__(message)


class ScenarioError(GridcertError):
    """Scenario file is malformed; carries a location (path or line/column)."""

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)
