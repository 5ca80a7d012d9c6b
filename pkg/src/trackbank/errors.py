"""Exception hierarchy.

ConfigurationError and InvariantError subclass ValueError so callers may
catch either the package family or the builtin; they map to CLI exit code 1
(validation). Everything else maps to exit code 2 (runtime failure).
"""


class TrackbankError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TrackbankError, ValueError):
    """A parameter or argument is outside its documented domain."""


class InvariantError(TrackbankError, ValueError):
    """A data structure violates one of its stated invariants."""


class PreconditionError(TrackbankError, RuntimeError):
    """An operation was invoked in a state it does not accept."""


class StateBudgetError(TrackbankError, RuntimeError):
    """Reachable-state enumeration exceeded the configured budget."""


class NumericalError(TrackbankError, RuntimeError):
    """A training quantity became non-finite; the message names it."""


class ProtocolError(TrackbankError, RuntimeError):
    """The remote peer violated the bridge wire protocol."""


class BridgeConnectionError(TrackbankError, RuntimeError):
    """The bridge endpoint is unreachable, timed out, or hung up."""


class UnsupportedCapabilityError(TrackbankError, RuntimeError):
    """The tracker in use cannot serve this operation (e.g. lookahead)."""
