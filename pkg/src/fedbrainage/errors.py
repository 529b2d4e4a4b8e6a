"""Exception hierarchy shared across the package."""


class FedBrainAgeError(Exception):
    """Base class for all package errors."""


class ShapeError(FedBrainAgeError, ValueError):
    pass


class UnsupportedDegreeError(FedBrainAgeError, ValueError):
    pass


class ScheduleBoundsError(FedBrainAgeError, IndexError):
    pass


class DivergenceError(FedBrainAgeError, FloatingPointError):
    """Training produced a non-finite loss or parameter."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite loss encountered at step {step}")


class InsufficientDataError(FedBrainAgeError, ValueError):
    pass


class DegenerateFitError(FedBrainAgeError, ValueError):
    pass


class DegenerateTestError(FedBrainAgeError, ValueError):
    pass


class DegenerateTableError(FedBrainAgeError, ValueError):
    pass


class NonConvergenceError(FedBrainAgeError, RuntimeError):
    def __init__(self, message, fit=None):
        self.fit = fit
        super().__init__(message)


class IngestionError(FedBrainAgeError, ValueError):
    """A cohort CSV row failed to parse or validate."""

    def __init__(self, row, message):
        self.row = row
        super().__init__(f"row {row}: {message}")


class ConfigError(FedBrainAgeError, ValueError):
    pass


class PairingError(FedBrainAgeError, ValueError):
    pass


class ProtocolError(FedBrainAgeError):
    """Base class for wire-format and round-protocol failures."""


class LengthPrefixError(ProtocolError):
    pass


class UnknownVersionError(ProtocolError):
    pass


class TruncatedPayloadError(ProtocolError):
    pass


class MalformedPayloadError(ProtocolError):
    pass


class RoundFailureError(ProtocolError):
    """A client failed to answer within a round; no partial aggregation."""

    def __init__(self, round_index, client_id, reason):
        self.round_index = round_index
        self.client_id = client_id
        super().__init__(f"round {round_index}: client {client_id} failed ({reason})")
