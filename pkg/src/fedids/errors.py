"""Exception hierarchy shared across the package."""


class FedIDSError(Exception):
    """Base class for all errors raised by fedids."""


class ShapeError(FedIDSError):
    """Input dimensions do not match what the operation expects."""


class SchemaError(FedIDSError):
    """Column layout or feature width does not match the declared schema."""


class ConfigError(FedIDSError):
    """Invalid configuration value or inconsistent option pairing."""


class CapacityError(FedIDSError):
    """A split or sample requested more rows than a class can provide."""


class EmptyInputError(FedIDSError):
    """An operation that needs at least one element received none."""


class ProtocolError(FedIDSError):
    """Federation protocol violation (ordering, membership, transport)."""


class ParticipationError(FedIDSError):
    """A client was asked to join a phase it cannot participate in."""
