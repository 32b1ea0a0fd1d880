"""Exception hierarchy shared across the package."""


class SliceGateError(Exception):
    """Base class for all slicegate errors."""


class PolicySyntaxError(SliceGateError):
    """Raised when policy text does not conform to the grammar.

    ``position`` is the zero-based character offset of the offending token.
    """

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownAttributeError(PolicySyntaxError):
    """Raised when a policy names an attribute missing from the dictionary."""

    def __init__(self, name: str, position: int):
        super().__init__(f"unknown attribute name {name!r}", position)
        self.name = name


class AccessDenied(SliceGateError):
    """Decryption refused: policy unsatisfied, wrong key lineage, or tampering.

    Deliberately carries no detail about which gate failed.
    """


class AuthenticationError(SliceGateError):
    """Challenge-response verification failed."""


class EnvelopeError(SliceGateError):
    """Public-key envelope could not be opened."""


class NotFoundError(SliceGateError):
    """Requested content is not in the store."""


class DigestMismatchError(SliceGateError):
    """Stored content no longer matches its locator digest."""


class UnauthorizedError(SliceGateError):
    """Registry mutation attempted by a non-authorized address."""


class DuplicateMessageError(SliceGateError):
    """Registry binding for this message id already exists."""


class UnknownMessageError(SliceGateError):
    """No registry binding for this message id."""


class NoAttributesError(SliceGateError):
    """Reader has no attributes registered on chain."""


class ProtocolError(SliceGateError):
    """Malformed or unexpected wire traffic."""


class GroupError(SliceGateError):
    """Pairing-group arithmetic received an invalid element."""
