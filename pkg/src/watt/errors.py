"""Exception taxonomy shared by all watt modules.

Callers can catch ``WattError`` for anything raised deliberately by this
package; subclasses distinguish the failure modes the HTTP layer and CLI
map to status / exit codes.
"""


class WattError(Exception):
    """Base class for all errors raised by watt."""


class DomainError(WattError):
    """Input is outside the mathematical domain of an operation."""


class ValidationError(WattError):
    """A record or config value violates a field constraint."""


class ConfigError(WattError):
    """Malformed or inconsistent configuration."""


class NotFoundError(WattError):
    """Referenced entity (meter, invoice, block, goal) does not exist."""


class OrderingError(WattError):
    """A submitted reading is not newer than the stored head."""


class ClockRegressionError(WattError):
    """Time went backwards; the offending sample is rejected."""


class ConflictError(WattError):
    """Operation conflicts with current state (e.g. invoice already paid)."""


class InsufficientBalanceError(WattError):
    """Payer account cannot cover the transaction amount."""


class PreconditionError(WattError):
    """Operation invoked before its precondition holds."""
