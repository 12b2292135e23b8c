"""Exception hierarchy. Each class maps onto one CLI exit code."""


class PrivacamError(Exception):
    exit_code = 1


class UsageError(PrivacamError, ValueError):
    """Bad arguments, flags or configuration."""

    exit_code = 2


class DomainError(UsageError):
    """A numeric argument lies outside the domain of a physical model."""


class DataError(PrivacamError, ValueError):
    """Input data is readable but unusable (e.g. no valid pixels)."""

    exit_code = 4
