"""
Exception hierarchy for sdnum.

Every error raised on purpose by the package derives from SdnumError so
the CLI can map it onto an exit code.
"""

from typing import Dict, Optional


class SdnumError(Exception):
    """Base class for all sdnum errors."""


class ConfigError(SdnumError, ValueError):
    """Invalid configuration, parameters or scenario specification."""


class RejectedActionError(SdnumError):
    """An action is not legal in the current state."""


class ContractViolation(SdnumError):
    """A caller broke an operation's precondition."""


class DomainError(SdnumError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class FitError(SdnumError):
    """The concave fit did not reach the requested KKT accuracy."""

    def __init__(self, message: str, residuals: Optional[Dict[str, float]] = None):
        super().__init__(message)
        self.residuals = dict(residuals or {})

    def __str__(self) -> str:
        base = super().__str__()
        if not self.residuals:
            return base
        detail = ", ".join(f"{k}={v:.3g}" for k, v in self.residuals.items())
        return f"{base} ({detail})"


class ProtocolError(SdnumError):
    """Base class for wire protocol errors."""


class DecodeError(ProtocolError):
    """A wire record could not be decoded."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class VersionError(DecodeError):
    """A wire record uses an unknown version or message kind."""


class TransportError(SdnumError):
    """A remote site could not be reached after all retries."""
