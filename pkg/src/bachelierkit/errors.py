"""Exception types shared across the toolkit.

All errors derive from ValueError so generic callers may catch the builtin,
while tests and the CLI can distinguish failure modes precisely.
"""

from __future__ import annotations


class ToolkitError(ValueError):
    """Base class for domain and input errors raised by this package."""


class MaturityError(ToolkitError):
    """Pricing was requested at or after expiry; evaluate the payoff instead."""


class DegenerateMarketError(ToolkitError):
    """A two-asset market cannot identify a riskless rate (equal volatilities)."""


class ArbitrageError(ToolkitError):
    """A risk-neutral probability left the open interval (0, 1)."""

    def __init__(self, message: str, value: float | None = None):
        super().__init__(message)
        self.value = value


class TreeSizeError(ToolkitError):
    """A non-recombining tree is too large for exhaustive enumeration."""


class EstimationError(ToolkitError):
    """Parameter estimation failed; `fitted` carries diagnostics when present."""

    def __init__(self, message: str, fitted: tuple | None = None):
        super().__init__(message)
        self.fitted = fitted


class UnidentifiableError(ToolkitError):
    """The observed data cannot identify the requested parameter."""


class InputError(ToolkitError):
    """Malformed input sequence, series, or file."""
