"""Exception hierarchy shared by the schemes, kernels and CLI."""


class SingularLimitsError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SingularLimitsError):
    """A state left the enlarged admissible set K1.

    ``index`` is the first offending grid node or lattice cell (when known),
    ``step`` the backward step number and ``time`` the lattice time.
    """

    def __init__(self, message, index=None, step=None, time=None):
        super().__init__(message)
        self.index = index
        self.step = step
        self.time = time

    def __str__(self):
        parts = [super().__str__()]
        if self.index is not None:
            parts.append(f"index={self.index}")
        if self.step is not None:
            parts.append(f"step={self.step}")
        if self.time is not None:
            parts.append(f"time={self.time:g}")
        return " ".join(parts)


class WindowError(DomainError):
    """Nontrivial variation reached the outflow end of the computational window."""


class HyperbolicityError(SingularLimitsError):
    """Eigenvalues are complex, unordered, or closer than the separation bound."""


class ParameterError(SingularLimitsError, ValueError):
    """Invalid numerical parameter (speeds, weights, grid sizes...)."""


class TruncationError(SingularLimitsError):
    """A series or integral truncation could not meet its tail bound."""


class ConfigError(SingularLimitsError):
    """Configuration text failed validation; ``errors`` lists every offending key."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class UnsupportedError(SingularLimitsError):
    """The requested reference solution is not available for this system."""
