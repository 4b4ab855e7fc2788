"""Exception hierarchy shared across the package."""


class BgEnergyError(Exception):
    """Base class for all errors raised by bgenergy."""


class DecompositionError(BgEnergyError):
    """A feature decomposition is malformed (e.g. duplicate operation ids)."""


class ConfigError(BgEnergyError):
    """Invalid configuration or plan parameters."""


class ProviderUnavailableError(BgEnergyError):
    """The requested energy provider cannot be opened on this host."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


class SnapshotError(BgEnergyError):
    def __init__(self, message: str, domain: str | None = None):
        super().__init__(message)
        self.domain = domain


class PairingError(BgEnergyError):
    """Start and end snapshots do not cover the same counters."""


class TimingError(BgEnergyError):
    """A measurement window has a non-positive duration."""


class UnsupportedOperationError(BgEnergyError):
    pass


class SaveError(BgEnergyError):
    pass


class SessionError(BgEnergyError):
    pass


class SessionTimeoutError(SessionError):
    """An idle-triggered session could not reach its save budget in time."""


class PlanError(BgEnergyError):
    pass


class StoreFormatError(BgEnergyError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class MappingError(BgEnergyError):
    """A test scenario has no usable control scenario."""


class AnalysisError(BgEnergyError):
    pass
