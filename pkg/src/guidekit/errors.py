"""Exception hierarchy shared across the toolchain."""


class GuidekitError(Exception):
    """Base class for all domain errors raised by this package."""


class InputError(GuidekitError):
    """Malformed or out-of-contract input data."""


class LoadError(GuidekitError):
    """A persisted document failed to parse or violated its invariants."""


class EditError(GuidekitError):
    """A workflow edit violated its precondition."""


class ConflictError(GuidekitError):
    """Optimistic concurrency check failed: the revision is stale."""

    def __init__(self, message: str, current_revision: int | None = None):
        super().__init__(message)
        self.current_revision = current_revision


class PropagationError(GuidekitError):
    """Label propagation could not read required pixel data."""


class ExportError(GuidekitError):
    """Dataset export preconditions not met."""


class TrainError(GuidekitError):
    """Detector training preconditions not met."""


class ScaffoldError(GuidekitError):
    """A workflow cannot be scaffolded into a state machine."""


class CompileError(GuidekitError):
    """State machine compilation refused; carries the blocking diagnostics."""

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class PackageError(GuidekitError):
    """A task package is corrupt or fails its checksum."""


class ProtocolError(GuidekitError):
    """A streaming client violated the session protocol."""

    def __init__(self, message: str, code: str = "protocol"):
        super().__init__(message)
        self.code = code
