class LeakprobeError(Exception):
    """Base class for every error the toolkit raises on bad data."""


class DatasetError(LeakprobeError):
    def __init__(self, message: str, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path is not None else message)


class IdxFormatError(DatasetError):
    pass


class WrongMagicError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass


class TruncatedIdxError(IdxFormatError):
    pass


class ProbeError(LeakprobeError):
    def __init__(self, message: str, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path is not None else message)


class ForestError(LeakprobeError):
    pass


class AuditError(LeakprobeError):
    """A failure inside the audit pipeline, tagged with the stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
