"""Exception hierarchy, mapped to CLI exit codes in cli.main."""


class AradError(Exception):
    """Base class for package errors."""


class UsageError(AradError):
    """Bad invocation: unknown flags, missing arguments, malformed config. Exit code 1."""


class DataError(AradError):
    """Missing or malformed inputs: datasets, images, token files, checkpoints. Exit code 2."""


class NumericError(AradError):
    """Numeric failure: non-finite values where finite ones are required. Exit code 3."""


class ConfigMismatchError(DataError):
    """A checkpoint's recorded configuration disagrees with the requested one."""

    def __init__(self, fields: dict):
        self.fields = fields
        lines = ", ".join(f"{k}: checkpoint={a!r} requested={b!r}" for k, (a, b) in sorted(fields.items()))
        super().__init__(f"checkpoint config mismatch: {lines}")


class TokenFileError(DataError):
    """Base class for token-file parse failures."""


class TokenFileMagicError(TokenFileError):
    pass


class TokenFileVersionError(TokenFileError):
    pass


class TokenFileTruncatedError(TokenFileError):
    pass


class TokenFileShapeError(TokenFileError):
    pass


class MetricUndefinedError(AradError):
    """A ranking metric was requested for data with only one class present."""
