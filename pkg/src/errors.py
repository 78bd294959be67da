"""Exception hierarchy"""


class RelcomError(Exception):
    """Base error; `code` is the stable identifier printed by the CLI"""

    code = "RELCOM_ERROR"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


class FieldMismatchError(RelcomError, ValueError):
    code = "FIELD_MISMATCH"


class FieldZeroDivisionError(RelcomError, ZeroDivisionError):
    code = "ZERO_INVERSE"


class EncodingError(RelcomError, ValueError):
    code = "BAD_ENCODING"


class IncompleteTranscriptError(RelcomError):
    code = "INCOMPLETE_TRANSCRIPT"


class ScheduleError(RelcomError):
    code = "MALFORMED_SCHEDULE"


class InstanceTooLargeError(RelcomError):
    code = "INSTANCE_TOO_LARGE"


class StrategyMismatchError(RelcomError):
    code = "STRATEGY_MISMATCH"


class ConfigError(RelcomError):
    code = "BAD_CONFIG"


class TranscriptFormatError(RelcomError):
    code = "BAD_TRANSCRIPT"
