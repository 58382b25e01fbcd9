"""
Error Types
Every failure raised by the library carries the exit code the CLI reports
"""


class OrbitSymError(Exception):
    """Base error"""
    exit_code = 2


class ConfigError(OrbitSymError):
    """Unknown or invalid configuration key"""
    exit_code = 1

    def __init__(self, key, message=None):
        self.key = key
        super().__init__(message or f"invalid config key: {key}")


class UsageError(OrbitSymError):
    """Bad command-line usage or unsupported group string"""
    exit_code = 1


class DimensionError(OrbitSymError, ValueError):
    """Shape mismatch"""
    exit_code = 2


class InvertibilityError(OrbitSymError):
    """Singular or ill-conditioned matrix"""
    exit_code = 2

    def __init__(self, condition, message=None):
        self.condition = float(condition)
        super().__init__(message or f"matrix not invertible (condition estimate {self.condition:.3e})")


class GradientUnavailableError(OrbitSymError):
    """Gradient undefined at the forward point"""
    exit_code = 2


class DomainError(OrbitSymError, ValueError):
    """Input outside the separation domain of an invariant"""
    exit_code = 2


class SamplingError(OrbitSymError):
    """Rejection sampler exhausted its retry budget"""
    exit_code = 2


class NumericFailureError(OrbitSymError):
    """NaN or inf produced during training or evaluation"""
    exit_code = 2

    def __init__(self, stage, epoch=None, step=None):
        self.stage = stage
        self.epoch = epoch
        self.step = step
        where = ""
        if epoch is not None:
            where = f" (epoch {epoch}, step {step})"
        super().__init__(f"non-finite values in stage '{stage}'{where}")


class FormatError(OrbitSymError, ValueError):
    """Malformed file contents"""
    exit_code = 3

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} at byte offset {offset}"
        super().__init__(message)


class DataIOError(OrbitSymError, OSError):
    """Missing or unwritable file"""
    exit_code = 3
