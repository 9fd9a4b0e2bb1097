from __future__ import annotations


class GoPlanError(Exception):
    pass


class ConfigurationError(GoPlanError, ValueError):
    pass


class UsageError(GoPlanError, RuntimeError):
    pass


class EmptyBufferError(GoPlanError, ValueError):
    pass


class MalformedTrajectoryError(GoPlanError, ValueError):
    pass


class CheckpointFormatError(GoPlanError, ValueError):
    pass
