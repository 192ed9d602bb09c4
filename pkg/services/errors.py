# -*- coding: utf-8 -*-
"""
Error types - exception hierarchy shared by every service
"""


class CILError(Exception):
    """Root of all engine errors"""


class DomainError(CILError, ValueError):
    """Argument outside the domain of an operation"""


class ShapeError(DomainError):
    """Array shape does not match what a layer expects"""

    def __init__(self, layer, message):
        self.layer = layer
        super().__init__(f"{layer}: {message}")


class DataError(CILError, ValueError):
    """Dataset content unusable for an operation (e.g. an empty class)"""

    def __init__(self, message, class_id=None):
        self.class_id = class_id
        super().__init__(message)


class StateError(CILError, RuntimeError):
    """Operation invalid in the current state (memory collision, frozen model)"""


class InputError(CILError, OSError):
    """File that cannot be read or parsed"""

    def __init__(self, path, reason):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")


class ConfigError(CILError, ValueError):
    """Invalid configuration key or value"""

    def __init__(self, key, reason):
        self.key = key
        self.reason = reason
        super().__init__(f"config key '{key}': {reason}")


class StreamError(CILError, RuntimeError):
    """Failure while processing one stream of a run"""

    def __init__(self, stream_index, cause):
        self.stream_index = stream_index
        super().__init__(f"stream {stream_index}: {cause}")
