"""Exception types raised across the package."""


class FedNCError(Exception):
    pass


class ZeroInverse(FedNCError, ZeroDivisionError):
    pass


class PaddingRequired(FedNCError, ValueError):
    pass


class LengthMismatch(FedNCError, ValueError):
    pass


class VectorMismatch(FedNCError, ValueError):
    pass


class GenerationMismatch(FedNCError, ValueError):
    pass


class RankDeficient(FedNCError):
    pass


class MalformedFrame(FedNCError, ValueError):
    def __init__(self, offset, reason):
        super().__init__(f"malformed frame at byte {offset}: {reason}")
        self.offset = offset
        self.reason = reason


class EmptyDataset(FedNCError, ValueError):
    pass


class ShapeMismatch(FedNCError, ValueError):
    pass


class SizeMismatch(FedNCError, ValueError):
    pass


class InsufficientData(FedNCError, ValueError):
    pass


class BadWeights(FedNCError, ValueError):
    pass


class FieldTooSmall(FedNCError, ValueError):
    pass


class ConfigError(FedNCError, ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
