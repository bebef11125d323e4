"""Exception types shared across the package."""


class WptSecError(Exception):
    """Base class for domain errors raised by this package."""


class ConfigError(WptSecError):
    def __init__(self, field: str, constraint: str):
        self.field = field
        self.constraint = constraint
        super().__init__(f"{field}: {constraint}")


class ParseError(WptSecError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class UnreachableTarget(WptSecError):
    """Requested dynamic range cannot be produced by any finite leakage."""


class NoHarvest(WptSecError):
    """Node receives no dc power and never wakes up."""


class OddChipCount(WptSecError):
    pass


class InvalidChipPair(WptSecError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"invalid Manchester chip pair at bit {index}")


class NoFrame(WptSecError):
    pass


class TraceTooShort(WptSecError):
    pass


class DegenerateLevels(WptSecError):
    pass


class InsufficientOversampling(WptSecError):
    pass


class ChannelOutOfRange(ConfigError):
    def __init__(self, node_id: str, channel: int, n_channels: int):
        super().__init__(f"nodes[{node_id}].channel", f"channel {channel} not below channel count {n_channels}")
