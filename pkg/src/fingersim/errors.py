"""Exception types shared across the simulator."""


class ConfigurationError(Exception):
    """Invalid or inconsistent configuration (geometry, scenario, assets)."""


class DomainError(ValueError):
    """An operation was queried outside its valid domain."""


class AlignmentError(DomainError):
    """Cross-modal observation timestamps disagree beyond tolerance."""


class CalibrationError(Exception):
    """Photometric calibration cannot proceed (degenerate illumination)."""


class FramingError(Exception):
    """Wire bytes do not start with a valid message frame."""


class CorruptionError(Exception):
    """A framed message failed its CRC check."""
