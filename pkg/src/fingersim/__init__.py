"""Software twin of a multi-modal tactile robot finger."""

__version__ = "0.1.0"
