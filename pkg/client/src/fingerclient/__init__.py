"""Consumer-side SDK for the tactile finger's wire and episode formats."""

__version__ = "0.1.0"
