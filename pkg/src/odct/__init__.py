"""Online deep clustering with video track consistency, at desk scale."""

__version__ = "0.1.0"
