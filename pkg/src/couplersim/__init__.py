"""Pulse-level simulator of a flux-tunable-coupler transmon processor."""

__version__ = "0.1.0"
