"""Radar waveform recovery from ambiguity-function magnitudes."""
__version__ = "0.1.0"
