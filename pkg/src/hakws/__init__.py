"""Hearing-aid keyword spotting: own-voice simulation, features, models."""

__version__ = "0.1.0"
