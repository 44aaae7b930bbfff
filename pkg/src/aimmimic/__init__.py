"""Behaviour-mimicking aim assistance and its detection, in simulation."""

__version__ = "0.1.0"
