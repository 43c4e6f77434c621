"""Simulator for an EPR-pair CNOT-cascade state-discrimination scheme."""

__version__ = "0.1.0"
