"""Deterministic simulator for a harsh-environment IoT telemetry network
with byzantine-faulty redundant sensors and a quantum consensus plane."""

__version__ = "0.1.0"
