"""Adaptive security engine for a simulated smart home.

The package wires a monitoring pipeline, a bounded trace search over an
action theory, constraint learning, and a human-in-the-loop control loop
into one runnable system plus an operator-facing HTTP service.
"""

__version__ = "0.1.0"
