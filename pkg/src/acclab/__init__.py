"""Longitudinal adaptive-cruise-control laboratory.

Deterministic car-following simulation, a consensus ACC baseline, a DDQN
agent over synthetic camera frames or feature histories, ICE/EV energy
evaluation, and a datagram bridge plus cockpit gateway for external and
human drivers.
"""

__version__ = "0.1.0"
