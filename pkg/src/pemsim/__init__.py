"""Closed-loop driving simulation with Perception Error Models (PEMs) and a
seeded Monte Carlo experiment harness."""
from __future__ import annotations

__version__ = "0.1.0"
