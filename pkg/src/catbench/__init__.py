"""Simulation and evaluation engine for goal-task alignment testing of audio assistants."""

__version__ = "0.1.0"
