"""Simulation and analysis toolkit for intermediary-bridged cross-chain trades."""

__version__ = "0.1.0"
