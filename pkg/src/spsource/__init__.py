"""Simulation and analysis toolkit for a cavity-coupled single-photon source."""
__version__ = "0.1.0"
