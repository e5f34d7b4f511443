"""Clutter-angle-map aided clutter suppression and parameter estimation
for bi-static OFDM sensing."""

__version__ = "0.1.0"
