"""Pricing engine for sovereign contingent convertible bonds with CDS-triggered payment standstills."""

__version__ = "0.1.0"
