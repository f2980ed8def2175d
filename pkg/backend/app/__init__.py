"""
Hele-Shaw Verification Harness

This package contains a pseudo-spectral simulator for the Hele-Shaw
free-boundary equation and the diagnostics that check its identities.
"""

__version__ = "1.0.0"
