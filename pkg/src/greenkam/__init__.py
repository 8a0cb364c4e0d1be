"""Green bundles, Lyapunov spectra and weak KAM solutions for Tonelli Hamiltonians on tori."""

__version__ = "0.1.0"
