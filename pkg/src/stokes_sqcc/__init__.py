"""Stokes-parameter simultaneous quantum-classical communication (SQCC) toolkit.

Submodules: mueller (polarization optics), stokes (Stokes-operator moments),
protocol (shot-level Monte Carlo), keyrate (CV-QKD rates) and harness (CLI).
"""

__version__ = "0.1.0"
