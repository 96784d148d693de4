"""
Core application of the soliton workbench.
Numerical checks on gradient shrinking Ricci solitons: curvature identities, weighted spectra, variations and gauge fixing.
"""

__version__ = "0.1.0"
