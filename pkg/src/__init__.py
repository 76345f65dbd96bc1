"""
SVI Lab - Numerical laboratory for singular-degenerate stochastic porous-medium equations
"""

__version__ = "0.1.0"
__author__ = "SVI Lab Team"
