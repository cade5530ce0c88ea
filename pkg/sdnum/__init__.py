"""
sdnum - Stochastic dynamic network utility maximization.

Allocates a shared resource budget across independent sites whose
utilities come from Markovian contagion simulations, using a primal-dual
market over concave piecewise-linear utility surrogates and a
rolling-horizon control loop.
"""

__version__ = "1.0.0"
__author__ = "sdnum Team"
