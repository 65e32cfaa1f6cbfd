"""
ICU-constrained SIR control toolkit.

Viability zones, greedy feedback, closed-form value functions and
Hamilton-Jacobi checks for a confinement-controlled SIR model, plus an
occupation-measure dual LP loop for general running costs.
"""

__version__ = "0.1.0"
