"""Stabilizer Renyi entropies of monitored free-fermion chains.

Covariance-matrix simulation of Gaussian fermionic dynamics (hopping and
transverse-field Ising chains, projective monitoring, no-click non-Hermitian
evolution), exact sequential sampling of Majorana strings, and the
finite-size scaling analysis of the logarithmic corrections to magic.
"""

__version__ = "0.1.0"
