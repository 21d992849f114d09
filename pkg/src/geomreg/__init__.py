"""geomreg: imbalanced regression with geometric representation constraints.

The package trains regression models whose unit-norm latent representations
are pushed to cover the hypersphere (enveloping) and to advance at uniform
speed along the label range (homogeneity), coordinated through a per-bin
centroid surrogate that survives mini-batch gaps.
"""

__version__ = "0.1.0"
