"""Bayesian reconstruction of Lie-algebra-valued fields on the unit disk
from non-abelian X-ray (scattering) measurements."""

__version__ = "0.1.0"
