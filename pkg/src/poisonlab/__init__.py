"""Online logistic regression under data poisoning.

A desk-scale testbed that trains an online gradient-descent classifier on
a possibly poisoned stream, sanitizes arriving points with the slab
filter, and attenuates what survives via influence minimization.
"""

from .model import LabeledPoint, ModelParams

__all__ = ["LabeledPoint", "ModelParams"]
__version__ = "0.1.0"
