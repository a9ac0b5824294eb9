"""Invariant visual representations: occlusion-aware flow, co-variant
detection and canonization, attributed Reeb trees, tracking on the selection
tree, invariant descriptors, time warping, depth ordering, information
forests and flatland recognition bounds."""

__version__ = "0.1.0"
