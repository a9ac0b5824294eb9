"""Co-variant detection, transversality, stability and canonization."""

from .blobs import (FlatPatch, UndefinedOrientation, canonize_contrast, canonize_rotation,
                    default_tau_j, detect_blobs, detect_harris, harris_response, response_stack,
                    stability_margin, stability_margins, transversal)
from .frame import KINDS, Frame
from .segtree import SegTree, region_frames, segment_tree, superpixel_frames
from .shape import (DegenerateConfiguration, apply_similarity, canonize_similarity,
                    vertex_orderings)

__all__ = [
    "Frame", "KINDS", "FlatPatch", "UndefinedOrientation", "DegenerateConfiguration",
    "detect_blobs", "detect_harris", "harris_response", "response_stack", "default_tau_j",
    "transversal", "stability_margin", "stability_margins", "canonize_rotation", "canonize_contrast",
    "SegTree", "segment_tree", "superpixel_frames", "region_frames",
    "canonize_similarity", "apply_similarity", "vertex_orderings",
]
