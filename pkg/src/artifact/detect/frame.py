"""Canonical frames produced by co-variant detectors."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..imgcore import InvalidArgument

KINDS = ("LoG", "DoG", "Hessian", "Harris", "SuperpixelCentroid")


@dataclass(frozen=True)
class Frame:
    """Group element ``{T, sigma, R, contrast}`` attached to a detection.

    ``x`` is the column and ``y`` the row coordinate, both subpixel.
    """

    x: float
    y: float
    sigma: float
    kind: str
    score: float = 0.0
    theta: float = 0.0
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidArgument("frame sigma must be > 0")
        if not self.alpha > 0:
            raise InvalidArgument("frame gain alpha must be > 0")
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown detector kind {self.kind!r}")
        object.__setattr__(self, "theta", float(self.theta) % (2 * math.pi))

    @property
    def t(self):
        return (self.x, self.y)

    def to_json(self) -> dict:
        return {"x": float(self.x), "y": float(self.y), "sigma": float(self.sigma),
                "theta": float(self.theta), "alpha": float(self.alpha), "beta": float(self.beta),
                "kind": self.kind, "score": float(self.score)}
