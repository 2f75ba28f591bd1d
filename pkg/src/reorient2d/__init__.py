"""Planar bimanual object reorientation: contact planning, demonstration
synthesis, and a task-conditioned point-cloud diffusion policy."""

from .geometry import (
    Capsule2,
    ConvexPolygon,
    Delta2,
    Pose2,
    compose,
    inverse,
    make_box,
    relative_transform,
    wrap_angle,
)

__all__ = [
    "Capsule2",
    "ConvexPolygon",
    "Delta2",
    "Pose2",
    "compose",
    "inverse",
    "make_box",
    "relative_transform",
    "wrap_angle",
]

__version__ = "0.1.0"
