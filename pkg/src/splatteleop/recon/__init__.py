"""Splat scene reconstruction: capture planning, geometry seeding, refinement, training."""

from .bundle import BundleResult, SingularNormalEquations, bundle_adjust
from .capture import CapturePlan, DegenerateRing, plan_capture, plan_from_text, plan_to_text
from .seeding import InsufficientViews, Observation, PosedImage, seed_scene
from .training import NonFiniteLoss, TrainConfig, TrainResult, psnr, train_splats
from .triangulate import ParallelRays, triangulate

__all__ = [
    "BundleResult",
    "CapturePlan",
    "DegenerateRing",
    "InsufficientViews",
    "NonFiniteLoss",
    "Observation",
    "ParallelRays",
    "PosedImage",
    "SingularNormalEquations",
    "TrainConfig",
    "TrainResult",
    "bundle_adjust",
    "plan_capture",
    "plan_from_text",
    "plan_to_text",
    "psnr",
    "seed_scene",
    "train_splats",
    "triangulate",
]
