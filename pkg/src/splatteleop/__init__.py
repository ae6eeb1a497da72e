"""Splat-based loco-manipulation teleoperation, desk scale.

A simulated mobile base + serial arm is driven through a two-phase
(locomotion / manipulation) session controller.  The manipulation phase is
backed by a gaussian-splat reconstruction of the scene: capture planning,
known-pose seeding, small-instance bundle adjustment, gradient-based splat
fitting, and a deterministic CPU rasterizer.  Operator clients talk to the
session over a framed topic-based pub/sub protocol.
"""

__version__ = "0.1.0"

from .splats import Gaussian3D, SplatScene, covariance_of

__all__ = ["Gaussian3D", "SplatScene", "covariance_of", "__version__"]
