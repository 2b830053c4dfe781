"""mpiforge: a differentiable multiplane-image engine.

Renders layered RGB-alpha scene representations in real time from free
viewpoints, fits them to multi-view image sets by gradient descent (with
adaptive plane depths, per-camera exposure compensation, and camera pose
refinement), and retargets face/body/hand keypoint motion between characters.
"""

__version__ = "0.1.0"

from .geometry import CameraModel, plane_homography, relative_pose, se3_exp, se3_log
from .mpi import ExposureCoeffs, Mpi, init_planes, texture_index

__all__ = [
    "CameraModel",
    "ExposureCoeffs",
    "Mpi",
    "init_planes",
    "plane_homography",
    "relative_pose",
    "se3_exp",
    "se3_log",
    "texture_index",
    "__version__",
]
