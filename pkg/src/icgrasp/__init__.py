"""icgrasp - instance-centric grasp detection and scene reconstruction from point clouds."""

__version__ = "0.1.0"
