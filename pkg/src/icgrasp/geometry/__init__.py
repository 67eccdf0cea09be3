"""Grasp frames, point cloud operations and PLY I/O."""
