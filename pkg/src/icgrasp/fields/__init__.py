"""Occupancy fields, primitives, meshing, metrics and gripper collision."""
