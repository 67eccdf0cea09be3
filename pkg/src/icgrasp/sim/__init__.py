"""Synthetic scenes, rendering, grasp oracle and labels."""
