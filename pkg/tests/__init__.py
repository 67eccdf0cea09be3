"""Tests for icgrasp."""
