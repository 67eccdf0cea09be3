"""Unit tests for seed derivation and the worker pool."""

import pytest

from icgrasp.pipeline.workers import derive_seed, map_jobs, splitmix64


class TestSeeds:
    """Test per-item seed derivation."""

    def test_splitmix64_reference(self):
        """Test the first generator output for seed 0."""
        assert splitmix64(0) == 0xE220A8397B1DCDAF

    def test_derive_seed(self):
        """Test the XOR form and determinism."""
        assert derive_seed(0, 0) == splitmix64(0)
        assert derive_seed(1234, 7) == 1234 ^ splitmix64(7)
        assert derive_seed(1234, 7) == derive_seed(1234, 7)

    def test_distinct_items(self):
        """Test that neighboring indices get different seeds."""
        seeds = {derive_seed(42, i) for i in range(1000)}
        assert len(seeds) == 1000

    def test_fits_64_bits(self):
        """Test that seeds stay unsigned 64-bit."""
        for i in range(100):
            assert 0 <= derive_seed(-1, i) < 2**64


class TestMapJobs:
    """Test map_jobs function."""

    def test_serial(self):
        """Test in-process mapping."""
        assert map_jobs(abs, [-3, 2, -1], workers=1) == [3, 2, 1]

    def test_empty(self):
        """Test an empty job list."""
        assert map_jobs(abs, [], workers=4) == []

    def test_pool_keeps_order(self):
        """Test that pooled results come back in job order."""
        jobs = list(range(-20, 0))
        assert map_jobs(abs, jobs, workers=2) == [abs(j) for j in jobs]


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
