"""Unit tests for scene generation, rendering, the grasp oracle and label sampling."""

import numpy as np
import pytest

from icgrasp.core.config import GraspConfig, SceneConfig
from icgrasp.core.errors import GenerationError, InvalidArgumentError
from icgrasp.fields.primitives import Primitive, SceneGT
from icgrasp.geometry.cloud import PointCloud
from icgrasp.geometry.grasp import approach_angles
from icgrasp.sim.camera import (
    TABLE_ID,
    CameraPose,
    render_depth,
    sample_camera,
    spherical_camera,
)
from icgrasp.sim.labels import label_scene, sample_grasp_labels, sample_occupancy
from icgrasp.sim.oracle import antipodal_test, contacted_instance, oracle_grasp, oracle_sweep
from icgrasp.sim.scenes import generate_scene, surface_samples

RADIUS = 0.015


def _sphere(center, radius=RADIUS, index=0):
    return Primitive("sphere", np.eye(3), np.asarray(center, float), np.full(3, radius), 0, index)


def _resting_sphere():
    return SceneGT([_sphere([0.15, 0.15, RADIUS])])


def _floating_sphere():
    return SceneGT([_sphere([0.15, 0.15, 0.1])])


class TestGenerateScene:
    """Test packed and pile scene generation."""

    def test_deterministic(self):
        """Test that the same seed gives the same scene."""
        a = generate_scene("packed", 3, 11)
        b = generate_scene("packed", 3, 11)
        assert a.to_dict() == b.to_dict()

    def test_seed_changes_scene(self):
        """Test that different seeds give different scenes."""
        assert generate_scene("packed", 2, 1).to_dict() != generate_scene("packed", 2, 2).to_dict()

    def test_object_count_range(self):
        """Test that counts outside 1..8 raise."""
        with pytest.raises(InvalidArgumentError):
            generate_scene("packed", 0, 0)
        with pytest.raises(InvalidArgumentError):
            generate_scene("packed", 9, 0)

    def test_unknown_kind(self):
        """Test that an unknown scene kind raises."""
        with pytest.raises(InvalidArgumentError):
            generate_scene("stack", 1, 0)

    def test_single_packed_inside_workspace(self):
        """Test that one packed primitive stands on the table inside the workspace."""
        scene = generate_scene("packed", 1, 5)
        assert scene.k == 1
        p = scene.primitives[0]
        assert p.lowest_z() == pytest.approx(0.0, abs=1e-9)
        vertices = np.asarray(p.mesh().vertices)
        assert vertices.min() >= -1e-9
        assert vertices.max() <= 0.3 + 1e-9

    def test_packed_gaps(self):
        """Test that sampled surfaces of packed primitives never interpenetrate."""
        for seed in range(3):
            scene = generate_scene("packed", 4, seed)
            for i, p in enumerate(scene.primitives):
                samples = surface_samples(p, 128, seed)
                for j, q in enumerate(scene.primitives):
                    if i != j:
                        assert q.sdf(samples).min() >= 0.0

    def test_packed_object_ids(self):
        """Test that object ids follow placement order."""
        scene = generate_scene("packed", 3, 4)
        assert [p.object_id for p in scene.primitives] == [0, 1, 2]

    def test_pile_settles(self):
        """Test that pile primitives rest at or above the table inside the workspace."""
        scene = generate_scene("pile", 4, 3)
        assert scene.k == 4
        for p in scene.primitives:
            assert p.lowest_z() >= -1e-3
            vertices = np.asarray(p.mesh().vertices)
            assert vertices.min(axis=0)[:2].min() >= -1e-9
            assert vertices.max() <= 0.3 + 1e-9

    def test_generation_failure(self):
        """Test that running out of attempts raises a generation error."""
        with pytest.raises(GenerationError):
            generate_scene("packed", 2, 0, SceneConfig(max_attempts=1))


class TestCamera:
    """Test camera sampling and depth rendering."""

    def test_radius_range(self):
        """Test that sampled cameras stay on the configured shell."""
        for seed in range(1000):
            cam = sample_camera(seed)
            r = np.linalg.norm(cam.position - cam.look_at)
            assert 0.48 - 1e-9 <= r <= 0.72 + 1e-9

    def test_fixed_seed(self):
        """Test that a fixed seed gives the same pose."""
        assert sample_camera(9).to_dict() == sample_camera(9).to_dict()

    def test_pole(self):
        """Test that theta = 0 puts the camera straight above the center."""
        cam = spherical_camera(0.6, 0.0, 0.0)
        assert cam.position == pytest.approx([0.15, 0.15, 0.6])
        assert cam.rotation[:, 2] == pytest.approx([0.0, 0.0, -1.0])

    def test_invalid_pose(self):
        """Test that a camera looking at itself raises."""
        with pytest.raises(InvalidArgumentError):
            CameraPose(np.ones(3), np.ones(3), 100.0, 100.0, 1.0, 1.0, 2, 2)
        with pytest.raises(InvalidArgumentError):
            CameraPose(np.ones(3), np.zeros(3), 0.0, 100.0, 1.0, 1.0, 2, 2)

    def test_empty_scene(self):
        """Test that an empty scene renders only table points."""
        pc = render_depth(SceneGT([]), spherical_camera(0.6, 0.0, 0.0))
        assert len(pc) > 0
        assert np.all(pc.instance_ids == TABLE_ID)
        assert np.all(pc.semantic_ids == TABLE_ID)
        assert pc.points[:, 2] == pytest.approx(np.zeros(len(pc)), abs=1e-9)

    def test_sphere_overhead(self):
        """Test that overhead hits on a sphere lie on its upper hemisphere."""
        scene = _resting_sphere()
        pc = render_depth(scene, spherical_camera(0.6, 0.0, 0.0))
        mask = pc.instance_ids == 0
        assert mask.sum() > 10
        center = scene.primitives[0].translation
        dist = np.linalg.norm(pc.points[mask] - center, axis=1)
        assert np.abs(dist - RADIUS).max() < 1e-6
        assert pc.points[mask, 2].min() >= center[2] - 1e-9
        radial = (pc.points[mask] - center) / RADIUS
        assert np.abs(pc.normals[mask] - radial).max() < 1e-6

    def test_occlusion(self):
        """Test that a sphere hidden under a box leaves no points."""
        box = Primitive("box", np.eye(3), np.array([0.15, 0.15, 0.08]), np.full(3, 0.04), 1, 1)
        scene = SceneGT([_sphere([0.15, 0.15, 0.01], radius=0.01), box])
        pc = render_depth(scene, spherical_camera(0.6, 0.0, 0.0))
        assert not np.any(pc.instance_ids == 0)
        assert np.any(pc.instance_ids == 1)

    def test_points_outside_primitives(self):
        """Test that rendered points never lie inside a primitive."""
        scene = generate_scene("packed", 3, 8)
        pc = render_depth(scene, sample_camera(8))
        assert scene.sdf_all(pc.points).min() > -1e-6


class TestOracle:
    """Test the analytic antipodal oracle."""

    def test_equator_contact(self):
        """Test a side grasp on a small sphere."""
        scene = _resting_sphere()
        contact = np.array([0.15 + RADIUS, 0.15, RADIUS])
        result = oracle_grasp(scene, contact, np.array([1.0, 0.0, 0.0]), 0.0)
        assert result.success.tolist() == [True]
        assert result.width == pytest.approx(2 * RADIUS)
        assert result.object_id == 0

    def test_sweep_matches_single_angles(self):
        """Test that the sweep agrees with per-angle evaluation."""
        scene = _resting_sphere()
        contact = np.array([0.15, 0.15 + RADIUS, RADIUS])
        normal = np.array([0.0, 1.0, 0.0])
        sweep = oracle_sweep(scene, contact, normal)
        alphas = approach_angles(GraspConfig())
        single = [bool(oracle_grasp(scene, contact, normal, a).success[0]) for a in alphas]
        assert sweep.success.tolist() == single
        assert sweep.success.any()

    def test_wide_cube(self):
        """Test that a cube wider than the stroke is never graspable."""
        cube = Primitive("box", np.eye(3), np.array([0.15, 0.15, 0.05]), np.full(3, 0.05), 1)
        scene = SceneGT([cube])
        contacts = [([0.2, 0.15, 0.05], [1, 0, 0]), ([0.15, 0.2, 0.07], [0, 1, 0])]
        contacts.append(([0.16, 0.14, 0.1], [0, 0, 1]))
        for contact, normal in contacts:
            result = oracle_sweep(scene, np.array(contact, float), np.array(normal, float))
            assert not result.success.any()
            assert result.width == pytest.approx(0.1)

    def test_blocked_corridor(self):
        """Test that a box over the sphere blocks the top-down approach only."""
        contact = np.array([0.15 + RADIUS, 0.15, RADIUS])
        normal = np.array([1.0, 0.0, 0.0])
        blocker = Primitive("box", np.eye(3), [0.15, 0.15, 0.08], [0.05, 0.05, 0.03], 1, 1)
        crowded = SceneGT([_sphere([0.15, 0.15, RADIUS]), blocker])
        free = oracle_grasp(_resting_sphere(), contact, normal, 0.0)
        blocked = oracle_grasp(crowded, contact, normal, 0.0)
        assert free.success[0]
        assert not blocked.success[0]
        assert blocked.width == pytest.approx(free.width)

    def test_width_symmetry(self):
        """Test that swapping contact and exit point keeps the width."""
        box = Primitive("box", np.eye(3), np.array([0.15, 0.15, 0.05]), [0.02, 0.03, 0.05], 1)
        scene = SceneGT([box])
        forward = antipodal_test(scene, np.array([0.17, 0.16, 0.04]), np.array([1.0, 0.0, 0.0]))
        backward = antipodal_test(scene, forward.exit_point, forward.exit_normal)
        assert backward.width == pytest.approx(forward.width, abs=1e-9)
        assert forward.antipodal

    def test_off_surface(self):
        """Test that a contact far from every surface raises."""
        with pytest.raises(InvalidArgumentError):
            contacted_instance(_resting_sphere(), np.array([0.25, 0.25, 0.2]))
        with pytest.raises(InvalidArgumentError):
            oracle_grasp(_resting_sphere(), np.array([0.25, 0.25, 0.2]), np.array([0, 0, 1.0]), 0)

    def test_vertical_normal(self):
        """Test that a contact on top of a sphere uses the singular frame without error."""
        scene = _floating_sphere()
        result = oracle_sweep(scene, np.array([0.15, 0.15, 0.1 + RADIUS]), np.array([0, 0, 1.0]))
        assert result.success.shape == (12,)
        assert result.width == pytest.approx(2 * RADIUS)


class TestLabels:
    """Test grasp and occupancy label sampling."""

    def test_no_contacts(self):
        """Test that zero requested contacts give no labels."""
        scene = _floating_sphere()
        pc = render_depth(scene, spherical_camera(0.6, 0.3, 0.0))
        assert sample_grasp_labels(scene, pc, 0) == []

    def test_table_only_cloud(self):
        """Test that a cloud without object points gives no labels."""
        pc = render_depth(SceneGT([]), spherical_camera(0.6, 0.0, 0.0))
        assert sample_grasp_labels(SceneGT([]), pc, 8) == []

    def test_missing_normals(self):
        """Test that a cloud without normals raises."""
        with pytest.raises(InvalidArgumentError):
            sample_grasp_labels(_floating_sphere(), PointCloud(np.zeros((1, 3))), 4)

    def test_isolated_sphere(self):
        """Test that every contact on an isolated small sphere has a successful angle."""
        scene = _floating_sphere()
        pc = render_depth(scene, spherical_camera(0.6, 0.4, 1.0))
        pc = pc.select(pc.instance_ids >= 0)
        labels = sample_grasp_labels(scene, pc, 16, seed=2)
        assert len(labels) == 16
        for label in labels:
            assert label.success.shape == (12,)
            assert label.success.any()
            assert label.width <= 0.08

    def test_success_within_stroke(self):
        """Test that successful labels never exceed the maximum width."""
        scene = generate_scene("packed", 3, 6)
        labeled = label_scene(scene, 6, SceneConfig(n_contacts=24, n_occupancy=50))
        for label in labeled.grasps:
            if label.success.any():
                assert label.width <= 0.08

    def test_occupancy_split(self):
        """Test the uniform and near-surface sample counts."""
        samples = sample_occupancy(_resting_sphere(), 1000, 0.3, seed=1)
        assert len(samples) == 1000
        assert samples.n_near == 300
        assert samples.labels.shape == (1000, 1)

    def test_occupancy_labels_match_sdf(self):
        """Test that labels agree with the sign of the signed distance."""
        scene = generate_scene("packed", 2, 4)
        samples = sample_occupancy(scene, 500, seed=3)
        assert np.array_equal(samples.labels, scene.sdf_all(samples.points) <= 0)

    def test_near_samples_close(self):
        """Test that near samples lie within three band widths of the surface."""
        band = 0.01
        samples = sample_occupancy(_resting_sphere(), 1000, 0.3, band, seed=4)
        near = samples.points[samples.near]
        distance = np.abs(_resting_sphere().sdf_all(near)[:, 0])
        assert np.mean(distance <= 3 * band) >= 0.95

    def test_bad_fraction(self):
        """Test that a fraction outside [0, 1] raises."""
        with pytest.raises(InvalidArgumentError):
            sample_occupancy(_resting_sphere(), 10, 1.5)

    def test_label_scene(self):
        """Test that a labeled scene keeps object points only."""
        scene = generate_scene("packed", 2, 12)
        labeled = label_scene(scene, 12, SceneConfig(n_contacts=8, n_occupancy=100))
        assert len(labeled.cloud) > 0
        assert np.all(labeled.cloud.instance_ids >= 0)
        assert len(labeled.grasps) == 8
        assert labeled.occupancy.labels.shape == (100, 2)
        arrays = labeled.grasp_arrays(12)
        assert arrays["success"].shape == (8, 12)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
