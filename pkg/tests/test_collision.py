"""Unit tests for the gripper collision proxy."""

import numpy as np
import pytest

from icgrasp.core.errors import InvalidArgumentError
from icgrasp.fields.collision import GripperModel, check_grasp_collision, collision_mask
from icgrasp.fields.primitives import Primitive, SceneGT, constant_field, gt_field
from icgrasp.geometry.grasp import GraspPose

# top-down poses: approach along -z
CLOSE_ALONG_Y = np.array([[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])
CLOSE_ALONG_X = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])


def _scene_with_neighbor():
    """A sphere to grasp and a small box just beside it along +y."""
    target = Primitive("sphere", np.eye(3), np.array([0.15, 0.15, 0.05]), np.full(3, 0.02), 0)
    neighbor = Primitive("box", np.eye(3), np.array([0.15, 0.185, 0.06]), np.full(3, 0.008), 1, 1)
    return SceneGT([target, neighbor])


class TestGripperModel:
    """Test the sampled gripper solid."""

    def test_symmetric_about_center(self):
        """Test that the fingers mirror each other about the grasp center."""
        gripper = GripperModel()
        pts = gripper.points(0.05)
        n_finger = len(gripper.finger)
        plus, minus = pts[:n_finger], pts[n_finger:2 * n_finger]
        mirrored = plus * [1, -1, 1] + [0, 2 * gripper.center_y, 0]
        assert np.allclose(np.sort(mirrored, axis=0), np.sort(minus, axis=0))

    def test_opening_is_clamped(self):
        """Test that widths beyond the stroke are clamped."""
        gripper = GripperModel()
        assert np.array_equal(gripper.points(1.0), gripper.points(gripper.w_max))

    def test_pitch(self):
        """Test that lattice spacing never exceeds 2 mm."""
        finger = GripperModel().finger
        step = np.diff(np.unique(finger[:, 2]))
        assert step.max() <= 0.002 + 1e-12

    def test_invalid(self):
        """Test that a coarse pitch raises."""
        with pytest.raises(InvalidArgumentError):
            GripperModel(pitch=0.005)


class TestCollision:
    """Test grasp collision checks."""

    def test_free_space(self):
        """Test a pose above the table in an empty field."""
        pose = GraspPose(CLOSE_ALONG_Y, np.array([0.15, 0.19, 0.2]))
        assert not check_grasp_collision(pose, 0.04, 0, constant_field(0.0, k=2), 0.0)

    def test_palm_below_table(self):
        """Test that a pose reaching under the table collides."""
        pose = GraspPose(np.eye(3), np.array([0.15, 0.15, 0.02]))
        assert check_grasp_collision(pose, 0.04, 0, constant_field(0.0, k=2), 0.0)

    def test_finger_hits_neighbor(self):
        """Test a grasp whose finger closes through the neighboring box."""
        field = gt_field(_scene_with_neighbor())
        pose = GraspPose(CLOSE_ALONG_Y, np.array([0.15, 0.19, 0.05]))
        assert check_grasp_collision(pose, 0.06, 0, field, 0.0)

    def test_free_side(self):
        """Test the same grasp turned so the fingers miss the neighbor."""
        field = gt_field(_scene_with_neighbor())
        pose = GraspPose(CLOSE_ALONG_X, np.array([0.19, 0.15, 0.05]))
        assert not check_grasp_collision(pose, 0.06, 0, field, 0.0)

    def test_target_is_ignored(self):
        """Test that the grasped instance never counts as an obstacle."""
        field = gt_field(_scene_with_neighbor())
        pose = GraspPose(CLOSE_ALONG_X, np.array([0.19, 0.15, 0.05]))
        assert not check_grasp_collision(pose, 0.0, 0, field, 0.0)
        everything = collision_mask(
            pose.rotation[None], pose.translation[None], [0.0], None, field, 0.0
        )
        assert everything[0]

    def test_denser_gripper_is_monotone(self):
        """Test that refining the lattice never clears a collision."""
        field = gt_field(_scene_with_neighbor())
        pose = GraspPose(CLOSE_ALONG_Y, np.array([0.15, 0.19, 0.05]))
        assert check_grasp_collision(pose, 0.06, 0, field, 0.0, gripper=GripperModel(pitch=0.001))

    def test_vectorized(self):
        """Test several poses in one call."""
        field = gt_field(_scene_with_neighbor())
        rotations = np.stack([CLOSE_ALONG_Y, CLOSE_ALONG_X])
        translations = np.array([[0.15, 0.19, 0.05], [0.19, 0.15, 0.05]])
        mask = collision_mask(rotations, translations, np.array([0.06, 0.06]), 0, field, 0.0)
        assert mask.tolist() == [True, False]

    def test_target_out_of_range(self):
        """Test that an unknown target raises."""
        pose = GraspPose(CLOSE_ALONG_Y, np.array([0.15, 0.19, 0.2]))
        with pytest.raises(InvalidArgumentError):
            check_grasp_collision(pose, 0.04, 3, constant_field(0.0, k=2), 0.0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
