"""Unit tests for loss terms and instance matching."""

import itertools
import math

import numpy as np
import pytest
import torch

from icgrasp.core.errors import InvalidArgumentError
from icgrasp.losses.matching import hungarian, match_instances
from icgrasp.losses.terms import (
    COMPONENTS,
    LossLabels,
    LossPrediction,
    bce,
    dice,
    total_loss,
)


def _brute_force(cost: np.ndarray) -> float:
    n = cost.shape[0]
    perms = np.array(list(itertools.permutations(range(n))))
    return float(cost[np.arange(n), perms].sum(axis=1).min())


def _random_masks(n_gt: int, n_tokens: int, seed: int) -> torch.Tensor:
    owner = torch.as_tensor(np.random.default_rng(seed).integers(n_gt, size=n_tokens))
    return (owner[None, :] == torch.arange(n_gt)[:, None]).double()


def _scene_labels(masks: torch.Tensor, n_alpha: int = 4) -> LossLabels:
    n_gt = masks.shape[0]
    rng = np.random.default_rng(1)
    success = torch.as_tensor(rng.random((6, n_alpha)) > 0.5)
    success[0] = False
    return LossLabels(
        masks=masks,
        classes=torch.arange(n_gt) % 4,
        occupancy=torch.as_tensor(rng.random((20, n_gt)) > 0.5),
        contact_instance=torch.arange(6) % n_gt,
        success=success,
        widths=torch.as_tensor(rng.uniform(0.01, 0.07, 6)),
        no_object=4,
    )


class TestBce:
    """Test the binary cross-entropy."""

    def test_zero_logits(self):
        """Test chance level for zero logits."""
        value = bce(torch.zeros(10), torch.tensor([0, 1] * 5))
        assert float(value) == pytest.approx(math.log(2))

    def test_confident_correct(self):
        """Test a large correct logit."""
        value = bce(torch.tensor([20.0], dtype=torch.float64), torch.tensor([1.0]))
        assert float(value) == pytest.approx(2.06e-9, rel=0.01)

    def test_perfect_mixed(self):
        """Test perfect logits on mixed labels."""
        gt = torch.tensor([1.0, 0.0, 1.0, 0.0], dtype=torch.float64)
        assert float(bce(40.0 * gt - 20.0, gt)) < 1e-8

    def test_stable_for_large_logits(self):
        """Test that very wrong logits stay finite."""
        value = bce(torch.tensor([1000.0], dtype=torch.float64), torch.tensor([0.0]))
        assert float(value) == pytest.approx(1000.0)

    def test_weights(self):
        """Test that zero weights drop elements."""
        logits = torch.tensor([0.0, 30.0], dtype=torch.float64)
        gt = torch.tensor([1.0, 0.0])
        value = bce(logits, gt, weights=torch.tensor([1.0, 0.0]))
        assert float(value) == pytest.approx(math.log(2))

    def test_shape_mismatch(self):
        """Test that different shapes raise."""
        with pytest.raises(InvalidArgumentError):
            bce(torch.zeros(3), torch.zeros(4))


class TestDice:
    """Test the DICE loss."""

    def test_perfect_overlap(self):
        """Test hard perfect predictions."""
        gt = torch.tensor([1.0] * 60 + [0.0] * 40, dtype=torch.float64)
        assert float(dice(40.0 * gt - 20.0, gt)) < 0.01

    def test_disjoint(self):
        """Test disjoint prediction and gt of 1000 points each."""
        pred = torch.cat([torch.full((1000,), 50.0), torch.full((1000,), -50.0)]).double()
        gt = torch.cat([torch.zeros(1000), torch.ones(1000)]).double()
        assert float(dice(pred, gt)) == pytest.approx(1 - 1 / 2001, abs=1e-9)

    def test_both_empty(self):
        """Test that empty prediction and gt give zero."""
        assert float(dice(torch.full((5,), -50.0).double(), torch.zeros(5))) == pytest.approx(
            0.0, abs=1e-9
        )

    def test_range(self):
        """Test that random inputs stay in [0, 1]."""
        gen = torch.Generator().manual_seed(0)
        for _ in range(20):
            logits = torch.randn(50, generator=gen) * 5
            value = float(dice(logits, torch.rand(50, generator=gen) > 0.5))
            assert 0.0 <= value <= 1.0


class TestHungarian:
    """Test the exact assignment."""

    def test_two_by_two(self):
        """Test a small matrix against its two permutations."""
        result = hungarian(np.array([[1.0, 2.0], [3.0, 0.0]]))
        assert result.pairs == [(0, 0), (1, 1)]
        assert result.total == 1.0

    def test_identity(self):
        """Test a matrix with a zero diagonal."""
        cost = np.ones((5, 5)) - np.eye(5)
        result = hungarian(cost)
        assert result.pairs == [(i, i) for i in range(5)]
        assert result.total == 0.0

    def test_brute_force(self):
        """Test random 7x7 matrices against all permutations."""
        rng = np.random.default_rng(0)
        for _ in range(200):
            cost = rng.random((7, 7))
            result = hungarian(cost)
            assert result.total == pytest.approx(_brute_force(cost), abs=1e-12)
            assert sorted(result.queries) == list(range(7))
            assert sorted(result.gts) == list(range(7))

    def test_not_worse_than_permutations(self):
        """Test against the identity and random permutations."""
        rng = np.random.default_rng(1)
        cost = rng.random((6, 6))
        total = hungarian(cost).total
        assert total <= np.trace(cost) + 1e-12
        for _ in range(100):
            perm = rng.permutation(6)
            assert total <= cost[np.arange(6), perm].sum() + 1e-12

    def test_ties(self):
        """Test that ties resolve to the lexicographically smallest assignment."""
        result = hungarian(np.zeros((3, 3)))
        assert result.pairs == [(0, 0), (1, 1), (2, 2)]
        result = hungarian(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert result.pairs == [(0, 0), (1, 1)]

    def test_rectangular(self):
        """Test more queries than gt instances."""
        cost = np.array([[5.0, 5.0], [1.0, 9.0], [9.0, 1.0], [2.0, 2.0]])
        result = hungarian(cost)
        assert len(result) == 2
        assert result.pairs == [(1, 0), (2, 1)]
        assert result.unmatched_queries() == [0, 3]
        assert result.gt_of_query().tolist() == [-1, 0, 1, -1]

    def test_wide(self):
        """Test more gt instances than queries."""
        result = hungarian(np.array([[3.0, 1.0, 2.0]]))
        assert result.pairs == [(0, 1)]

    def test_non_finite(self):
        """Test that non-finite costs raise."""
        with pytest.raises(InvalidArgumentError):
            hungarian(np.array([[np.inf, 0.0], [0.0, 1.0]]))


class TestMatchInstances:
    """Test segmentation-based matching."""

    def test_identity_equivalent(self):
        """Test that predictions equal to the gt masks match one to one."""
        gt = _random_masks(3, 60, seed=0)
        result = match_instances(40.0 * gt - 20.0, gt)
        assert result.pairs == [(0, 0), (1, 1), (2, 2)]

    def test_many_queries(self):
        """Test 32 queries against 3 instances."""
        gt = _random_masks(3, 80, seed=1)
        gen = torch.Generator().manual_seed(0)
        logits = torch.randn(32, 80, generator=gen, dtype=torch.float64)
        result = match_instances(logits, gt)
        assert len(result) == 3
        assert len(result.unmatched_queries()) == 29

    def test_gt_permutation(self):
        """Test that swapping two gt instances swaps their queries."""
        gt = _random_masks(3, 60, seed=2)
        logits = 40.0 * gt[[2, 0, 1]] - 20.0
        before = match_instances(logits, gt).gt_of_query()
        after = match_instances(logits, gt[[1, 0, 2]]).gt_of_query()
        swap = {0: 1, 1: 0, 2: 2}
        assert after.tolist() == [swap[g] for g in before.tolist()]

    def test_needs_gt(self):
        """Test that an empty gt set raises."""
        with pytest.raises(InvalidArgumentError):
            match_instances(torch.zeros(2, 5), torch.zeros(0, 5))


class TestTotalLoss:
    """Test the combined training loss."""

    def _prediction(self, masks, labels, perfect: bool) -> LossPrediction:
        n_gt = masks.shape[0]
        n_queries = n_gt + 2
        mask_logits = torch.zeros(n_queries, masks.shape[1], dtype=torch.float64)
        class_logits = torch.zeros(n_queries, 5, dtype=torch.float64)
        occupancy = torch.zeros(n_gt, labels.occupancy.shape[0], dtype=torch.float64)
        affordance = torch.zeros(n_gt, 6, labels.success.shape[1], dtype=torch.float64)
        widths = torch.zeros(n_gt, 6, dtype=torch.float64)
        if perfect:
            mask_logits[:n_gt] = 40.0 * masks - 20.0
            mask_logits[n_gt:] = -20.0
            class_logits[:, 4] = 20.0
            for q in range(n_gt):
                class_logits[q, 4] = 0.0
                class_logits[q, int(labels.classes[q])] = 20.0
            occupancy = 40.0 * labels.occupancy.T.double() - 20.0
            affordance = (40.0 * labels.success.double() - 20.0).expand(n_gt, -1, -1).clone()
            widths = labels.widths.double().expand(n_gt, -1).clone()
        return LossPrediction([mask_logits], class_logits, occupancy, affordance, widths)

    def test_components(self):
        """Test that every term is reported and the total is their sum."""
        masks = _random_masks(2, 40, seed=3)
        labels = _scene_labels(masks)
        pred = self._prediction(masks, labels, perfect=False)
        assignment = match_instances(pred.mask_logits[0], masks)
        loss, components = total_loss(pred, labels, assignment)

        assert set(components) == set(COMPONENTS) | {"total"}
        assert components["total"] == pytest.approx(sum(components[c] for c in COMPONENTS))
        # zero heads sit at chance level
        assert components["mask_bce"] == pytest.approx(math.log(2))
        assert components["grasp_bce"] == pytest.approx(math.log(2))
        assert components["occupancy"] == pytest.approx(math.log(2))
        assert components["semantic"] == pytest.approx(math.log(5))
        assert float(loss) == pytest.approx(components["total"])

    def test_perfect(self):
        """Test that perfect predictions leave only the smoothing floor."""
        masks = _random_masks(2, 40, seed=4)
        labels = _scene_labels(masks)
        pred = self._prediction(masks, labels, perfect=True)
        assignment = match_instances(pred.mask_logits[0], masks)
        _, components = total_loss(pred, labels, assignment)
        assert components["total"] < 0.02

    def test_missing_labels(self):
        """Test that a missing label array raises."""
        masks = _random_masks(2, 40, seed=5)
        labels = _scene_labels(masks)
        pred = self._prediction(masks, labels, perfect=False)
        assignment = match_instances(pred.mask_logits[0], masks)
        labels.widths = None
        with pytest.raises(InvalidArgumentError):
            total_loss(pred, labels, assignment)

    def test_gradient_step_decreases(self):
        """Test that plain gradient steps on one batch lower the loss."""
        masks = _random_masks(2, 40, seed=6)
        labels = _scene_labels(masks)
        pred = self._prediction(masks, labels, perfect=False)
        params = [
            pred.mask_logits[0],
            pred.class_logits,
            pred.occupancy_logits,
            pred.affordance_logits,
            pred.widths,
        ]
        for p in params:
            p.requires_grad_(True)
        optimizer = torch.optim.SGD(params, lr=1.0)
        assignment = match_instances(pred.mask_logits[0].detach(), masks)
        values = []
        for _ in range(10):
            optimizer.zero_grad()
            loss, _ = total_loss(pred, labels, assignment)
            loss.backward()
            optimizer.step()
            values.append(float(loss))
        assert sum(b < a for a, b in zip(values, values[1:])) >= 8


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
