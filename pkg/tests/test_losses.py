import numpy as np
import pytest
from numpy import testing as npt

from metasdf.autodiff import Tensor, grad
from metasdf.errors import LossError
from metasdf.training.losses import (
    CompositeLossState, clamped_l1, composite_terms, compute_loss, l1_loss, predictions_to_sdf,
    sign_targets,
)


def bce(logits, labels):
    return np.mean(np.log1p(np.exp(logits)) - logits * labels)


def test_l1_loss_flattens_column_predictions():
    pred = np.array([[0.1], [-0.2], [0.4]])
    target = np.array([0.0, 0.0, 0.5])
    assert float(l1_loss(pred, target).data) == pytest.approx((0.1 + 0.2 + 0.1) / 3)


def test_l1_loss_length_mismatch():
    with pytest.raises(LossError):
        l1_loss(np.zeros(3), np.zeros(4))
    with pytest.raises(LossError):
        l1_loss(np.zeros(0), np.zeros(0))


def test_clamped_l1_ignores_far_field():
    pred = np.array([0.5, -0.05])
    target = np.array([0.9, 0.05])
    # both far-field values clamp to 0.1; the near pair differs by 0.1
    assert float(clamped_l1(pred, target, delta=0.1).data) == pytest.approx(0.05)


@pytest.mark.parametrize("delta", [0.0, -0.1])
def test_clamped_l1_needs_positive_delta(delta):
    with pytest.raises(LossError):
        clamped_l1(np.zeros(2), np.zeros(2), delta=delta)


def test_sign_targets_treat_boundary_as_outside():
    npt.assert_array_equal(sign_targets(np.array([-0.2, 0.0, 0.3])), [0.0, 1.0, 1.0])


def test_composite_terms_at_unit_variance():
    rng = np.random.default_rng(0)
    target = rng.normal(size=10)
    pred = rng.normal(size=(10, 2))
    total, l1_term, bce_term = composite_terms(pred, target, CompositeLossState())
    expected_l1 = np.mean(np.abs(pred[:, 0] - target))
    expected_bce = bce(pred[:, 1], (target >= 0).astype(float))
    assert float(l1_term.data) == pytest.approx(expected_l1)
    assert float(bce_term.data) == pytest.approx(expected_bce)
    assert float(total.data) == pytest.approx(expected_l1 + expected_bce)


def test_composite_weights_follow_log_variances():
    rng = np.random.default_rng(1)
    target = rng.normal(size=6)
    pred = rng.normal(size=(6, 2))
    a, b = 0.7, -0.3
    total, l1_term, bce_term = composite_terms(pred, target, CompositeLossState(a, b))
    expected = np.exp(-a) * float(l1_term.data) + a + np.exp(-b) * float(bce_term.data) + b
    assert float(total.data) == pytest.approx(expected)


def test_composite_state_gradient():
    rng = np.random.default_rng(2)
    target = rng.normal(size=8)
    pred = rng.normal(size=(8, 2))
    state = Tensor(np.array([0.2, -0.4]), requires_grad=True)
    total, l1_term, bce_term = composite_terms(pred, target, state)
    (g,) = grad(total, [state])
    npt.assert_allclose(g.data, [1.0 - np.exp(-0.2) * float(l1_term.data),
                                 1.0 - np.exp(0.4) * float(bce_term.data)])


def test_composite_rejects_single_column():
    with pytest.raises(LossError):
        composite_terms(np.zeros((4, 1)), np.zeros(4), CompositeLossState())


def test_composite_loss_state_from_array():
    assert CompositeLossState.from_array([0.5, 1.5]) == CompositeLossState(0.5, 1.5)
    with pytest.raises(LossError):
        CompositeLossState.from_array([np.nan, 0.0])


def test_compute_loss_dispatch():
    pred = np.array([[0.3, 2.0], [-0.1, -1.0]])
    target = np.array([0.1, -0.1])
    assert float(compute_loss("l1", pred, target).data) == pytest.approx(0.1)
    with pytest.raises(LossError):
        compute_loss("composite", pred, target)
    with pytest.raises(LossError):
        compute_loss("huber", pred, target)


def test_predictions_to_sdf_uses_classifier_sign():
    outputs = np.array([[0.3, -2.0], [-0.2, 1.0], [0.1, 0.0]])
    npt.assert_allclose(predictions_to_sdf(outputs), [-0.3, 0.2, 0.1])
    npt.assert_allclose(predictions_to_sdf(np.array([[0.4], [-0.5]])), [0.4, -0.5])
