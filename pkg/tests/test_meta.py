import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy import testing as npt

from metasdf.autodiff import Tensor, check_gradient, grad, ops
from metasdf.data.sampling import make_task
from metasdf.data.sdf_grid import grid_from_function
from metasdf.errors import ConfigError
from metasdf.nets.mlp import mlp_forward
from metasdf.nets.parameters import MlpConfig
from metasdf.training import meta_learner
from metasdf.training.losses import compute_loss
from metasdf.training.meta_learner import (
    MetaConfig, adapt_params, init_meta_model, inner_adapt, load_meta_checkpoint, meta_objective,
    net_config, outer_step, save_meta_checkpoint, specialize,
)
from metasdf.training.optimizer import Adam
from metasdf.utils import logging_utils

# 2 -> 4 -> 1: few enough relu kinks for finite differences
FD_NET = MlpConfig(in_dim=2, hidden_dim=4, num_layers=2, out_dim=1)
RING = grid_from_function(lambda p: np.abs(np.linalg.norm(p, axis=1) - 0.5) - 0.1, (24, 24))


def quadratic_setup():
    rng = np.random.default_rng(0)
    w = rng.uniform(0.5, 2.0, size=5)
    c = rng.normal(size=5)
    target = rng.normal(size=5)
    theta0 = rng.normal(size=5)

    def inner(phi):
        return ops.scale(ops.sum(ops.mul(w, ops.mul(ops.sub(phi, c), ops.sub(phi, c)))), 0.5)

    return w, c, target, theta0, inner


def test_k_zero_returns_theta(circle_grid, tiny_net):
    model = init_meta_model(tiny_net, MetaConfig(k=0), seed=1)
    task = make_task(circle_grid, "dense", 32, 32, seed=0)
    result = inner_adapt(model, task.context_coords, task.context_values)
    npt.assert_array_equal(result.phi.data, model.theta.data)
    assert len(result.context_losses) == 1


def test_zero_learning_rate_keeps_theta(circle_grid, tiny_net):
    model = init_meta_model(tiny_net, MetaConfig(k=3, alpha_init=0.0), seed=1)
    task = make_task(circle_grid, "dense", 32, 32, seed=0)
    result = inner_adapt(model, task.context_coords, task.context_values)
    npt.assert_array_equal(result.phi.data, model.theta.data)
    assert len(result.context_losses) == 4
    assert len(set(result.context_losses)) == 1


def test_one_step_matches_closed_form(circle_grid, tiny_net):
    model = init_meta_model(tiny_net, MetaConfig(k=1, alpha_init=0.05), seed=2)
    task = make_task(circle_grid, "dense", 48, 16, seed=0)
    theta = Tensor(model.theta.data.copy(), requires_grad=True)
    loss = compute_loss("l1", mlp_forward(theta, tiny_net, task.context_coords), task.context_values)
    (g,) = grad(loss, [theta])
    expected = model.theta.data - 0.05 * g.data
    result = inner_adapt(model, task.context_coords, task.context_values)
    npt.assert_allclose(result.phi.data, expected, rtol=1e-10, atol=1e-12)
    assert result.context_losses[0] == pytest.approx(float(loss.data))


def test_second_order_gradients_on_quadratic():
    w, c, target, theta0, inner = quadratic_setup()
    alpha = 0.1
    theta = Tensor(theta0.copy(), requires_grad=True)
    a = Tensor(np.full(5, alpha), requires_grad=True)
    result = adapt_params(theta, [a], inner, k=1)
    diff = ops.sub(result.phi, target)
    outer = ops.scale(ops.sum(ops.mul(diff, diff)), 0.5)
    g_theta, g_alpha = grad(outer, [theta, a])
    phi1 = theta0 - alpha * w * (theta0 - c)
    npt.assert_allclose(result.phi.data, phi1)
    npt.assert_allclose(g_theta.data, (phi1 - target) * (1.0 - alpha * w))
    npt.assert_allclose(g_alpha.data, -(phi1 - target) * w * (theta0 - c))


def test_alpha_gradient_with_constant_theta():
    w, c, target, theta0, inner = quadratic_setup()
    alpha = 0.1
    a = Tensor(np.full(5, alpha), requires_grad=True)
    result = adapt_params(Tensor(theta0.copy()), [a], inner, k=1)
    diff = ops.sub(result.phi, target)
    (g_alpha,) = grad(ops.scale(ops.sum(ops.mul(diff, diff)), 0.5), [a])
    phi1 = theta0 - alpha * w * (theta0 - c)
    npt.assert_allclose(result.phi.data, phi1)
    npt.assert_allclose(g_alpha.data, -(phi1 - target) * w * (theta0 - c))
    assert not logging_utils.problem_cases


def test_alpha_gradient_after_two_steps_with_constant_theta():
    w, c, target, theta0, inner = quadratic_setup()
    a = Tensor(np.full(5, 0.1), requires_grad=True)
    result = adapt_params(Tensor(theta0.copy()), [a], inner, k=2)
    diff = ops.sub(result.phi, target)
    (g_alpha,) = grad(ops.scale(ops.sum(ops.mul(diff, diff)), 0.5), [a])
    # phi2 - c = (1 - a w)^2 (theta0 - c)
    expected = (result.phi.data - target) * -2.0 * w * (1.0 - 0.1 * w) * (theta0 - c)
    npt.assert_allclose(g_alpha.data, expected)


def test_first_order_drops_the_hessian_term():
    w, c, target, theta0, inner = quadratic_setup()
    theta = Tensor(theta0.copy(), requires_grad=True)
    a = Tensor(np.full(5, 0.1), requires_grad=True)
    result = adapt_params(theta, [a], inner, k=1, first_order=True)
    diff = ops.sub(result.phi, target)
    (g_theta,) = grad(ops.scale(ops.sum(ops.mul(diff, diff)), 0.5), [theta])
    npt.assert_allclose(g_theta.data, result.phi.data - target)


def test_trajectory_has_every_iterate():
    _, _, _, theta0, inner = quadratic_setup()
    result = adapt_params(Tensor(theta0), [Tensor(np.full(5, 0.1))], inner, k=4, keep_trajectory=True)
    assert len(result.trajectory) == 5
    assert len(result.context_losses) == 5
    npt.assert_array_equal(result.trajectory[0], theta0)
    npt.assert_array_equal(result.trajectory[-1], result.phi.data)
    # small steps on a convex quadratic
    assert np.all(np.diff(result.context_losses) < 0)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_meta_gradient_wrt_theta_matches_finite_differences(circle_grid, k):
    model = init_meta_model(FD_NET, MetaConfig(k=k, alpha_init=0.05), seed=3)
    task = make_task(circle_grid, "dense", 4, 4, seed=k)
    check = check_gradient(lambda th: meta_objective(model, task, theta=th), model.theta.data,
                           h=1e-5, floor=1e-6)
    assert check.checked > 0
    assert check.max_rel_error < 1e-4


@pytest.mark.parametrize("k", [1, 2, 3])
def test_meta_gradient_wrt_alpha_matches_finite_differences(circle_grid, k):
    model = init_meta_model(FD_NET, MetaConfig(k=k, alpha_init=0.05), seed=4)
    task = make_task(circle_grid, "dense", 4, 4, seed=k)
    check = check_gradient(lambda a: meta_objective(model, task, alpha=[a]), model.alpha[0].data,
                           h=1e-5, floor=1e-6)
    assert check.checked > 0
    assert check.max_rel_error < 1e-4


def test_per_step_alpha_count():
    model = init_meta_model(FD_NET, MetaConfig(k=3, per_step_alpha=True), seed=0)
    assert len(model.alpha) == 3
    assert set(model.named_arrays()) == {"theta", "loss_state", "alpha.0", "alpha.1", "alpha.2"}
    with pytest.raises(ConfigError):
        meta_learner.MetaModel(net=FD_NET, config=MetaConfig(k=3, per_step_alpha=True),
                               theta=model.theta, alpha=model.alpha[:1])


@pytest.mark.parametrize("kwargs", [{"k": -1}, {"beta": 0.0}, {"inner_loss": "huber"}, {"alpha_init": -0.1}])
def test_meta_config_validation(kwargs):
    with pytest.raises(ConfigError):
        MetaConfig(**kwargs)


@settings(max_examples=10, deadline=None)
@given(perm_seed=st.integers(0, 2 ** 16))
def test_specialization_ignores_context_order(perm_seed):
    model = init_meta_model(FD_NET, MetaConfig(k=2, alpha_init=0.05), seed=5)
    task = make_task(RING, "dense", 40, 8, seed=0)
    perm = np.random.default_rng(perm_seed).permutation(40)
    a = specialize(model, task.context_coords, task.context_values)
    b = specialize(model, task.context_coords[perm], task.context_values[perm])
    npt.assert_array_equal(a.params.data, b.params.data)


def test_specialization_is_deterministic(circle_grid, tiny_net):
    model = init_meta_model(tiny_net, MetaConfig(k=3, alpha_init=0.05), seed=5)
    task = make_task(circle_grid, "levelset", 64, 8, seed=0)
    a = specialize(model, task.context_coords, task.context_values, keep_trajectory=True)
    b = specialize(model, task.context_coords, task.context_values)
    assert a.params.checksum() == b.params.checksum()
    assert len(a.trajectory) == 4
    assert a.steps == 3


def test_outer_steps_reduce_meta_loss(circle_grid, small_net):
    model = init_meta_model(small_net, MetaConfig(k=2, alpha_init=0.01), seed=0)
    task = make_task(circle_grid, "dense", 64, 64, seed=0)
    optimizer = Adam(lr=1e-2)
    losses = [outer_step(model, [task], optimizer, threads=1) for _ in range(30)]
    assert np.all(np.isfinite(losses))
    assert losses[-1] < losses[0]
    assert optimizer.t["theta"] == 30


def test_outer_step_is_thread_count_independent(circle_grid, tiny_net):
    tasks = [make_task(circle_grid, "dense", 32, 32, seed=s, shape_id=f"s{s}") for s in range(3)]
    results = []
    for threads in (1, 3):
        model = init_meta_model(tiny_net, MetaConfig(k=2, alpha_init=0.02), seed=0)
        outer_step(model, tasks, Adam(lr=1e-3), threads=threads)
        results.append(model.theta.data.copy())
    npt.assert_array_equal(results[0], results[1])


def test_non_finite_task_skips_the_step(circle_grid, tiny_net):
    model = init_meta_model(tiny_net, MetaConfig(k=2, alpha_init=0.02), seed=0)
    good = make_task(circle_grid, "dense", 32, 32, seed=0, shape_id="good")
    bad = dataclasses.replace(good, context_values=np.full(32, np.nan), shape_id="bad")
    before = model.theta.checksum()
    loss = outer_step(model, [good, bad], Adam(lr=1e-3), threads=1)
    assert np.isnan(loss)
    assert model.theta.checksum() == before
    assert any("bad" in p for p in logging_utils.problem_cases)


def test_composite_model_learns_loss_state(circle_grid, small_config):
    cfg = dataclasses.replace(small_config, loss="composite", inner_loss="composite")
    model = init_meta_model(net_config(cfg, 2), MetaConfig.from_experiment(cfg), seed=0)
    assert model.net.out_dim == 2
    task = make_task(circle_grid, "dense", 64, 64, seed=0)
    outer_step(model, [task], Adam(lr=1e-2), threads=1)
    assert np.any(model.loss_state != 0.0)


def test_checkpoint_round_trip(tmp_path, small_config):
    model = init_meta_model(net_config(small_config, 2), MetaConfig.from_experiment(small_config), seed=7)
    optimizer = Adam(lr=small_config.lr)
    path = str(tmp_path / "model.ckpt")
    save_meta_checkpoint(path, model, small_config, optimizer, next_epoch=1, step=4)
    loaded, cfg, _, header = load_meta_checkpoint(path)
    assert loaded.theta.checksum() == model.theta.checksum()
    npt.assert_array_equal(loaded.alpha[0].data, model.alpha[0].data)
    assert cfg == small_config
    assert header["step"] == 4
