import math

import numpy as np
import pytest

from trackbank.errors import ConfigurationError
from trackbank.nets import (
    AdamState,
    MlpParams,
    PolicyParams,
    adam_step,
    entropy,
    greedy_action_index,
    init_policy_params,
    log_softmax,
    mlp_backward,
    mlp_forward,
    orthogonal,
    pack_params,
    policy_forward,
    policy_forward_batch,
    softmax,
    unpack_params,
)


def zero_params(input_width, hidden, actions):
    def zeros(out):
        return MlpParams(
            w1=np.zeros((hidden, input_width)),
            b1=np.zeros(hidden),
            w2=np.zeros((out, hidden)),
            b2=np.zeros(out),
        )

    return PolicyParams(policy=zeros(actions), value=zeros(1))


def random_params(input_width, hidden, actions, rng):
    return init_policy_params(input_width, hidden, actions, rng)


def test_zero_weights_give_a_uniform_policy():
    params = zero_params(6, 4, 5)
    probs, value = policy_forward(params, np.ones(6))
    assert np.allclose(probs, 0.2)
    assert value == 0.0


def test_forced_logits_obey_the_softmax_ratio():
    params = zero_params(4, 3, 3)
    params.policy.b2[0] = math.log(2.0)
    probs, _ = policy_forward(params, np.zeros(4))
    assert probs[0] / probs[1] == pytest.approx(2.0, abs=1e-12)
    assert probs[1] == probs[2]


def test_softmax_matches_an_independent_exp_normalize():
    rng = np.random.default_rng(0)
    for _ in range(20):
        logits = rng.normal(0.0, 3.0, size=(4, 6))
        ours = softmax(logits)
        theirs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        assert np.max(np.abs(ours - theirs)) < 1e-12
        assert np.max(np.abs(ours.sum(axis=1) - 1.0)) < 1e-9
        assert np.allclose(np.log(ours), log_softmax(logits))


def test_softmax_survives_large_logits():
    probs = softmax(np.array([[1000.0, 1000.0, 0.0]]))
    assert np.isfinite(probs).all()
    assert probs[0, 0] == pytest.approx(0.5)


def test_entropy_bounds_and_edge_cases():
    rng = np.random.default_rng(1)
    n = 5
    for _ in range(30):
        probs = softmax(rng.normal(size=(1, n)))
        h = entropy(probs)[0]
        assert 0.0 <= h <= math.log(n) + 1e-12
    assert entropy(np.array([1.0, 0.0, 0.0])) == 0.0
    assert entropy(np.full(4, 0.25)) == pytest.approx(math.log(4))


def test_orthogonal_rows_are_orthonormal_up_to_gain():
    rng = np.random.default_rng(2)
    for rows, cols, gain in ((4, 9, math.sqrt(2.0)), (9, 4, 0.01), (5, 5, 1.0)):
        w = orthogonal(rows, cols, gain, rng)
        assert w.shape == (rows, cols)
        product = w @ w.T if rows <= cols else w.T @ w
        side = min(rows, cols)
        assert np.allclose(product, gain * gain * np.eye(side), atol=1e-10)


def test_initial_policy_is_near_uniform():
    rng = np.random.default_rng(3)
    params = init_policy_params(12, 16, 7, rng)
    obs = np.zeros(12)
    obs[[0, 3, 5]] = 1.0
    probs, _ = policy_forward(params, obs)
    assert np.max(np.abs(probs - 1.0 / 7.0)) < 0.02
    assert params.value.w2.shape == (1, 16)
    with pytest.raises(ConfigurationError):
        init_policy_params(0, 16, 7, rng)


def test_mlp_backward_matches_finite_differences():
    rng = np.random.default_rng(4)
    p = MlpParams(
        w1=rng.normal(0, 0.7, size=(4, 5)),
        b1=rng.normal(0, 0.3, size=4),
        w2=rng.normal(0, 0.7, size=(3, 4)),
        b2=rng.normal(0, 0.3, size=3),
    )
    x = rng.normal(size=(6, 5))
    weights = rng.normal(size=(6, 3))

    def loss(params):
        out, _ = mlp_forward(params, x)
        return float((out * weights).sum())

    out, cache = mlp_forward(p, x)
    grads = mlp_backward(p, cache, weights)

    h = 1e-6
    for name, arr in p.tensors():
        g = dict(grads.tensors())[name]
        flat = arr.ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss(p)
            flat[i] = keep - h
            down = loss(p)
            flat[i] = keep
            fd = (up - down) / (2 * h)
            assert abs(fd - g.ravel()[i]) <= 1e-4 * max(abs(fd), abs(g.ravel()[i]), 1e-6)


def test_policy_forward_validates_shapes():
    params = zero_params(6, 4, 3)
    with pytest.raises(ConfigurationError):
        policy_forward(params, np.zeros(5))
    with pytest.raises(ConfigurationError):
        policy_forward_batch(params, np.zeros((2, 5)))
    probs, logp, values = policy_forward_batch(params, np.zeros((2, 6)))
    assert probs.shape == (2, 3)
    assert logp.shape == (2, 3)
    assert values.shape == (2,)


def test_greedy_readout_breaks_ties_low():
    assert greedy_action_index(np.array([0.4, 0.4, 0.2])) == 0
    assert greedy_action_index(np.array([0.1, 0.8, 0.1])) == 1


def test_pack_unpack_round_trip():
    rng = np.random.default_rng(5)
    params = random_params(7, 6, 4, rng)
    vector = pack_params(params)
    rebuilt = unpack_params(vector, params)
    for (_, a), (_, b) in zip(params.tensors(), rebuilt.tensors()):
        assert np.array_equal(a, b)
    with pytest.raises(ConfigurationError):
        unpack_params(vector[:-1], params)


def test_adam_matches_a_reference_implementation():
    rng = np.random.default_rng(6)
    params = random_params(5, 4, 3, rng)
    mirror = params.copy()
    state = AdamState.for_params(params)
    lr, beta1, beta2, eps = 1e-3, 0.9, 0.999, 1e-8

    m = {name: np.zeros_like(arr) for name, arr in mirror.tensors()}
    v = {name: np.zeros_like(arr) for name, arr in mirror.tensors()}
    for step in range(1, 6):
        grads = random_params(5, 4, 3, np.random.default_rng(100 + step))
        adam_step(params, grads, state, lr, beta1, beta2, eps)
        grad_map = dict(grads.tensors())
        scale = lr * math.sqrt(1.0 - beta2**step) / (1.0 - beta1**step)
        for name, arr in mirror.tensors():
            g = grad_map[name]
            m[name] = beta1 * m[name] + (1 - beta1) * g
            v[name] = beta2 * v[name] + (1 - beta2) * g * g
            arr -= scale * m[name] / (np.sqrt(v[name]) + eps)
        for (_, ours), (_, ref) in zip(params.tensors(), mirror.tensors()):
            assert np.allclose(ours, ref, atol=1e-15)
    assert state.step == 5


def test_adam_first_step_has_learning_rate_magnitude():
    params = zero_params(2, 2, 2)
    grads = zero_params(2, 2, 2)
    grads.policy.b2[:] = [3.0, -0.5]
    state = AdamState.for_params(params)
    adam_step(params, grads, state, lr=0.01)
    assert np.allclose(params.policy.b2, [-0.01, 0.01], atol=1e-6)
