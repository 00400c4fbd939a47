from spcnav.attention import *
from spcnav.tensorcore import Linear, Parameter, Tensor, backward, numerical_gradient, sum_

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1)


def test_soft_attn(rng):
    keys = Tensor(rng.normal(size=(4, 3)))
    values = Tensor(rng.normal(size=(4, 5)))
    W = Tensor(rng.normal(size=(2, 3)))
    query = Tensor(rng.normal(size=2))

    attended, weights = soft_attn(query, keys, values, W, mask=[False, True, False, False])
    assert attended.shape == (5,)
    assert np.isclose(weights.data.sum(), 1.0)
    assert weights.data[1] == 0.0
    assert np.allclose(attended.data, weights.data @ values.data)

    with pytest.raises(AttentionError):
        soft_attn(query, keys, values, W, mask=[True] * 4)

    with pytest.raises(AttentionError):
        soft_attn(query, keys, Tensor(np.zeros((3, 5))), W)


def test_config_repr_queries_with_delimiter(rng):
    tokens = Tensor(rng.normal(size=(3, 4)))
    W = Tensor(np.zeros((4, 4)))

    # A zero map gives uniform weights
    summary, weights = config_repr(tokens, W)
    assert np.allclose(weights.data, 1 / 3)
    assert np.allclose(summary.data, tokens.data.mean(axis=0))

    with pytest.raises(AttentionError):
        config_repr(Tensor(np.zeros((0, 4))), W)


def test_image_attn_masking(rng):
    projected = Tensor(rng.normal(size=(3, 4)))
    W = Tensor(rng.normal(size=(2, 4)))
    h = Tensor(rng.normal(size=2))

    _, weights = image_attn(h, projected, W, mask=[False, False, True])
    assert weights.data[2] == 0.0

    with pytest.raises(AttentionError):
        image_attn(h, projected, W, mask=[True, True, True])


def test_shift_matrix():
    S = shift_matrix(3)
    assert np.array_equal(S, [[0, 0, 0], [1, 0, 0], [0, 1, 1]])
    assert np.array_equal(shift_matrix(1), [[1.0]])

    with pytest.raises(AttentionError):
        shift_matrix(0)


def test_state_attention_update():
    state = StateAttention.initial(3)
    assert np.array_equal(np.asarray(state), [1.0, 0.0, 0.0])

    state = state.update(Controller(Tensor([0.25, 0.75])))
    assert state.step == 1
    assert np.allclose(np.asarray(state), [0.25, 0.75, 0.0])

    state = state.update(Controller(Tensor([0.5, 0.5])))
    assert np.allclose(np.asarray(state), [0.125, 0.5, 0.375])

    # Always advancing collects the mass on the last configuration
    for _ in range(5):
        state = state.update(Controller(Tensor([0.0, 1.0])))
    assert np.allclose(np.asarray(state), [0.0, 0.0, 1.0])


def test_state_attention_stays_a_distribution(rng):
    alpha = Tensor(rng.dirichlet(np.ones(5)))
    for _ in range(20):
        gamma = Tensor(rng.dirichlet(np.ones(2)))
        alpha = state_attn_update(alpha, gamma)
        assert np.isclose(alpha.data.sum(), 1.0)
        assert np.all(alpha.data >= 0.0)

    # A single configuration keeps all the mass
    single = state_attn_update(Tensor([1.0]), Tensor([0.3, 0.7]))
    assert np.allclose(single.data, [1.0])


def test_state_attention_worked_examples():
    moved = state_attn_update(Tensor([0.7, 0.3, 0.0]), Tensor([0.4, 0.6]))
    np.testing.assert_allclose(moved.data, [0.28, 0.54, 0.18], atol=1e-15)

    # Mass on the last configuration stays there for any controller output
    for gamma in ([1.0, 0.0], [0.4, 0.6], [0.0, 1.0]):
        clamped = state_attn_update(Tensor([0.0, 0.0, 1.0]), Tensor(gamma))
        np.testing.assert_allclose(clamped.data, [0.0, 0.0, 1.0], atol=1e-15)


def convolve_state_attention(alpha, gamma):
    """Move a share gamma[k] of every entry k configurations ahead, clamped at the end"""
    m = len(alpha)
    result = np.zeros(m)
    for j in range(m):
        for k in range(len(gamma)):
            result[min(j + k, m - 1)] += alpha[j] * gamma[k]
    return result


def test_state_attention_matches_convolution():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        m = int(rng.integers(1, 11))
        alpha = rng.dirichlet(np.ones(m))
        if rng.uniform() < 0.3:
            # Sparse distributions exercise the support properties
            alpha = np.where(rng.uniform(size=m) < 0.5, 0.0, alpha)
            if alpha.sum() == 0.0:
                alpha[int(rng.integers(0, m))] = 1.0
            alpha = alpha / alpha.sum()
        gamma = rng.dirichlet(np.ones(2))

        new = state_attn_update(Tensor(alpha), Tensor(gamma)).data
        np.testing.assert_allclose(new, convolve_state_attention(alpha, gamma), rtol=0, atol=1e-12)

        # Mass is conserved
        assert abs(new.sum() - alpha.sum()) < 1e-12

        # Mass only moves forward: no prefix gains mass
        assert np.all(np.cumsum(new) <= np.cumsum(alpha) + 1e-12)

        # The support starts at the same configuration and grows by at most one
        support, new_support = np.flatnonzero(alpha), np.flatnonzero(new)
        assert new_support[0] == support[0]
        assert new_support[-1] <= min(support[-1] + 1, m - 1)


def test_state_attention_errors():
    with pytest.raises(AttentionError):
        StateAttention.initial(0)

    with pytest.raises(AttentionError):
        StateAttention(Tensor([0.5, 0.6]))

    with pytest.raises(AttentionError):
        Controller(Tensor([0.2, 0.3, 0.5]))


def test_state_attention_gradient(rng):
    alpha = Parameter(rng.dirichlet(np.ones(4)))
    gamma = Parameter(np.array([0.4, 0.6]))
    target = np.arange(4.0)

    backward(sum_(state_attn_update(alpha, gamma) * target))
    expected = numerical_gradient(
        lambda: (state_attn_update(alpha, gamma).data * target).sum(), gamma.data
    )
    assert np.allclose(gamma.grad, expected)


def test_similarity_score():
    landmarks = [Tensor([[1.0, 0.0]]), None]
    objects = Tensor(
        [
            [[1.0, 0.0], [0.0, 1.0]],
            [[0.0, 1.0], [0.0, 0.0]],
            [[0.0, 0.0], [0.0, 0.0]],
        ]
    )
    mask = np.array([[False, False], [False, True], [True, True]])

    score = similarity_score(landmarks, objects, mask, Tensor([0.5, 0.5]), n_max=5)
    assert score.shape == (5,)
    assert np.allclose(score.data, [0.5, 0.0, 0.0, 0.0, 0.0])


def test_similarity_without_landmarks():
    objects = Tensor(np.ones((2, 3, 4)))
    mask = np.zeros((2, 3), dtype=bool)
    score = similarity_score([None, None], objects, mask, Tensor([0.5, 0.5]), n_max=4)
    assert np.array_equal(score.data, np.zeros(4))

    with pytest.raises(AttentionError):
        similarity_score([None], objects, mask, Tensor([1.0]), n_max=1)


def nested_similarity(landmarks, objects, mask, alpha, n_max, eps=1e-12):
    n, K, _ = objects.shape
    score = np.zeros(n_max)
    for j in range(n):
        for i, rows in enumerate(landmarks):
            if rows is None or len(rows) == 0 or np.all(mask[j]):
                continue
            best = -np.inf
            for landmark in rows:
                for k in range(K):
                    if mask[j, k]:
                        continue
                    o = objects[j, k]
                    cos = np.dot(o, landmark) / np.sqrt(np.dot(o, o) * np.dot(landmark, landmark) + eps)
                    best = max(best, cos)
            score[j] += alpha[i] * best
    return score


def test_similarity_matches_nested_loops():
    rng = np.random.default_rng(5)
    for _ in range(500):
        m = int(rng.integers(1, 5))
        n_max = int(rng.integers(1, 7))
        n = int(rng.integers(1, n_max + 1))
        K = int(rng.integers(1, 5))
        d = int(rng.integers(1, 5))

        landmarks = []
        for _ in range(m):
            count = int(rng.integers(0, 4))
            landmarks.append(None if count == 0 else rng.normal(size=(count, d)))
        objects = rng.normal(size=(n, K, d))
        objects[rng.uniform(size=(n, K)) < 0.1] = 0.0
        mask = rng.uniform(size=(n, K)) < 0.3
        alpha = rng.dirichlet(np.ones(m))

        score = similarity_score(
            [None if rows is None else Tensor(rows) for rows in landmarks],
            Tensor(objects),
            mask,
            Tensor(alpha),
            n_max,
        )
        expected = nested_similarity(landmarks, objects, mask, alpha, n_max)
        assert score.shape == (n_max,)
        np.testing.assert_allclose(score.data, expected, rtol=0, atol=1e-12)


def test_predict_controller(rng):
    fc = Linear(7, 2, rng)
    controller = predict_controller(
        Tensor(rng.normal(size=3)), Tensor(rng.normal(size=2)), Tensor(rng.normal(size=2)), fc
    )
    assert np.isclose(controller.stay + controller.advance, 1.0)


def test_grounding(rng):
    reprs = Tensor(rng.normal(size=(3, 4)))
    bank = ConfigBank(reprs, [None, None, None], [2, 5, 9])
    assert bank.m == 3
    assert bank.dim == 4

    c_hat = grounded_instruction(Tensor([0.0, 1.0, 0.0]), bank)
    assert np.allclose(c_hat.data, reprs.data[1])

    weights = soft_grounding(Tensor(rng.normal(size=2)), bank, Tensor(rng.normal(size=(2, 4))))
    assert np.isclose(weights.data.sum(), 1.0)

    with pytest.raises(AttentionError):
        grounded_instruction(Tensor([1.0]), bank)

    with pytest.raises(AttentionError):
        ConfigBank(reprs, [None], [2, 5, 9])


def test_object_align(rng):
    objects = Tensor(rng.normal(size=(3, 2, 4)))
    mask = np.array([[False, True], [True, True], [False, False]])
    projected = Tensor(rng.normal(size=(3, 5)))

    attended, weights, object_weights = object_align(
        Tensor(rng.normal(size=6)),
        objects,
        mask,
        Tensor(rng.normal(size=3)),
        projected,
        Tensor(rng.normal(size=(6, 4))),
        Tensor(rng.normal(size=(3, 4))),
    )
    assert attended.shape == (5,)
    assert np.isclose(weights.data.sum(), 1.0)
    assert object_weights[1] is None
    assert np.allclose(object_weights[0].data, [1.0, 0.0])
    assert np.isclose(object_weights[2].data.sum(), 1.0)
