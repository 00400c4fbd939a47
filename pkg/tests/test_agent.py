from spcnav.agent import *
from spcnav.config import ModelConfig
from spcnav.parse import DELIMITER, parse_instruction
from spcnav.tensorcore import DimensionError, Tensor, backward, cross_entropy, no_grad, numerical_gradient
from spcnav.train import episode_loss
from spcnav.world import observe

import numpy as np
import pytest


INSTRUCTION = "Walk past the table, and stop at the couch."


def make_agent(config, instruction=INSTRUCTION):
    parsed = parse_instruction(instruction)
    return SpcNavAgent(config, Vocabulary.build([parsed.token_stream])), parsed


def test_vocabulary():
    vocab = Vocabulary.build([["walk", "past", DELIMITER], ["stop", "walk"]])
    assert vocab.tokens[:3] == [PAD, UNK, DELIMITER]
    assert vocab.tokens[3:] == ["past", "stop", "walk"]
    assert "walk" in vocab
    assert vocab.index("sofa") == vocab.index(UNK)
    assert list(vocab.encode(["walk", "sofa"])) == [5, 1]

    # The unknown token is always present
    assert Vocabulary(["a", "b"]).tokens == [UNK, "a", "b"]


def test_motion_and_object_vocabularies():
    motions = motion_vocabulary()
    assert "walk past" in motions
    assert "walk" in motions
    assert "couch" in object_vocabulary()


def test_select_action():
    p = [0.2, 0.5, 0.3]
    assert select_action(p) == 1
    assert select_action([0.4, 0.4, 0.2]) == 0
    assert select_action(p, mode="teacher", teacher_action=2) == 2

    rng = np.random.default_rng(0)
    draws = {select_action([0.0, 1.0, 0.0], mode="sample", rng=rng) for _ in range(10)}
    assert draws == {1}

    with pytest.raises(ActionError):
        select_action(p, mode="teacher", teacher_action=3)

    with pytest.raises(ActionError):
        select_action(p, mode="sample")

    with pytest.raises(ActionError):
        select_action(p, mode="beam")


def test_group_scores():
    z = Tensor([1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(group_scores(z, [[0, 1], [2, 3]]).data, [3.0, 7.0])


def test_encode(small_model_config):
    agent, parsed = make_agent(small_model_config)
    bank = agent.encode(parsed)

    assert bank.m == parsed.m == 2
    assert bank.dim == small_model_config.enriched_dim
    assert bank.delimiters == [parsed.stream_span(0).end - 1, parsed.stream_span(1).end - 1]
    assert all(e is not None for e in bank.landmark_embs)


def test_step_outputs(small_model_config, line_world):
    agent, parsed = make_agent(small_model_config)
    bank = agent.encode(parsed)
    state = agent.init_state(bank)
    assert np.array_equal(state.alpha.data, [1.0, 0.0])

    obs = observe(line_world, 1, k_objects=3, n_max=8)
    state, out = agent.step(state, bank, obs)

    assert state.t == 1
    assert out.p.shape == (obs.n_actions,)
    assert np.isclose(out.probabilities.sum(), 1.0)
    assert np.isclose(out.alpha.data.sum(), 1.0)
    assert np.isclose(out.gamma.data.sum(), 1.0)
    assert 0.0 < out.progress.item() < 1.0

    # The step is differentiable end to end
    backward(cross_entropy(out.logits, obs.stop_action))
    assert agent.decoder.weight.grad is not None
    assert agent.token_embedding.weight.grad is not None


def test_step_is_deterministic(small_model_config, line_world):
    obs = observe(line_world, 2, k_objects=3, n_max=8)
    outputs = []
    for _ in range(2):
        agent, parsed = make_agent(small_model_config)
        bank = agent.encode(parsed)
        _, out = agent.step(agent.init_state(bank), bank, obs)
        outputs.append(out.probabilities)
    assert np.array_equal(outputs[0], outputs[1])


@pytest.mark.parametrize(
    "switches",
    [
        dict(use_motion=False, use_landmark=False, use_similarity=False),
        dict(use_motion=True, use_landmark=True, use_similarity=False),
        dict(grounding="soft"),
    ],
)
def test_ablation_variants(small_model_config, line_world, switches):
    config = small_model_config.copy(**switches)
    agent, parsed = make_agent(config)
    bank = agent.encode(parsed)
    assert bank.dim == config.enriched_dim

    _, out = agent.step(agent.init_state(bank), bank, observe(line_world, 0, k_objects=3, n_max=8))
    assert np.isclose(out.probabilities.sum(), 1.0)
    if config.grounding == "soft":
        assert out.gamma is None


def test_step_rejects_wrong_features(small_model_config, line_world):
    agent, parsed = make_agent(small_model_config.copy(feature_dim=4))
    bank = agent.encode(parsed)
    with pytest.raises(DimensionError):
        agent.step(agent.init_state(bank), bank, observe(line_world, 0, k_objects=3, n_max=8))


def test_save_and_load(tmp_path, small_model_config, line_world):
    agent, parsed = make_agent(small_model_config)
    filename = agent.save(str(tmp_path / "agent.npz"), epoch=3)

    loaded, header = load_agent(filename)
    assert header["epoch"] == 3
    assert loaded.config == agent.config
    assert loaded.vocabulary.tokens == agent.vocabulary.tokens
    assert loaded.parameter_count() == agent.parameter_count()

    obs = observe(line_world, 1, k_objects=3, n_max=8)
    probabilities = []
    for a in (agent, loaded):
        bank = a.encode(parsed)
        _, out = a.step(a.init_state(bank), bank, obs)
        probabilities.append(out.probabilities)
    assert np.array_equal(probabilities[0], probabilities[1])


def test_parse_cached():
    assert parse_cached(INSTRUCTION) is parse_cached(INSTRUCTION)


@pytest.mark.parametrize(
    "name",
    [
        "encoder_forward.weight",
        "config_W",
        "img_W",
        "controller.weight",
        "controller.bias",
        "obj_W",
        "objimg_W",
        "decoder.weight",
        "fc_pred.weight",
        "fc_stop.weight",
        "fc_progress.weight",
        "fc_progress.bias",
    ],
)
def test_episode_loss_gradient(small_model_config, line_world, line_episode, name):
    agent, _ = make_agent(small_model_config.copy(max_steps=2), line_episode.instruction)
    param = dict(agent.named_parameters())[name]

    loss, path = episode_loss(agent, line_world, line_episode, "teacher")
    assert path == [0, 1]
    backward(loss)
    analytic = param.grad[:2].copy()

    def f():
        with no_grad():
            return episode_loss(agent, line_world, line_episode, "teacher")[0].item()

    # The first rows are a view, so the perturbations reach the parameter
    numeric = numerical_gradient(f, param.data[:2])

    assert np.any(np.abs(numeric) > 1e-8)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-3, atol=1e-7)
