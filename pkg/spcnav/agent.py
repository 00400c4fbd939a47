"""The instruction-following agent

The agent encodes a parsed instruction into a bank of enriched
configuration representations and then decodes one action per step from
the panoramic observation at its current viewpoint.
"""

from spcnav.attention import (
    ConfigBank,
    StateAttention,
    config_repr,
    grounded_instruction,
    image_attn,
    object_align,
    predict_controller,
    similarity_score,
    soft_grounding,
    state_attn_update,
)
from spcnav.config import ModelConfig
from spcnav.parse import (
    DELIMITER,
    default_lexicon,
    landmark_head,
    parse_instruction,
    MOTION_VERBS,
)
from spcnav.tensorcore import (
    DimensionError,
    Embedding,
    LSTMCell,
    Linear,
    Module,
    Parameter,
    Tensor,
    concat,
    load_checkpoint,
    masked_softmax,
    matmul,
    restore_parameters,
    save_checkpoint,
    sigmoid,
    stack,
    uniform_init,
)
from spcnav.utils import SpcNavError
from spcnav.versioning import stamp, upgrade_document
from spcnav.world import HEADING_ENCODING_DIM, OBJECT_LABELS

import functools
import logging
import numpy as np

logger = logging.getLogger("spcnav")

PAD = "<pad>"
UNK = "<unk>"


class ActionError(SpcNavError):
    pass


class Vocabulary:
    def __init__(self, tokens):
        """A mapping between strings and embedding rows

        Unknown strings map to the row of :code:`<unk>`.
        """
        tokens = list(tokens)
        if UNK not in tokens:
            tokens = [UNK] + tokens
        self.tokens = tokens
        self._index = {t: i for i, t in enumerate(tokens)}

    @classmethod
    def build(cls, streams):
        """Collect the tokens of a number of token streams"""
        seen = sorted({t for stream in streams for t in stream} - {PAD, UNK, DELIMITER})
        return cls([PAD, UNK, DELIMITER] + seen)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def index(self, token):
        return self._index.get(token, self._index[UNK])

    def encode(self, tokens):
        return np.array([self.index(t) for t in tokens], dtype=np.int64)


def motion_vocabulary(lexicon=None):
    """The motion phrases with an embedding: lexicon phrases and bare verbs"""
    if lexicon is None:
        lexicon = default_lexicon()
    phrases = {" ".join(p) for p in lexicon.phrases} | set(MOTION_VERBS)
    return Vocabulary([UNK] + sorted(phrases))


def object_vocabulary():
    return Vocabulary([UNK] + list(OBJECT_LABELS))


@functools.lru_cache(maxsize=None)
def parse_cached(instruction):
    """Parse an instruction with the bundled lexicon, memoized by its text"""
    return parse_instruction(instruction)


class AgentState:
    def __init__(self, h, c, attention, t=0):
        """The recurrent state of the agent between two steps"""
        self.h = h
        self.c = c
        self.attention = attention
        self.t = t

    @property
    def alpha(self):
        return self.attention.alpha


class StepOutput:
    def __init__(self, logits, p, alpha, gamma, image_weights, object_image_weights, progress):
        """What the agent computed in one step

        :param logits:
            The scores of the navigable viewpoints followed by the stop score
        :param p:
            The action distribution as a tensor
        :param gamma:
            The controller output or :code:`None` for soft grounding
        :param progress:
            The predicted progress towards the goal in [0, 1]
        """
        self.logits = logits
        self.p = p
        self.alpha = alpha
        self.gamma = gamma
        self.image_weights = image_weights
        self.object_image_weights = object_image_weights
        self.progress = progress

    @property
    def probabilities(self):
        return self.p.data


def group_scores(z, kappa):
    """Sum image scores over the elevation groups of every navigable viewpoint"""
    incidence = np.zeros((len(kappa), z.shape[0]))
    for k, images in enumerate(kappa):
        incidence[k, images] = 1.0
    return matmul(Tensor(incidence), z)


def select_action(p, mode="greedy", rng=None, teacher_action=None):
    """Pick an action from a distribution over navigable viewpoints and stop

    :param p:
        The action probabilities
    :param mode:
        :code:`greedy` takes the most probable action (the lowest index on
        ties), :code:`sample` draws from p with the given random generator
        and :code:`teacher` returns the teacher action.
    :raises ActionError: if the teacher action is not navigable
    """
    p = np.asarray(p, dtype=np.float64)
    if mode == "greedy":
        return int(np.argmax(p))
    if mode == "sample":
        if rng is None:
            raise ActionError("Sampling actions requires a random generator")
        return int(rng.choice(len(p), p=p / p.sum()))
    if mode == "teacher":
        if teacher_action is None or not 0 <= teacher_action < len(p):
            raise ActionError(
                f"Teacher action {teacher_action} is not among the {len(p)} available actions"
            )
        return int(teacher_action)
    raise ActionError(f"Unknown action selection mode {mode}")


class SpcNavAgent(Module):
    def __init__(self, config, vocabulary, motions=None, objects=None):
        """The navigation agent

        :param config:
            The :class:`~spcnav.config.ModelConfig`
        :param vocabulary:
            The :class:`Vocabulary` of instruction tokens
        :param motions:
            The :class:`Vocabulary` of motion phrases, defaults to the bundled lexicon
        :param objects:
            The :class:`Vocabulary` of object labels, shared by landmarks
        """
        self.config = config
        self.vocabulary = vocabulary
        self.motions = motions if motions is not None else motion_vocabulary()
        self.objects = objects if objects is not None else object_vocabulary()

        rng = np.random.default_rng(config.init_seed)
        H = config.hidden_dim
        D = config.enriched_dim

        self.token_embedding = Embedding(len(vocabulary), config.token_dim, rng)
        self.encoder_forward = LSTMCell(config.token_dim, H, rng)
        self.encoder_backward = LSTMCell(config.token_dim, H, rng)
        self.config_W = Parameter(uniform_init(rng, (H, H), H))

        if config.use_motion:
            self.motion_embedding = Embedding(len(self.motions), config.role_dim, rng)
        self.object_embedding = Embedding(len(self.objects), config.object_dim, rng)

        self.fc_img = Linear(config.feature_dim + HEADING_ENCODING_DIM, config.image_dim, rng)
        self.img_W = Parameter(uniform_init(rng, (H, config.image_dim), H))

        controller_in = H + config.image_dim
        if config.use_similarity:
            controller_in += config.n_max
        self.controller = Linear(controller_in, 2, rng)
        if config.grounding == "soft":
            self.ground_W = Parameter(uniform_init(rng, (H, D), H))

        self.obj_W = Parameter(uniform_init(rng, (D, config.object_dim), D))
        self.objimg_W = Parameter(uniform_init(rng, (H, config.object_dim), H))

        self.decoder = LSTMCell(D + config.image_dim, H, rng)
        self.fc_pred = Linear(D + H, config.image_dim, rng)
        self.fc_stop = Linear(D + H, 1, rng)
        self.fc_progress = Linear(H, 1, rng)

    #
    # Encoding
    #

    def _contextual(self, stream):
        ids = self.vocabulary.encode(stream)
        emb = self.token_embedding(ids)

        forward = []
        state = self.encoder_forward.initial_state()
        for t in range(len(stream)):
            state = self.encoder_forward(emb[t], state)
            forward.append(state[0])

        backward = [None] * len(stream)
        state = self.encoder_backward.initial_state()
        for t in reversed(range(len(stream))):
            state = self.encoder_backward(emb[t], state)
            backward[t] = state[0]

        return [f + b for f, b in zip(forward, backward)]

    def _object_rows(self, words):
        return self.object_embedding([self.objects.index(w) for w in words])

    def encode(self, parsed):
        """Encode a parsed instruction into the configuration bank

        :param parsed:
            A :class:`~spcnav.parse.ParsedInstruction`
        """
        stream = list(parsed.token_stream)
        context = self._contextual(stream)
        tokens = parsed.tokens

        reprs = []
        summaries = []
        landmark_embs = []
        delimiters = []
        for i, c in enumerate(parsed.configurations):
            span = parsed.stream_span(i)
            summary, _ = config_repr(stack(context[span.start : span.end]), self.config_W)
            summaries.append(summary)
            delimiters.append(span.end - 1)

            heads = [tokens[landmark_head(l, tokens)].lemma.lower() for l in c.landmarks]
            landmark_embs.append(self._object_rows(heads) if heads else None)

            parts = [summary]
            if self.config.use_motion:
                if c.motion_indicator is None:
                    parts.append(Tensor(np.zeros(self.config.role_dim)))
                else:
                    phrase = " ".join(
                        tokens[j].lemma.lower() for j in c.motion_indicator.indices()
                    )
                    parts.append(self.motion_embedding(self.motions.index(phrase)))
            if self.config.use_landmark:
                if c.main_landmark is None:
                    parts.append(Tensor(np.zeros(self.config.landmark_dim)))
                else:
                    parts.append(landmark_embs[-1][c.main_landmark])
            reprs.append(concat(parts))

        return ConfigBank(
            reprs=stack(reprs),
            landmark_embs=landmark_embs,
            delimiters=delimiters,
            summaries=stack(summaries),
        )

    #
    # Decoding
    #

    def init_state(self, bank):
        h, c = self.decoder.initial_state()
        return AgentState(h, c, StateAttention.initial(bank.m), t=0)

    def step(self, state, bank, obs):
        """Advance the agent by one step

        :param state:
            The :class:`AgentState` of the previous step
        :param obs:
            The :class:`~spcnav.world.PanoramaObservation` at the current viewpoint
        :returns:
            A tuple of the new :class:`AgentState` and a :class:`StepOutput`
        """
        if obs.n_images == 0 or not obs.neighbors:
            raise ActionError(f"Observation at viewpoint {obs.viewpoint} has no navigable image")
        expected = self.config.feature_dim + HEADING_ENCODING_DIM
        if obs.images.shape[1] != expected:
            raise DimensionError("Observation image features", obs.images.shape, (obs.n_images, expected))

        h_prev = state.h
        projected = self.fc_img(Tensor(obs.images))
        image_summary, image_weights = image_attn(h_prev, projected, self.img_W)

        ids = np.vectorize(self.objects.index, otypes=[np.int64])(obs.object_labels)
        objects = self.object_embedding(ids)

        gamma = None
        if self.config.grounding == "state":
            similarity = None
            if self.config.use_similarity:
                similarity = similarity_score(
                    bank.landmark_embs, objects, obs.object_mask, state.alpha, self.config.n_max
                )
            controller = predict_controller(h_prev, image_summary, similarity, self.controller)
            gamma = controller.gamma
            alpha = state_attn_update(state.alpha, gamma)
        else:
            alpha = soft_grounding(h_prev, bank, self.ground_W)

        c_hat = grounded_instruction(alpha, bank)
        attended, object_image_weights, _ = object_align(
            c_hat, objects, obs.object_mask, h_prev, projected, self.obj_W, self.objimg_W
        )

        h, c = self.decoder(concat([c_hat, attended]), (state.h, state.c))
        joint = concat([c_hat, h])
        z = matmul(projected, self.fc_pred(joint))
        zeta = group_scores(z, obs.kappa)
        logits = concat([zeta, self.fc_stop(joint)])
        p = masked_softmax(logits)
        progress = sigmoid(self.fc_progress(h))[0]

        new_state = AgentState(h, c, StateAttention(alpha, state.t + 1), t=state.t + 1)
        return new_state, StepOutput(
            logits=logits,
            p=p,
            alpha=alpha,
            gamma=gamma,
            image_weights=image_weights,
            object_image_weights=object_image_weights,
            progress=progress,
        )

    #
    # Persistence
    #

    def header(self, **extra):
        return stamp(
            dict(
                extra,
                model=self.config._serialize(),
                vocabulary=self.vocabulary.tokens,
                motions=self.motions.tokens,
                objects=self.objects.tokens,
            )
        )

    def save(self, filename, **extra):
        """Write a checkpoint with the parameters, their ADAM state and extra header fields"""
        return save_checkpoint(filename, self.named_parameters(), self.header(**extra))


def load_agent(filename):
    """Restore an agent from a checkpoint

    :returns: A tuple of the agent and the checkpoint header
    """
    header, state = load_checkpoint(filename)
    header = upgrade_document(header, "checkpoint")
    agent = SpcNavAgent(
        ModelConfig(**header["model"]),
        Vocabulary(header["vocabulary"]),
        motions=Vocabulary(header["motions"]),
        objects=Vocabulary(header["objects"]),
    )
    restore_parameters(agent.named_parameters(), state)
    return agent, header
