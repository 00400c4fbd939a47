"""Attention mechanisms that ground spatial configurations in observations

The agent keeps a distribution over the configurations of an instruction
(the state attention). Each step, a controller decides how much of the
attention mass stays on its configuration and how much advances to the
next one. The grounded configuration representation then drives two levels
of object-to-image attention.
"""

from spcnav.tensorcore import (
    Tensor,
    TensorError,
    amax,
    as_tensor,
    concat,
    dot,
    masked_fill,
    masked_softmax,
    matmul,
    reshape,
    sqrt,
    stack,
    sum_,
)
from spcnav.utils import SpcNavError

import numpy as np


class AttentionError(SpcNavError):
    pass


# Tolerance for the distribution checks of attention weights
DISTRIBUTION_TOLERANCE = 1e-9


def _check_distribution(values, what):
    values = np.asarray(values)
    if np.any(values < -DISTRIBUTION_TOLERANCE):
        raise AttentionError(f"{what} has negative entries: {values}")
    if abs(np.sum(values) - 1.0) > DISTRIBUTION_TOLERANCE:
        raise AttentionError(f"{what} does not sum to one: {values}")


class StateAttention:
    def __init__(self, alpha, step=0):
        """The distribution over configurations at a given step

        :param alpha:
            A length-m tensor of non-negative weights that sum to one
        :param step:
            The step index t this distribution belongs to
        """
        self.alpha = as_tensor(alpha)
        self.step = step
        if self.alpha.ndim != 1 or self.alpha.shape[0] == 0:
            raise AttentionError("State attention needs at least one configuration")
        _check_distribution(self.alpha.data, "State attention")

    @classmethod
    def initial(cls, m):
        """Attention focused on the first configuration"""
        if m < 1:
            raise AttentionError("State attention needs at least one configuration")
        alpha = np.zeros(m)
        alpha[0] = 1.0
        return cls(Tensor(alpha))

    @property
    def m(self):
        return self.alpha.shape[0]

    def update(self, controller):
        return StateAttention(state_attn_update(self.alpha, controller.gamma), self.step + 1)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.alpha.data, dtype=dtype)


class Controller:
    def __init__(self, gamma):
        """The stay/advance decision of a step as a 2-way distribution"""
        self.gamma = as_tensor(gamma)
        if self.gamma.shape != (2,):
            raise AttentionError(f"Controller output must have 2 entries, got {self.gamma.shape}")
        _check_distribution(self.gamma.data, "Controller output")

    @property
    def stay(self):
        return float(self.gamma.data[0])

    @property
    def advance(self):
        return float(self.gamma.data[1])


class ConfigBank:
    def __init__(self, reprs, landmark_embs, delimiters, summaries=None):
        """The encoded configurations of an instruction

        :param reprs:
            The (m, D) tensor of enriched configuration representations
        :param landmark_embs:
            A list of m tensors of shape (L_i, d) with the landmark embeddings
            of each configuration, :code:`None` for configurations without landmark
        :param delimiters:
            The position of the pseudo delimiter of every configuration in
            the token stream
        :param summaries:
            The (m, H) tensor of delimiter-queried configuration summaries
        """
        self.reprs = reprs
        self.landmark_embs = list(landmark_embs)
        self.delimiters = list(delimiters)
        self.summaries = summaries

        if reprs.ndim != 2 or reprs.shape[0] == 0:
            raise AttentionError("A configuration bank needs at least one configuration")
        if len(self.landmark_embs) != self.m or len(self.delimiters) != self.m:
            raise AttentionError("Configuration bank fields disagree on the number of configurations")

    @property
    def m(self):
        return self.reprs.shape[0]

    @property
    def dim(self):
        return self.reprs.shape[1]


def soft_attn(query, keys, values, W, mask=None):
    """Bilinear soft attention scaled by the square root of the key dimension

    :param query:
        The query vector of dimension d_q
    :param keys:
        The (n, d_k) matrix of keys
    :param values:
        The (n, d_v) matrix of values
    :param W:
        The (d_q, d_k) bilinear map
    :param mask:
        Optional boolean array of length n, True marks entries to ignore
    :returns:
        A tuple of the attended vector and the attention weights
    """
    keys, values = as_tensor(keys), as_tensor(values)
    if keys.ndim != 2 or keys.shape[0] == 0:
        raise AttentionError("Soft attention needs at least one key")
    if values.shape[0] != keys.shape[0]:
        raise AttentionError(
            f"Soft attention needs as many values as keys ({values.shape[0]} vs. {keys.shape[0]})"
        )

    dk = keys.shape[1]
    scores = matmul(keys, matmul(query, W)) / np.sqrt(dk)
    try:
        weights = masked_softmax(scores, mask)
    except TensorError as e:
        raise AttentionError(str(e))
    return matmul(weights, values), weights


def config_repr(tokens, W):
    """Summarize the contextual embeddings of a configuration

    The last row of tokens is the pseudo delimiter, which serves as query.
    """
    tokens = as_tensor(tokens)
    if tokens.ndim != 2 or tokens.shape[0] == 0:
        raise AttentionError("Cannot summarize an empty configuration")
    return soft_attn(tokens[-1], tokens, tokens, W)


def image_attn(h_prev, projected, W, mask=None):
    """Attend over the projected images of a viewpoint with the decoder state as query"""
    if mask is not None and np.all(mask):
        raise AttentionError("All images of the observation are masked")
    return soft_attn(h_prev, projected, projected, W, mask)


def shift_matrix(m):
    """The matrix that moves attention mass one configuration ahead

    Mass on the last configuration stays there.
    """
    if m < 1:
        raise AttentionError("State attention needs at least one configuration")
    S = np.eye(m, k=-1)
    S[m - 1, m - 1] += 1.0
    return S


def state_attn_update(alpha, gamma):
    """Convolve the state attention with the controller output

    :param alpha:
        The previous length-m distribution over configurations
    :param gamma:
        The (stay, advance) distribution of the controller
    :returns:
        The new length-m distribution as a tensor
    """
    alpha, gamma = as_tensor(alpha), as_tensor(gamma)
    if alpha.ndim != 1 or alpha.shape[0] == 0:
        raise AttentionError("State attention needs at least one configuration")
    S = Tensor(shift_matrix(alpha.shape[0]))
    return alpha * gamma[0] + matmul(S, alpha) * gamma[1]


def similarity_score(landmark_embs, objects, object_mask, alpha, n_max, eps=1e-12):
    """Score every image by how well its objects match the attended landmarks

    The score of image j is the alpha-weighted sum over configurations of the
    best cosine similarity between any landmark of the configuration and any
    object of the image. Configurations without landmarks and images without
    objects contribute zero.

    :param landmark_embs:
        A list of m tensors (L_i, d) or :code:`None`
    :param objects:
        The (n, K, d) tensor of object embeddings
    :param object_mask:
        A boolean (n, K) array, True marks padding objects
    :param alpha:
        The length-m state attention of the previous step
    :param n_max:
        The length of the returned zero-padded score vector
    """
    objects = as_tensor(objects)
    alpha = as_tensor(alpha)
    n, K, d = objects.shape
    if n > n_max:
        raise AttentionError(f"Observation has {n} images, but at most {n_max} are supported")
    object_mask = np.asarray(object_mask, dtype=bool)

    flat = reshape(objects, (n * K, d))
    object_norms = sum_(flat * flat, axis=1)
    empty_images = np.all(object_mask, axis=1)

    score = None
    for i, landmarks in enumerate(landmark_embs):
        if landmarks is None or landmarks.shape[0] == 0:
            continue

        per_landmark = []
        for l in range(landmarks.shape[0]):
            landmark = landmarks[l]
            cos = matmul(flat, landmark) / sqrt(object_norms * dot(landmark, landmark) + eps)
            per_landmark.append(cos)
        best = amax(stack(per_landmark), axis=0)

        best = masked_fill(reshape(best, (n, K)), object_mask, -2.0)
        best = masked_fill(amax(best, axis=1), empty_images, 0.0)
        term = best * alpha[i]
        score = term if score is None else score + term

    if score is None:
        return Tensor(np.zeros(n_max))
    if n < n_max:
        score = concat([score, Tensor(np.zeros(n_max - n))])
    return score


def predict_controller(h_prev, image_summary, similarity, fc):
    """Predict the stay/advance distribution from the decoder state and the observation

    :param similarity:
        The padded similarity scores or :code:`None` if similarity scoring
        is disabled.
    :param fc:
        The linear layer with two outputs
    """
    parts = [h_prev, image_summary]
    if similarity is not None:
        parts.append(similarity)
    return Controller(masked_softmax(fc(concat(parts))))


def soft_grounding(h_prev, bank, W):
    """Plain soft attention over configurations queried by the decoder state"""
    _, weights = soft_attn(h_prev, bank.reprs, bank.reprs, W)
    return weights


def grounded_instruction(alpha, bank):
    """The convex combination of enriched configurations under the state attention"""
    alpha = as_tensor(alpha)
    if alpha.shape != (bank.m,):
        raise AttentionError(
            f"State attention has {alpha.shape[0]} entries for {bank.m} configurations"
        )
    return matmul(alpha, bank.reprs)


def object_align(c_hat, objects, object_mask, h_prev, projected, W_obj, W_objimg, image_mask=None):
    """Align the grounded instruction with objects, then objects with images

    The first level summarizes the objects of every image with the grounded
    instruction as query. The second level attends over these summaries
    with the decoder state to weight the projected images.

    :returns:
        A tuple of the attended image vector, the second-level weights and
        the list of first-level weights (:code:`None` for images without objects).
    """
    objects = as_tensor(objects)
    n, K, d = objects.shape
    object_mask = np.asarray(object_mask, dtype=bool)

    summaries = []
    object_weights = []
    for j in range(n):
        if np.all(object_mask[j]):
            summaries.append(Tensor(np.zeros(d)))
            object_weights.append(None)
            continue
        summary, weights = soft_attn(c_hat, objects[j], objects[j], W_obj, object_mask[j])
        summaries.append(summary)
        object_weights.append(weights)

    attended, weights = soft_attn(h_prev, stack(summaries), projected, W_objimg, image_mask)
    return attended, weights, object_weights
