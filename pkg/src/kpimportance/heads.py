"""Chunking, saliency-ranking and concept-matching heads with their losses.

Loss functions return ``(value, backward)``. Calling ``backward(scale)``
accumulates parameter gradients scaled by ``scale`` and returns the gradient
with respect to the head's inputs.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .nn import (
    Parameter,
    cross_entropy,
    cross_entropy_grad_logits,
    dense,
    dense_backward,
    gaussian_kl_grad,
    hinge_pair_grad,
    hinge_pair_loss,
    relu,
    relu_backward,
    reparameterize,
    softmax,
    triplet_grad,
    triplet_loss,
)

log = logging.getLogger(__name__)


class ChunkHead:
    def __init__(self, d, rng):
        self.W1 = Parameter("chunk.W1", rng.normal(0.0, np.sqrt(1.0 / d), (2, d)))
        self.b1 = Parameter("chunk.b1", np.zeros(2))

    def parameters(self):
        return [self.W1, self.b1]


class RankHead:
    def __init__(self, d, rng):
        self.W2 = Parameter("rank.W2", rng.normal(0.0, np.sqrt(1.0 / d), (1, d)))
        self.b2 = Parameter("rank.b2", np.zeros(1))

    def parameters(self):
        return [self.W2, self.b2]


class MLP2:
    """Two dense layers with a hidden nonlinearity and a linear output."""

    def __init__(self, name, d_in, d_hidden, d_out, activation, rng):
        gain = 2.0 if activation == "relu" else 1.0
        self.activation = activation
        self.Wa = Parameter(f"{name}.Wa", rng.normal(0.0, np.sqrt(gain / d_in), (d_hidden, d_in)))
        self.ba = Parameter(f"{name}.ba", np.zeros(d_hidden))
        self.Wb = Parameter(f"{name}.Wb", rng.normal(0.0, np.sqrt(1.0 / d_hidden), (d_out, d_hidden)))
        self.bb = Parameter(f"{name}.bb", np.zeros(d_out))

    def parameters(self):
        return [self.Wa, self.ba, self.Wb, self.bb]

    def forward(self, x):
        pre = dense(x, self.Wa.value, self.ba.value)
        hid = relu(pre) if self.activation == "relu" else np.tanh(pre)
        out = dense(hid, self.Wb.value, self.bb.value)

        def backward(gout):
            ghid, gW, gb = dense_backward(hid, self.Wb.value, gout)
            self.Wb.grad += gW
            self.bb.grad += gb
            if self.activation == "relu":
                gpre = relu_backward(pre, ghid)
            else:
                gpre = ghid * (1.0 - hid * hid)
            gx, gW, gb = dense_backward(x, self.Wa.value, gpre)
            self.Wa.grad += gW
            self.ba.grad += gb
            return gx

        return out, backward


class GaussianEncoder:
    """Mean and log-scale networks; sigma = exp(log-scale) is always positive."""

    def __init__(self, name, d, hidden, c, rng):
        self.mu_net = MLP2(f"{name}.mu", d, hidden, c, "relu", rng)
        self.sigma_net = MLP2(f"{name}.sigma", d, hidden, c, "relu", rng)

    def parameters(self):
        return self.mu_net.parameters() + self.sigma_net.parameters()


class ConceptVAE:
    def __init__(self, d, c, hidden, rng):
        self.c = c
        self.doc_encoder = GaussianEncoder("vae.doc_enc", d, hidden, c, rng)
        self.phrase_encoder = GaussianEncoder("vae.phrase_enc", d, hidden, c, rng)
        self.doc_decoder = MLP2("vae.doc_dec", c, hidden, d, "tanh", rng)
        self.phrase_decoder = MLP2("vae.phrase_dec", c, hidden, d, "tanh", rng)
        self.W3 = Parameter("vae.W3", rng.normal(0.0, np.sqrt(1.0 / c), (c, c)))

    def parameters(self):
        return (
            self.doc_encoder.parameters()
            + self.phrase_encoder.parameters()
            + self.doc_decoder.parameters()
            + self.phrase_decoder.parameters()
            + [self.W3]
        )

    def encoder(self, which):
        if which == "doc":
            return self.doc_encoder
        if which == "phrase":
            return self.phrase_encoder
        raise ValueError(f"unknown input kind {which!r}")

    def decoder(self, which):
        return self.doc_decoder if which == "doc" else self.phrase_decoder


@dataclass
class ConceptLatent:
    mu: np.ndarray
    sigma: np.ndarray
    z: np.ndarray


@dataclass
class PairSet:
    positives: list
    negatives: list
    pairs: list = field(default_factory=list)

    def as_array(self):
        return np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)


# ------------------------------------------------------------------ chunking

def chunk_score(repr_, head):
    """[P(not keyphrase), P(keyphrase)] for one representation (or row-wise)."""
    return softmax(dense(repr_, head.W1.value, head.b1.value))


def chunk_loss(reprs, labels, head):
    """Mean binary cross-entropy over all candidates of a document."""
    reprs = np.atleast_2d(reprs)
    labels = np.asarray(labels, dtype=np.int64)
    K = len(reprs)
    if K == 0:
        raise ValueError("chunk_loss needs at least one candidate")
    probs = chunk_score(reprs, head)
    value = float(np.mean(cross_entropy(probs, labels)))

    def backward(scale=1.0):
        glogits = cross_entropy_grad_logits(probs, labels) * (scale / K)
        gx, gW, gb = dense_backward(reprs, head.W1.value, glogits)
        head.W1.grad += gW
        head.b1.grad += gb
        return gx

    return value, backward


# ------------------------------------------------------------------- ranking

def saliency_score(repr_, head):
    """Unbounded scalar ``W2 . repr + b2``; a vector of scores for a matrix."""
    out = dense(repr_, head.W2.value, head.b2.value)
    return out[..., 0] if np.ndim(out) > 1 else float(out[0])


def saliency_backward(reprs, head, gscores):
    """Accumulate rank-head grads; return d/d reprs."""
    gout = np.asarray(gscores, dtype=np.float64).reshape(-1, 1)
    gx, gW, gb = dense_backward(np.atleast_2d(reprs), head.W2.value, gout)
    head.W2.grad += gW
    head.b2.grad += gb
    return gx


def _pairwise(pairs, scores, margin, loss_fn, grad_fn, what):
    pairs = pairs.as_array() if isinstance(pairs, PairSet) else np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    scores = np.asarray(scores, dtype=np.float64)
    gscores = np.zeros_like(scores)
    if len(pairs) == 0:
        log.debug("%s: no positive/negative pairs, contributing 0", what)
        return 0.0, gscores
    s_pos = scores[pairs[:, 0]]
    s_neg = scores[pairs[:, 1]]
    value = float(np.mean(loss_fn(s_pos, s_neg, margin)))
    g_pos, g_neg = grad_fn(s_pos, s_neg, margin)
    np.add.at(gscores, pairs[:, 0], g_pos / len(pairs))
    np.add.at(gscores, pairs[:, 1], g_neg / len(pairs))
    return value, gscores


def rank_loss(pairs, scores, delta1):
    """Mean pairwise hinge over sampled (pos, neg) pairs.

    Returns (value, d value / d scores).
    """
    return _pairwise(pairs, scores, delta1, hinge_pair_loss, hinge_pair_grad, "rank_loss")


# ------------------------------------------------------------------ matching

def concept_encode(x, which, vae, eps):
    """Gaussian latent for a document vector or a batch of phrase vectors.

    Returns (ConceptLatent, backward) with backward(gmu, gsigma, gz) -> dx.
    """
    enc = vae.encoder(which)
    mu, back_mu = enc.mu_net.forward(x)
    log_sigma, back_sigma = enc.sigma_net.forward(x)
    sigma = np.exp(log_sigma)
    eps = np.asarray(eps, dtype=np.float64)
    z = reparameterize(mu, sigma, eps)

    def backward(gmu, gsigma, gz):
        gmu_total = gmu + gz
        gsigma_total = gsigma + gz * eps
        return back_mu(gmu_total) + back_sigma(gsigma_total * sigma)

    return ConceptLatent(mu=mu, sigma=sigma, z=z), backward


def concept_match(z_phrase, z_doc, W3):
    """Bilinear agreement ``z_phrase^T W3 z_doc`` (vector for a batch of phrases)."""
    W3 = getattr(W3, "value", W3)
    return np.asarray(z_phrase) @ (W3 @ np.asarray(z_doc))


def concept_match_backward(z_phrase, z_doc, W3, gI3):
    """Return (d z_phrase, d z_doc, d W3) for a batch of phrases."""
    z_phrase = np.atleast_2d(z_phrase)
    gI3 = np.atleast_1d(gI3)
    gzp = np.outer(gI3, W3 @ z_doc)
    gzd = W3.T @ (z_phrase.T @ gI3)
    gW3 = np.outer(z_phrase.T @ gI3, z_doc)
    return gzp, gzd, gW3


def match_triplet_loss(pairs, scores, delta2):
    """Mean triplet loss over the pairs; returns (value, d value / d scores)."""
    return _pairwise(pairs, scores, delta2, triplet_loss, triplet_grad, "match_triplet_loss")


def vae_module_loss(x, latent, decoder):
    """Reconstruction MSE plus KL to the standard normal prior.

    For a batch (rows of ``x``), the per-row losses are averaged. Returns
    (value, backward) with backward(scale) -> (dx, dmu, dsigma, dz); the
    decoder's parameter grads are accumulated in place.
    """
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    rows = x.shape[0] if batched else 1
    recon, back_dec = decoder.forward(latent.z)
    diff = x - recon
    width = x.shape[-1]
    sq = np.sum(diff * diff, axis=-1) / width
    var = latent.sigma * latent.sigma
    kl = 0.5 * np.sum(var + latent.mu * latent.mu - 1.0 - np.log(var), axis=-1)
    value = float(np.mean(sq + kl))

    def backward(scale=1.0):
        k = scale / rows
        gdiff = 2.0 * diff / width * k
        gz = back_dec(-gdiff)
        gmu, gsigma = gaussian_kl_grad(latent.mu, latent.sigma)
        return gdiff, gmu * k, gsigma * k, gz

    return value, backward


def matching_total(L_m, L_d, L_k, lam):
    if not 0.0 < lam < 1.0:
        raise ConfigError(f"lambda must lie in (0, 1), got {lam}")
    return L_m + lam * L_d + (1.0 - lam) * L_k


def check_task_weights(weights, strict=True):
    e1, e2, e3 = weights
    if any(e < 0 for e in weights):
        raise ConfigError("task weights must be non-negative")
    if strict:
        if any(e <= 0 for e in weights):
            raise ConfigError("task weights must be positive (use ablation mode to zero one)")
        if not math.isclose(e1 + e2 + e3, 1.0, rel_tol=0.0, abs_tol=1e-9):
            raise ConfigError(f"task weights must sum to 1, got {e1 + e2 + e3}")


def joint_loss(L_c, L_r, L_t, e1, e2, e3, strict=True):
    """``e1*L_c + e2*L_r + e3*L_t``; ``strict=False`` relaxes weight validation."""
    check_task_weights((e1, e2, e3), strict)
    return e1 * L_c + e2 * L_r + e3 * L_t
