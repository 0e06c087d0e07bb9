"""Contextual word representations and the document vector.

A trainable embedding lookup followed by one residual window-3 convolution
stands in for a large pretrained encoder. Users who have real contextual
embeddings can feed them through :func:`load_precomputed` instead.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, LoadError
from .nn import Parameter, check_finite, conv_all, conv_all_backward, dense, dense_backward


@dataclass
class EncodedDocument:
    H: np.ndarray
    doc_vec: np.ndarray


def embed(ids, table):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"token id out of range for vocabulary of size {table.shape[0]}")
    return table[ids]


def contextualize(E, W, b):
    """``E + ReLU(conv3(E))`` with zero padding at both ends.

    Returns (H, cache). Row i of H only depends on rows i-1..i+1 of E.
    """
    M, d = E.shape
    if M < 1:
        raise DimensionError("contextualize needs at least one row")
    padded = np.vstack([np.zeros((1, d)), E, np.zeros((1, d))])
    C, cache = conv_all(padded, W, b, 3)
    return E + C, cache


def contextualize_backward(W, cache, gH):
    """Return (dE, dW, db)."""
    gpad, gW, gb = conv_all_backward(W, cache, gH)
    return gH + gpad[1:-1], gW, gb


def doc_repr(H, W, b, activation=True):
    """Mean-pool the rows of H, then a dense map (tanh unless disabled)."""
    pooled = H.mean(axis=0)
    pre = dense(pooled, W, b)
    out = np.tanh(pre) if activation else pre
    return out, (pooled, out, activation, H.shape[0])


def doc_repr_backward(W, cache, gout):
    """Return (dH, dW, db)."""
    pooled, out, activation, M = cache
    gpre = gout * (1.0 - out * out) if activation else gout
    gpooled, gW, gb = dense_backward(pooled, W, gpre)
    gH = np.broadcast_to(gpooled / M, (M, gpooled.shape[0])).copy()
    return gH, gW, gb


class PrecomputedEmbeddings:
    """Map of document id to a fixed M x d representation matrix."""

    def __init__(self, table, d):
        self.table = table
        self.d = d

    def __contains__(self, doc_id):
        return doc_id in self.table

    def __len__(self):
        return len(self.table)

    def __getitem__(self, doc_id):
        try:
            return self.table[doc_id]
        except KeyError:
            raise LoadError(f"no precomputed embeddings for document {doc_id!r}") from None


def load_precomputed(path, d=None):
    """Read ``{"id": ..., "embeddings": [[...], ...]}`` JSONL records."""
    table = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc_id = str(obj["id"])
                mat = np.array(obj["embeddings"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise LoadError(f"{path} line {lineno}: {exc}") from None
            if mat.ndim != 2 or mat.shape[0] == 0:
                raise LoadError(f"{path} line {lineno}: embeddings must be a non-empty M x d matrix")
            if d is None:
                d = mat.shape[1]
            if mat.shape[1] != d:
                raise LoadError(
                    f"{path} line {lineno}: width {mat.shape[1]} does not match model width {d}"
                )
            table[doc_id] = check_finite(mat, f"embeddings of {doc_id}")
    return PrecomputedEmbeddings(table, d)


class Encoder:
    def __init__(self, vocab_size, d, rng):
        self.d = d
        self.embedding = Parameter("encoder.embedding", rng.normal(0.0, 1.0, (vocab_size, d)))
        self.context_W = Parameter(
            "encoder.context.W", rng.normal(0.0, np.sqrt(1.0 / (3 * d)), (d, 3 * d))
        )
        self.context_b = Parameter("encoder.context.b", np.zeros(d))
        self.doc_W = Parameter("encoder.doc.W", rng.normal(0.0, np.sqrt(1.0 / d), (d, d)))
        self.doc_b = Parameter("encoder.doc.b", np.zeros(d))

    def parameters(self):
        return [self.embedding, self.context_W, self.context_b, self.doc_W, self.doc_b]

    def encode(self, ids, precomputed=None):
        """Return (EncodedDocument, backward) where backward(gH, gdoc) accumulates grads.

        With ``precomputed`` given, the lookup and convolution are skipped and
        no gradient reaches the embedding table or context filter.
        """
        if precomputed is not None:
            H = np.asarray(precomputed, dtype=np.float64)
            if H.ndim != 2 or H.shape[1] != self.d:
                raise DimensionError(f"precomputed H{H.shape} does not have width {self.d}")
            ctx_cache = None
        else:
            ids = np.asarray(ids, dtype=np.int64)
            E = embed(ids, self.embedding.value)
            H, ctx_cache = contextualize(E, self.context_W.value, self.context_b.value)
        doc_vec, doc_cache = doc_repr(H, self.doc_W.value, self.doc_b.value)

        def backward(gH, gdoc):
            gH_doc, gW, gb = doc_repr_backward(self.doc_W.value, doc_cache, gdoc)
            self.doc_W.grad += gW
            self.doc_b.grad += gb
            if ctx_cache is None:
                return
            gE, gW, gb = contextualize_backward(self.context_W.value, ctx_cache, gH + gH_doc)
            self.context_W.grad += gW
            self.context_b.grad += gb
            np.add.at(self.embedding.grad, ids, gE)

        return EncodedDocument(H=H, doc_vec=doc_vec), backward

    def contextual(self, ids):
        """H only, for inference."""
        E = embed(ids, self.embedding.value)
        H, _ = contextualize(E, self.context_W.value, self.context_b.value)
        return H
