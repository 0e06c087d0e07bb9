"""N-gram candidate enumeration and composition."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .nn import Parameter, conv_all, conv_all_backward, conv_window
from .porter import stem_phrase


def enumerate_spans(M, N):
    """All (start, length) spans, length ascending then start ascending."""
    return [(i, n) for n in range(1, min(N, M) + 1) for i in range(M - n + 1)]


def candidate_count(M, N):
    return sum(M - n + 1 for n in range(1, min(N, M) + 1))


@dataclass
class CandidatePhrase:
    start: int
    length: int
    repr: np.ndarray
    surface: str
    stemmed: str

    @property
    def span(self):
        return (self.start, self.length)


class NGramComposer:
    """One convolution filter set per phrase length n, mapping n*d -> d."""

    def __init__(self, d, max_n, rng):
        self.d = d
        self.max_n = max_n
        self.W = []
        self.b = []
        for n in range(1, max_n + 1):
            scale = np.sqrt(2.0 / (n * d))
            self.W.append(Parameter(f"composer.{n}.W", rng.normal(0.0, scale, (d, n * d))))
            self.b.append(Parameter(f"composer.{n}.b", np.zeros(d)))

    def parameters(self):
        return [p for pair in zip(self.W, self.b) for p in pair]

    def window(self, H, n, i):
        return conv_window(H, self.W[n - 1].value, self.b[n - 1].value, n, i)

    def compose(self, H):
        """Representations of every span in ``enumerate_spans`` order.

        Returns (K x d matrix, backward) where backward(gR) accumulates the
        filter gradients and returns dH.
        """
        M, d = H.shape
        if d != self.d:
            raise DimensionError(f"composer width {self.d} does not match H width {d}")
        blocks = []
        caches = []
        for n in range(1, min(self.max_n, M) + 1):
            out, cache = conv_all(H, self.W[n - 1].value, self.b[n - 1].value, n)
            blocks.append(out)
            caches.append(cache)
        R = np.vstack(blocks)

        def backward(gR):
            gH = np.zeros_like(H)
            offset = 0
            for n, cache in enumerate(caches, start=1):
                rows = M - n + 1
                g_n, gW, gb = conv_all_backward(self.W[n - 1].value, cache, gR[offset:offset + rows])
                self.W[n - 1].grad += gW
                self.b[n - 1].grad += gb
                gH += g_n
                offset += rows
            return gH

        return R, backward

    def represent(self, H):
        """Forward-only variant of :meth:`compose`."""
        M = H.shape[0]
        return np.vstack([
            conv_all(H, self.W[n - 1].value, self.b[n - 1].value, n)[0]
            for n in range(1, min(self.max_n, M) + 1)
        ])


def compose_ngrams(H, composer, tokens):
    """CandidatePhrase objects for every span of a tokenized document."""
    if len(tokens) != H.shape[0]:
        raise DimensionError(f"{len(tokens)} tokens but H has {H.shape[0]} rows")
    R = composer.represent(H)
    out = []
    for row, (i, n) in zip(R, enumerate_spans(len(tokens), composer.max_n)):
        window = tokens[i:i + n]
        out.append(CandidatePhrase(
            start=i, length=n, repr=row, surface=" ".join(window), stemmed=stem_phrase(window),
        ))
    return out
