"""The full model: encoder, n-gram composer and the three heads."""

from dataclasses import dataclass

import numpy as np

from .candidates import NGramComposer, enumerate_spans
from .encoder import Encoder
from .errors import LoadError, NonFiniteError
from .heads import (
    ChunkHead,
    ConceptVAE,
    RankHead,
    check_task_weights,
    chunk_loss,
    concept_encode,
    concept_match,
    concept_match_backward,
    match_triplet_loss,
    rank_loss,
    saliency_backward,
    saliency_score,
    vae_module_loss,
)
from .nn import load_checkpoint, save_checkpoint
from .text import Vocabulary


@dataclass
class LossBreakdown:
    chunk: float
    rank: float
    match: float
    vae_doc: float
    vae_phrase: float
    matching: float
    total: float

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class ModelDims:
    vocab_size: int
    d: int = 64
    c: int = 16
    max_n: int = 5
    vae_hidden: int = 0  # 0 means "same as d"

    @property
    def hidden(self):
        return self.vae_hidden or self.d


class KeyphraseModel:
    def __init__(self, dims: ModelDims, vocab: Vocabulary, seed=0):
        rng = np.random.default_rng(seed)
        self.dims = dims
        self.vocab = vocab
        self.encoder = Encoder(dims.vocab_size, dims.d, rng)
        self.composer = NGramComposer(dims.d, dims.max_n, rng)
        self.chunk_head = ChunkHead(dims.d, rng)
        self.rank_head = RankHead(dims.d, rng)
        self.vae = ConceptVAE(dims.d, dims.c, dims.hidden, rng)

    @property
    def max_n(self):
        return self.dims.max_n

    def parameters(self):
        return (
            self.encoder.parameters()
            + self.composer.parameters()
            + self.chunk_head.parameters()
            + self.rank_head.parameters()
            + self.vae.parameters()
        )

    def named_parameters(self):
        return {p.name: p for p in self.parameters()}

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def token_ids(self, tokens):
        return np.asarray(self.vocab.lookup(tokens), dtype=np.int64)

    # ------------------------------------------------------------ inference

    def contextual(self, tokens, precomputed=None):
        if precomputed is not None:
            H = np.asarray(precomputed, dtype=np.float64)
            if H.shape[0] != len(tokens):
                raise LoadError(f"precomputed rows ({H.shape[0]}) != token count ({len(tokens)})")
            return H
        return self.encoder.contextual(self.token_ids(tokens))

    def saliency(self, tokens, precomputed=None):
        """I2 score of every span of ``tokens`` in ``enumerate_spans`` order.

        Only the encoder, composer and ranking head are touched.
        """
        H = self.contextual(tokens, precomputed)
        return saliency_score(self.composer.represent(H), self.rank_head)

    # ------------------------------------------------------------- training

    def document_loss(self, tokens, labels, pairs, eps_doc, eps_phrase, weights,
                      delta1=1.0, delta2=1.0, lam=0.5, precomputed=None, strict=True):
        """Joint loss of one document and a closure that backpropagates it.

        ``labels`` is a 0/1 vector over candidates in ``enumerate_spans``
        order; ``pairs`` is an (P, 2) array of candidate indices.
        ``eps_phrase`` holds one noise row per distinct candidate in
        ``pairs`` (sorted index order). Returns (LossBreakdown, backward)
        where backward(scale) accumulates parameter gradients.
        """
        check_task_weights(weights, strict)
        e1, e2, e3 = weights
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)

        ids = None if precomputed is not None else self.token_ids(tokens)
        if precomputed is not None and len(precomputed) != len(tokens):
            raise LoadError(f"precomputed rows ({len(precomputed)}) != token count ({len(tokens)})")
        encoded, back_enc = self.encoder.encode(ids, precomputed)
        R, back_comp = self.composer.compose(encoded.H)

        L_c, back_chunk = chunk_loss(R, labels, self.chunk_head)
        scores = saliency_score(R, self.rank_head)
        L_r, g_scores = rank_loss(pairs, scores, delta1)

        uniq, local = np.unique(pairs, return_inverse=True)
        local = local.reshape(-1, 2)
        lat_d, back_lat_d = concept_encode(encoded.doc_vec, "doc", self.vae, eps_doc)
        L_d, back_vae_d = vae_module_loss(encoded.doc_vec, lat_d, self.vae.doc_decoder)
        if len(uniq):
            x_p = R[uniq]
            lat_p, back_lat_p = concept_encode(x_p, "phrase", self.vae, eps_phrase)
            I3 = concept_match(lat_p.z, lat_d.z, self.vae.W3.value)
            L_m, g_I3 = match_triplet_loss(local, I3, delta2)
            L_k, back_vae_p = vae_module_loss(x_p, lat_p, self.vae.phrase_decoder)
        else:
            L_m = L_k = 0.0
        L_t = L_m + lam * L_d + (1.0 - lam) * L_k
        total = e1 * L_c + e2 * L_r + e3 * L_t
        parts = LossBreakdown(L_c, L_r, L_m, L_d, L_k, L_t, total)
        for name, value in parts.as_dict().items():
            if not np.isfinite(value):
                raise NonFiniteError(f"loss term {name!r} is not finite")

        def backward(scale=1.0):
            gR = back_chunk(scale * e1)
            gR += saliency_backward(R, self.rank_head, g_scores * (scale * e2))

            # doc VAE: reconstruction + KL weighted by lam
            gx_d, gmu_d, gsig_d, gz_d = back_vae_d(scale * e3 * lam)
            if len(uniq):
                w_m = scale * e3
                gzp, gzd, gW3 = concept_match_backward(lat_p.z, lat_d.z, self.vae.W3.value, g_I3 * w_m)
                self.vae.W3.grad += gW3
                gz_d = gz_d + gzd
                gx_p, gmu_p, gsig_p, gz_p = back_vae_p(scale * e3 * (1.0 - lam))
                gx_p = gx_p + back_lat_p(gmu_p, gsig_p, gz_p + gzp)
                np.add.at(gR, uniq, gx_p)
            gdoc = gx_d + back_lat_d(gmu_d, gsig_d, gz_d)

            gH = back_comp(gR)
            back_enc(gH, gdoc)

        return parts, backward

    def candidate_labels(self, n_tokens, positive_spans):
        spans = enumerate_spans(n_tokens, self.max_n)
        return np.array([1 if s in positive_spans else 0 for s in spans], dtype=np.int64), spans

    # ---------------------------------------------------------- persistence

    def save(self, path, config=None):
        save_checkpoint(
            path,
            self.parameters(),
            dims=self.dims.__dict__,
            vocab=self.vocab.to_list(),
            config=config or {},
        )

    @classmethod
    def load(cls, path):
        arrays, meta = load_checkpoint(path)
        try:
            dims = ModelDims(**meta["dims"])
            vocab = Vocabulary.from_list(meta["vocab"])
        except (KeyError, TypeError) as exc:
            raise LoadError(f"{path}: incomplete checkpoint ({exc})") from None
        model = cls(dims, vocab)
        params = model.named_parameters()
        missing = set(params) - set(arrays)
        if missing:
            raise LoadError(f"{path}: missing parameters {sorted(missing)}")
        for name, p in params.items():
            if arrays[name].shape != p.value.shape:
                raise LoadError(f"{path}: parameter {name!r} has shape {arrays[name].shape}, expected {p.value.shape}")
            p.value[...] = arrays[name]
        model.config = meta.get("config", {})
        return model
