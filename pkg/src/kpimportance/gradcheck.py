"""Central-difference verification of every hand-written backward pass.

Vector-valued ops are reduced to a scalar by a fixed random projection
``sum(out * R)`` so that one check covers the whole Jacobian.

Central differences only estimate a derivative where f is smooth across
the whole stencil and where round-off, roughly |f| * 1e-16 / h, is far below
the tolerance. Random points that violate either condition (a ReLU or hinge
corner within h of the point, or a loss larger than ``LOSS_CAP``) are
redrawn rather than scored.
"""

import numpy as np

from . import encoder as enc
from .candidates import NGramComposer
from .heads import (
    ChunkHead,
    ConceptVAE,
    RankHead,
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
from .model import KeyphraseModel, ModelDims
from .nn import (
    conv_all,
    conv_all_backward,
    cross_entropy,
    cross_entropy_grad_logits,
    dense,
    dense_backward,
    gaussian_kl,
    gaussian_kl_grad,
    grad_check,
    hinge_pair_grad,
    hinge_pair_loss,
    reparameterize,
    reparameterize_backward,
    softmax,
    triplet_grad,
    triplet_loss,
)
from .text import Vocabulary

H_STEP = 1e-4
KINK_TOL = 1e-7
LOSS_CAP = 1e3
MAX_REDRAWS = 50


class Redraw(Exception):
    """The sampled point is outside the region where the check is meaningful."""


def _check(f, point, analytic):
    value = f() if isinstance(point, dict) else f(point)
    if not np.isfinite(value) or abs(value) > LOSS_CAP:
        raise Redraw(f"loss {value:.3g} exceeds the round-off budget")
    report = grad_check(f, point, analytic, H_STEP, kink_tol=KINK_TOL, stop_at_kink=True)
    if report.kinks:
        raise Redraw(f"non-differentiable corner near {report.kinks[0]}")
    return report.worst


def check_dense(rng, d=4, q=3):
    x, W, b = rng.normal(size=d), rng.normal(size=(q, d)), rng.normal(size=q)
    R = rng.normal(size=q)
    gx, gW, gb = dense_backward(x, W, R)
    return _check(lambda: float(dense(x, W, b) @ R), {"x": x, "W": W, "b": b},
                             {"x": gx, "W": gW, "b": gb})


def check_conv(rng, M=6, d=3):
    H = rng.normal(size=(M, d))
    worst = 0.0
    for n in (1, 2, 3):
        W, b = rng.normal(size=(d, n * d)), rng.normal(size=d)
        R = rng.normal(size=(M - n + 1, d))
        out, cache = conv_all(H, W, b, n)
        gH, gW, gb = conv_all_backward(W, cache, R)

        def f():
            return float(np.sum(conv_all(H, W, b, n)[0] * R))

        worst = max(worst, _check(f, {"H": H, "W": W, "b": b}, {"H": gH, "W": gW, "b": gb}))
    return worst


def check_softmax_ce(rng, k=5):
    z = rng.normal(size=k) * 2
    label = int(rng.integers(k))
    g = cross_entropy_grad_logits(softmax(z), label)
    return _check(lambda: cross_entropy(softmax(z), label), {"z": z}, {"z": g})


def check_margin_losses(rng, count=6):
    s = rng.normal(size=(2, count)) * 2
    margin = 1.0
    worst = 0.0
    for loss, grad in ((hinge_pair_loss, hinge_pair_grad), (triplet_loss, triplet_grad)):
        gp, gn = grad(s[0], s[1], margin)
        worst = max(worst, _check(lambda: float(np.sum(loss(s[0], s[1], margin))), {"s": s},
                                  {"s": np.stack([gp, gn])}))
    return worst


def check_kl(rng, c=4):
    mu = rng.normal(size=c)
    sigma = np.exp(rng.normal(size=c) * 0.5)
    gmu, gsig = gaussian_kl_grad(mu, sigma)
    return _check(lambda: gaussian_kl(mu, sigma), {"mu": mu, "sigma": sigma},
                             {"mu": gmu, "sigma": gsig})


def check_reparameterize(rng, c=4):
    mu, sigma, eps = rng.normal(size=c), np.exp(rng.normal(size=c)), rng.normal(size=c)
    R = rng.normal(size=c)
    gmu, gsig = reparameterize_backward(sigma, eps, R)
    return _check(lambda: float(reparameterize(mu, sigma, eps) @ R),
                             {"mu": mu, "sigma": sigma}, {"mu": gmu, "sigma": gsig})


def check_encoder(rng, V=7, d=4, M=5):
    e = enc.Encoder(V, d, rng)
    ids = rng.integers(V, size=M)
    RH, Rd = rng.normal(size=(M, d)), rng.normal(size=d)

    def f():
        out, _ = e.encode(ids)
        return float(np.sum(out.H * RH) + out.doc_vec @ Rd)

    for p in e.parameters():
        p.zero_grad()
    _, back = e.encode(ids)
    back(RH, Rd)
    return _check(f, {p.name: p.value for p in e.parameters()},
                             {p.name: p.grad for p in e.parameters()})


def check_composer(rng, M=6, d=3, N=3):
    comp = NGramComposer(d, N, rng)
    H = rng.normal(size=(M, d))
    R0, _ = comp.compose(H)
    Rp = rng.normal(size=R0.shape)
    _, back = comp.compose(H)
    gH = back(Rp)

    def f():
        return float(np.sum(comp.compose(H)[0] * Rp))

    point = {p.name: p.value for p in comp.parameters()}
    point["H"] = H
    grads = {p.name: p.grad for p in comp.parameters()}
    grads["H"] = gH
    return _check(f, point, grads)


def check_heads(rng, K=9, d=4, c=3):
    X = rng.normal(size=(K, d))
    labels = rng.integers(2, size=K)
    chunk, rank = ChunkHead(d, rng), RankHead(d, rng)
    pairs = np.array([(i, j) for i in range(3) for j in range(3, K)])[: 12]
    worst = 0.0

    # chunking
    _, back = chunk_loss(X, labels, chunk)
    gX = back(1.0)
    point = {"X": X, "W1": chunk.W1.value, "b1": chunk.b1.value}
    grads = {"X": gX, "W1": chunk.W1.grad, "b1": chunk.b1.grad}
    worst = max(worst, _check(lambda: chunk_loss(X, labels, chunk)[0], point, grads))

    # ranking
    def rank_value():
        return rank_loss(pairs, saliency_score(X, rank), 1.0)[0]

    _, gs = rank_loss(pairs, saliency_score(X, rank), 1.0)
    gX = saliency_backward(X, rank, gs)
    point = {"X": X, "W2": rank.W2.value}
    grads = {"X": gX, "W2": rank.W2.grad}
    worst = max(worst, _check(rank_value, point, grads))

    # concept encoding, matching and VAE losses
    vae = ConceptVAE(d, c, d, rng)
    for p in vae.parameters():
        p.value += rng.normal(0.0, 0.1, p.value.shape)
    x_d = rng.normal(size=d)
    eps_d, eps_p = rng.normal(size=c), rng.normal(size=(K, c))
    local = pairs

    def match_value():
        ld, _ = concept_encode(x_d, "doc", vae, eps_d)
        lp, _ = concept_encode(X, "phrase", vae, eps_p)
        I3 = concept_match(lp.z, ld.z, vae.W3.value)
        Lm, _ = match_triplet_loss(local, I3, 1.0)
        Ld, _ = vae_module_loss(x_d, ld, vae.doc_decoder)
        Lk, _ = vae_module_loss(X, lp, vae.phrase_decoder)
        return Lm + 0.3 * Ld + 0.7 * Lk

    ld, back_d = concept_encode(x_d, "doc", vae, eps_d)
    lp, back_p = concept_encode(X, "phrase", vae, eps_p)
    I3 = concept_match(lp.z, ld.z, vae.W3.value)
    _, gI3 = match_triplet_loss(local, I3, 1.0)
    gzp, gzd, gW3 = concept_match_backward(lp.z, ld.z, vae.W3.value, gI3)
    vae.W3.grad += gW3
    _, bvd = vae_module_loss(x_d, ld, vae.doc_decoder)
    _, bvp = vae_module_loss(X, lp, vae.phrase_decoder)
    gxd, gmud, gsd, gzd2 = bvd(0.3)
    gxp, gmup, gsp, gzp2 = bvp(0.7)
    gxd = gxd + back_d(gmud, gsd, gzd + gzd2)
    gxp = gxp + back_p(gmup, gsp, gzp + gzp2)
    point = {p.name: p.value for p in vae.parameters()}
    point.update(x_d=x_d, X=X)
    grads = {p.name: p.grad for p in vae.parameters()}
    grads.update(x_d=gxd, X=gxp)
    worst = max(worst, _check(match_value, point, grads))
    return worst


def toy_batch(rng, V=9, M_range=(5, 8)):
    """Two small documents with planted positive spans."""
    docs = []
    for _ in range(2):
        M = int(rng.integers(*M_range))
        tokens = [f"w{int(t)}" for t in rng.integers(V, size=M)]
        docs.append((tokens, {(1, 2), (M - 2, 1)}))
    return docs


def check_full_pipeline(rng, d=4, c=3, N=3, weights=(0.2, 0.3, 0.5), lam=0.4):
    """Joint loss of a 2-document batch w.r.t. every model parameter."""
    vocab = Vocabulary([f"w{i}" for i in range(9)])
    model = KeyphraseModel(ModelDims(len(vocab), d=d, c=c, max_n=N), vocab,
                           seed=int(rng.integers(2**31)))
    # zero-initialized biases with all-zero ReLU inputs sit exactly on a kink
    for p in model.parameters():
        p.value += rng.normal(0.0, 0.1, p.value.shape)
    batch = []
    for tokens, spans in toy_batch(rng):
        labels, _ = model.candidate_labels(len(tokens), spans)
        pos = np.flatnonzero(labels == 1)
        neg = np.flatnonzero(labels == 0)
        pairs = [(int(p), int(n)) for p in pos for n in rng.choice(neg, size=3, replace=False)]
        n_u = len(np.unique(pairs))
        batch.append((tokens, labels, pairs, rng.normal(size=c), rng.normal(size=(n_u, c))))

    def total():
        return sum(
            model.document_loss(t, y, p, ed, ep, weights, lam=lam)[0].total for t, y, p, ed, ep in batch
        ) / len(batch)

    model.zero_grad()
    for t, y, p, ed, ep in batch:
        _, back = model.document_loss(t, y, p, ed, ep, weights, lam=lam)
        back(1.0 / len(batch))
    params = model.parameters()
    return _check(total, {p.name: p.value for p in params},
                             {p.name: p.grad.copy() for p in params})


CHECKS = {
    "dense": check_dense,
    "conv_window": check_conv,
    "softmax_cross_entropy": check_softmax_ce,
    "hinge_and_triplet": check_margin_losses,
    "gaussian_kl": check_kl,
    "reparameterize": check_reparameterize,
    "encoder": check_encoder,
    "compose_ngrams": check_composer,
    "heads": check_heads,
    "full_pipeline": check_full_pipeline,
}


def _scored_point(name, fn, rng):
    for _ in range(MAX_REDRAWS):
        try:
            return fn(rng)
        except Redraw:
            continue
    raise RuntimeError(f"{name}: no checkable point in {MAX_REDRAWS} draws")


def run_gradient_suite(points=10, seed=0, checks=None):
    """Worst relative error of each check over ``points`` random points."""
    rng = np.random.default_rng(seed)
    results = {}
    for name, fn in (checks or CHECKS).items():
        results[name] = max(_scored_point(name, fn, rng) for _ in range(points))
    return results
