"""Joint end-to-end training under the three-way weighted objective."""

import dataclasses
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .heads import check_task_weights
from .model import KeyphraseModel, ModelDims
from .nn import AdamWState, adamw_step
from .text import build_vocab

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    batch_size: int = 32
    warmup_proportion: float = 0.10
    epochs: int = 20
    lam: float = 0.5
    eps1: float = 1.0 / 3.0
    eps2: float = 1.0 / 3.0
    eps3: float = 1.0 / 3.0
    delta1: float = 1.0
    delta2: float = 1.0
    max_n: int = 5
    d: int = 64
    c: int = 16
    max_seq_len: int = 512
    negatives_per_positive: int = 10
    seed: int = 0
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    vae_hidden: int = 0
    min_count: int = 1
    ablation: bool = False
    train_data: str = ""
    embeddings: str = ""

    def __post_init__(self):
        self.validate()

    @property
    def weights(self):
        return (self.eps1, self.eps2, self.eps3)

    def validate(self):
        check_task_weights(self.weights, strict=not self.ablation)
        if self.delta1 < 0 or self.delta2 < 0:
            raise ConfigError("margins delta1/delta2 must be >= 0")
        if not 0.0 < self.lam < 1.0:
            raise ConfigError(f"lam must lie in (0, 1), got {self.lam}")
        if not 0.0 <= self.warmup_proportion < 1.0:
            raise ConfigError("warmup_proportion must lie in [0, 1)")
        for name in ("batch_size", "epochs", "max_n", "d", "c", "max_seq_len", "negatives_per_positive", "min_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path, **overrides):
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(data)


@dataclass
class TrainState:
    rng: np.random.Generator
    step: int = 0
    epoch: int = 0
    total_steps: int = 1
    optimizer: AdamWState = field(default_factory=AdamWState)
    losses: dict = field(default_factory=dict)
    history: list = field(default_factory=list)


@dataclass
class PreparedDoc:
    id: str
    tokens: tuple
    labels: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    precomputed: object = None


def sample_pairs(positives, negatives, cap, rng):
    """(pos, neg) pairs: each positive meets min(cap, |negatives|) distinct negatives."""
    negatives = np.asarray(negatives, dtype=np.int64)
    if len(positives) == 0 or len(negatives) == 0:
        return []
    pairs = []
    for p in positives:
        if cap is None or cap >= len(negatives):
            chosen = negatives
        else:
            chosen = rng.choice(negatives, size=int(cap), replace=False)
        pairs.extend((int(p), int(n)) for n in chosen)
    return pairs


def warmup_steps(total_steps, warmup_proportion):
    return math.ceil(warmup_proportion * total_steps)


def lr_at(step, total_steps, base_lr, warmup_proportion):
    """Linear warmup to ``base_lr`` then linear decay to 0 at ``total_steps``."""
    warm = warmup_steps(total_steps, warmup_proportion)
    if step <= warm:
        return base_lr * step / warm
    if total_steps == warm:
        return base_lr
    return base_lr * (total_steps - step) / (total_steps - warm)


def prepare(corpus, model, precomputed=None):
    """Attach candidate labels and P+/P- index sets to each labeled document."""
    prepared = []
    for doc in corpus:
        if not doc.tokens:
            log.info("skipping document %s: no candidates", doc.id)
            continue
        labels, _ = model.candidate_labels(len(doc.tokens), doc.positive_spans)
        H = None
        if precomputed is not None and doc.id in precomputed:
            H = precomputed[doc.id]
        prepared.append(PreparedDoc(
            id=doc.id,
            tokens=doc.tokens,
            labels=labels,
            positives=np.flatnonzero(labels == 1),
            negatives=np.flatnonzero(labels == 0),
            precomputed=H,
        ))
    return prepared


def train_epoch(docs, model, config, state):
    """One shuffled pass over ``docs`` (PreparedDoc list); updates in place."""
    order = state.rng.permutation(len(docs))
    params = model.parameters()
    sums = {}
    seen = 0
    for start in range(0, len(order), config.batch_size):
        batch = [docs[j] for j in order[start:start + config.batch_size]]
        model.zero_grad()
        for doc in batch:
            pairs = sample_pairs(doc.positives, doc.negatives, config.negatives_per_positive, state.rng)
            n_unique = len(np.unique(np.asarray(pairs, dtype=np.int64)))
            eps_doc = state.rng.standard_normal(config.c)
            eps_phrase = state.rng.standard_normal((n_unique, config.c))
            parts, backward = model.document_loss(
                doc.tokens, doc.labels, pairs, eps_doc, eps_phrase, config.weights,
                delta1=config.delta1, delta2=config.delta2, lam=config.lam,
                precomputed=doc.precomputed, strict=not config.ablation,
            )
            backward(1.0 / len(batch))
            for k, v in parts.as_dict().items():
                sums[k] = sums.get(k, 0.0) + v
            seen += 1
        state.step += 1
        lr = lr_at(state.step, state.total_steps, config.learning_rate, config.warmup_proportion)
        adamw_step(params, state.optimizer, lr, state.step, config.beta1, config.beta2,
                   config.adam_eps, config.weight_decay)
    state.epoch += 1
    state.losses = {k: v / max(seen, 1) for k, v in sums.items()}
    state.history.append(dict(epoch=state.epoch, step=state.step, **state.losses))
    return model, state


def init_model(corpus, config):
    vocab = build_vocab(corpus, config.min_count)
    dims = ModelDims(vocab_size=len(vocab), d=config.d, c=config.c, max_n=config.max_n,
                     vae_hidden=config.vae_hidden)
    return KeyphraseModel(dims, vocab, seed=config.seed)


def train(corpus, config, out_dir=None, precomputed=None, model=None, callback=None):
    """Train a fresh model on a list of LabeledDocument; return (model, state).

    With ``out_dir`` set, the config is copied there and a checkpoint is
    written after every epoch (``epoch-XXX.json``) and at the end
    (``model.json``).
    """
    corpus = list(corpus)
    if not corpus:
        raise ConfigError("training corpus is empty")
    if model is None:
        model = init_model(corpus, config)
    docs = prepare(corpus, model, precomputed)
    steps_per_epoch = math.ceil(len(docs) / config.batch_size)
    state = TrainState(rng=np.random.default_rng(config.seed))
    state.total_steps = max(1, steps_per_epoch * config.epochs)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as f:
            json.dump(config.to_dict(), f, indent=2, sort_keys=True)
    for _ in range(config.epochs):
        train_epoch(docs, model, config, state)
        log.info("epoch %d step %d loss %.6f", state.epoch, state.step, state.losses.get("total", float("nan")))
        if out_dir:
            model.save(os.path.join(out_dir, f"epoch-{state.epoch:03d}.json"), config.to_dict())
        if callback is not None:
            callback(model, state)
    if out_dir:
        model.save(os.path.join(out_dir, "model.json"), config.to_dict())
    return model, state
