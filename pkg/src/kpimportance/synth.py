"""Synthetic labeled corpus with planted multi-token keyphrases.

Vocabulary words are pronounceable pseudo-words that the Porter stemmer leaves
unchanged, split into three pools: topic cue words, keyword words and filler.
Each document gets a topic; every planted phrase is repeated two or more
times, each occurrence right after one of the topic's cue words.
"""

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError
from .porter import stem

_CONSONANTS = "bdgkmprt"
_VOWELS = "aio"


@dataclass
class SynthSpec:
    vocab_size: int = 200
    n_docs: int = 500
    min_len: int = 40
    max_len: int = 80
    phrases_per_doc: int = 3
    min_phrase_len: int = 2
    max_phrase_len: int = 3
    min_repeats: int = 2
    max_repeats: int = 3
    noise_rate: float = 0.05
    n_topics: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.min_repeats < 2:
            raise ConfigError("planted phrases must repeat at least twice")
        if not 1 <= self.min_phrase_len <= self.max_phrase_len:
            raise ConfigError("invalid phrase length range")
        if not 1 <= self.min_len <= self.max_len:
            raise ConfigError("invalid document length range")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ConfigError("noise_rate must lie in [0, 1)")
        if self.vocab_size < 20:
            raise ConfigError("vocab_size must be >= 20")
        n_cue, n_kw, _ = self.pool_sizes()
        if self.phrases_per_doc * self.max_phrase_len > n_kw:
            raise ConfigError("keyword pool too small for the requested phrases")
        if n_cue < self.n_topics:
            raise ConfigError("need at least one cue word per topic")

    def pool_sizes(self):
        n_cue = max(self.n_topics, self.vocab_size // 10)
        n_kw = (self.vocab_size * 3) // 10
        return n_cue, n_kw, self.vocab_size - n_cue - n_kw

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown synth spec fields: {sorted(unknown)}")
        return cls(**data)


def pseudo_words(count, rng):
    """``count`` distinct stem-stable pseudo-words."""
    words = []
    seen = set()
    while len(words) < count:
        n_syl = int(rng.integers(2, 4))
        w = "".join(rng.choice(list(_CONSONANTS)) + rng.choice(list(_VOWELS)) for _ in range(n_syl))
        if w in seen or stem(w) != w:
            continue
        seen.add(w)
        words.append(w)
    return words


def _document(spec, rng, cue, keywords, filler, topic_cues):
    cues = topic_cues[int(rng.integers(len(topic_cues)))]
    lengths = rng.integers(spec.min_phrase_len, spec.max_phrase_len + 1, size=spec.phrases_per_doc)
    picked = rng.choice(len(keywords), size=int(lengths.sum()), replace=False)
    phrases = []
    offset = 0
    for n in lengths:
        phrases.append([keywords[j] for j in picked[offset:offset + n]])
        offset += n

    occurrences = []
    for phrase in phrases:
        reps = int(rng.integers(spec.min_repeats, spec.max_repeats + 1))
        for _ in range(reps):
            occurrences.append([cues[int(rng.integers(len(cues)))]] + phrase)
    rng.shuffle(occurrences)

    planted_len = sum(len(o) for o in occurrences)
    target = int(rng.integers(spec.min_len, spec.max_len + 1))
    n_filler = max(target - planted_len, len(occurrences) + 1)
    body = []
    for _ in range(n_filler):
        r = rng.random()
        if r < spec.noise_rate / 2:
            body.append(keywords[int(rng.integers(len(keywords)))])
        elif r < spec.noise_rate:
            body.append(cue[int(rng.integers(len(cue)))])
        else:
            body.append(filler[int(rng.integers(len(filler)))])

    # distinct gaps keep occurrences separated by at least one filler word
    slots = np.sort(rng.choice(np.arange(1, n_filler), size=len(occurrences), replace=False))
    tokens = []
    prev = 0
    for slot, occ in zip(slots, occurrences):
        tokens.extend(body[prev:slot])
        tokens.extend(occ)
        prev = slot
    tokens.extend(body[prev:])
    return tokens, [" ".join(p) for p in phrases]


def synth_records(spec: SynthSpec):
    rng = np.random.default_rng(spec.seed)
    n_cue, n_kw, n_fill = spec.pool_sizes()
    words = pseudo_words(spec.vocab_size, rng)
    cue, keywords, filler = words[:n_cue], words[n_cue:n_cue + n_kw], words[n_cue + n_kw:]
    per_topic = n_cue // spec.n_topics
    topic_cues = [cue[t * per_topic:(t + 1) * per_topic] for t in range(spec.n_topics)]
    records = []
    for i in range(spec.n_docs):
        tokens, gold = _document(spec, rng, cue, keywords, filler, topic_cues)
        records.append({"id": f"synth-{i:05d}", "text": " ".join(tokens), "keyphrases": gold})
    return records


def synth_corpus(spec: SynthSpec, path):
    """Write the synthetic corpus as JSONL; returns the number of documents."""
    records = synth_records(spec)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")
    return len(records)


def spec_to_dict(spec):
    return asdict(spec)
