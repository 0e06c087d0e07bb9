"""Tokenization, corpus ingestion, vocabulary and gold-label alignment."""

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

from .errors import KPError, SchemaError
from .porter import stem, stem_phrase

MAX_SEQ_LEN = 512
MAX_NGRAM = 5

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and split it into word and punctuation tokens.

    >>> tokenize("Error-Bounds.")
    ['error', '-', 'bounds', '.']
    """
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Document:
    id: str
    tokens: tuple[str, ...]
    raw_text: Optional[str] = None

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class LabeledDocument:
    doc: Document
    gold: tuple[str, ...]
    positive_spans: frozenset = field(default_factory=frozenset)

    @property
    def id(self):
        return self.doc.id

    @property
    def tokens(self):
        return self.doc.tokens


def gold_stems(gold: Iterable[str]) -> set[str]:
    """Stemmed, space-joined forms of gold phrases (empty phrases dropped)."""
    out = set()
    for phrase in gold:
        toks = tokenize(phrase)
        if toks:
            out.add(stem_phrase(toks))
    return out


def align_labels(doc: Document, gold: Iterable[str], max_n: int = MAX_NGRAM) -> set[tuple[int, int]]:
    """Return every span (start, length) whose stemmed surface equals a stemmed gold phrase."""
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    targets = gold_stems(gold)
    if not targets:
        return set()
    stems = [stem(t) for t in doc.tokens]
    lengths = {len(t.split(" ")) for t in targets}
    spans = set()
    for n in sorted(lengths):
        if n > max_n:
            continue
        for i in range(len(stems) - n + 1):
            if " ".join(stems[i:i + n]) in targets:
                spans.add((i, n))
    return spans


def _parse_record(obj, lineno, max_len, max_n):
    if not isinstance(obj, dict):
        raise SchemaError(f"line {lineno}: expected a JSON object")
    if "id" not in obj:
        raise SchemaError(f"line {lineno}: missing field 'id'")
    if "keyphrases" not in obj:
        raise SchemaError(f"line {lineno}: missing field 'keyphrases'")
    if "tokens" in obj:
        tokens = obj["tokens"]
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise SchemaError(f"line {lineno}: 'tokens' must be an array of strings")
        tokens = [t.lower() for t in tokens]
        raw = obj.get("text")
    elif "text" in obj:
        if not isinstance(obj["text"], str):
            raise SchemaError(f"line {lineno}: 'text' must be a string")
        raw = obj["text"]
        tokens = tokenize(raw)
    else:
        raise SchemaError(f"line {lineno}: missing field 'text' or 'tokens'")
    gold = obj["keyphrases"]
    if not isinstance(gold, list) or not all(isinstance(g, str) for g in gold):
        raise SchemaError(f"line {lineno}: 'keyphrases' must be an array of strings")

    doc = Document(id=str(obj["id"]), tokens=tuple(tokens[:max_len]), raw_text=raw)
    spans = align_labels(doc, gold, max_n)
    return LabeledDocument(doc=doc, gold=tuple(gold), positive_spans=frozenset(spans))


def iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    """Yield (line number, parsed object) for each non-blank line."""
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"line {lineno}: malformed JSON ({exc.msg})") from None


def load_corpus(path, max_len: int = MAX_SEQ_LEN, max_n: int = MAX_NGRAM) -> Iterator[LabeledDocument]:
    """Stream labeled documents from a JSONL dataset.

    Tokens past ``max_len`` are dropped, and with them any positive span that
    would cross the cut. Gold phrases without an occurrence in the (truncated)
    text stay in ``gold`` but produce no positive span.
    """
    for lineno, obj in iter_jsonl(path):
        yield _parse_record(obj, lineno, max_len, max_n)


def corpus_to_records(corpus: Iterable[LabeledDocument]) -> list[dict]:
    return [
        {"id": d.id, "tokens": list(d.tokens), "keyphrases": list(d.gold)}
        for d in corpus
    ]


def write_corpus(corpus: Iterable[LabeledDocument], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in corpus_to_records(corpus):
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


class Vocabulary:
    """Token/id mapping with PAD (0) and UNK (1) reserved."""

    PAD = "<pad>"
    UNK = "<unk>"
    PAD_ID = 0
    UNK_ID = 1

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos = [self.PAD, self.UNK]
        self.stoi = {self.PAD: 0, self.UNK: 1}
        for t in tokens:
            if t not in self.stoi:
                self.stoi[t] = len(self.itos)
                self.itos.append(t)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi and self.stoi[token] > self.UNK_ID

    def lookup(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, self.UNK_ID) for t in tokens]

    def to_list(self) -> list[str]:
        return list(self.itos[2:])

    @classmethod
    def from_list(cls, tokens):
        return cls(tokens)


def build_vocab(corpus: Iterable, min_count: int = 1) -> Vocabulary:
    """Vocabulary of every token seen at least ``min_count`` times corpus-wide.

    Accepts LabeledDocument, Document, or plain token sequences. Tokens are
    ordered by descending frequency, then alphabetically.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter()
    n_docs = 0
    for item in corpus:
        tokens = getattr(item, "tokens", item)
        counts.update(tokens)
        n_docs += 1
    if n_docs == 0:
        raise KPError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary(kept)
