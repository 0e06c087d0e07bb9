"""Ranking-only inference, top-k extraction, stemmed R@k / F1@k, TF-IDF baseline."""

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field

from .candidates import enumerate_spans
from .errors import KPError
from .porter import stem_phrase
from .text import MAX_NGRAM, gold_stems, tokenize

DEFAULT_KS = (1, 3, 5, 10)


@dataclass
class ScoredPhrase:
    surface: str
    stemmed: str
    score: float
    best_span: tuple


def rank_spans(tokens, scores, spans):
    """Merge spans sharing a surface (max score kept) and sort them.

    Order: score descending, then earlier start, then shorter length.
    """
    best = {}
    for score, (i, n) in zip(scores, spans):
        surface = " ".join(tokens[i:i + n])
        cur = best.get(surface)
        if cur is None or score > cur[0] or (score == cur[0] and (i, n) < cur[1]):
            best[surface] = (float(score), (i, n))
    ranked = [
        ScoredPhrase(surface=s, stemmed=stem_phrase(s.split(" ")), score=sc, best_span=span)
        for s, (sc, span) in best.items()
    ]
    ranked.sort(key=lambda p: (-p.score, p.best_span[0], p.best_span[1]))
    return ranked


def score_document(tokens, model, precomputed=None):
    """Score every candidate with the ranking head only and dedup by surface."""
    tokens = [t.lower() for t in tokens]
    if not tokens:
        return []
    scores = model.saliency(tokens, precomputed)
    return rank_spans(tokens, scores, enumerate_spans(len(tokens), model.max_n))


def extract_topk(scored, k):
    if k < 1:
        raise ValueError("k must be >= 1")
    return [p.surface for p in scored[:k]]


# ------------------------------------------------------------------ metrics

def _match_count(predictions, gold_set):
    remaining = set(gold_set)
    matches = 0
    for phrase in predictions:
        key = stem_phrase(tokenize(phrase))
        if key in remaining:
            remaining.discard(key)
            matches += 1
    return matches


def prf_at_k(predictions, gold, k):
    """(precision, recall, f1) of the first k predictions against gold phrases.

    Precision divides by the number of predictions actually considered,
    min(k, len(predictions)).
    """
    golds = gold_stems(gold)
    considered = predictions[:k]
    if not golds:
        return 0.0, 0.0, 0.0
    matches = _match_count(considered, golds)
    p = matches / len(considered) if considered else 0.0
    r = matches / len(golds)
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


@dataclass
class EvalReport:
    ks: tuple
    precision: dict
    recall: dict
    f1: dict
    n_docs: int
    n_skipped: int = 0
    per_doc: list = field(default_factory=list)

    def rows(self):
        return [
            {"k": k, "precision": self.precision[k], "recall": self.recall[k], "f1": self.f1[k]}
            for k in self.ks
        ]

    def to_json(self):
        return json.dumps({
            "n_docs": self.n_docs,
            "n_skipped": self.n_skipped,
            "metrics": self.rows(),
        }, indent=2)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["k", "precision", "recall", "f1"], lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()

    def to_table(self):
        lines = [f"documents: {self.n_docs}", f"{'k':>4} {'P@k':>9} {'R@k':>9} {'F1@k':>9}"]
        for row in self.rows():
            lines.append(f"{row['k']:>4} {row['precision']:>9.4f} {row['recall']:>9.4f} {row['f1']:>9.4f}")
        return "\n".join(lines) + "\n"


def evaluate(predictions, golds, ks=DEFAULT_KS):
    """Macro-averaged P/R/F1 at each k.

    ``predictions`` and ``golds`` map document id to a phrase list. Every
    predicted id must have gold; gold documents without predictions count as
    empty predictions. Documents whose gold is empty are left out of the
    averages (reported as ``n_skipped``).
    """
    ks = tuple(sorted(set(int(k) for k in ks)))
    if not ks or ks[0] < 1:
        raise ValueError("ks must be positive integers")
    missing = [doc_id for doc_id in predictions if doc_id not in golds]
    if missing:
        raise KPError(f"no gold keyphrases for document id {missing[0]!r}")
    sums = {k: [0.0, 0.0, 0.0] for k in ks}
    per_doc = []
    n = skipped = 0
    for doc_id in sorted(golds):
        gold = golds[doc_id]
        if not gold_stems(gold):
            skipped += 1
            continue
        preds = list(predictions.get(doc_id, []))
        row = {"id": doc_id, "predictions": preds[:max(ks)]}
        for k in ks:
            p, r, f1 = prf_at_k(preds, gold, k)
            sums[k][0] += p
            sums[k][1] += r
            sums[k][2] += f1
            row[f"f1@{k}"] = f1
        per_doc.append(row)
        n += 1
    denom = max(n, 1)
    return EvalReport(
        ks=ks,
        precision={k: sums[k][0] / denom for k in ks},
        recall={k: sums[k][1] / denom for k in ks},
        f1={k: sums[k][2] / denom for k in ks},
        n_docs=n,
        n_skipped=skipped,
        per_doc=per_doc,
    )


# ----------------------------------------------------------------- baseline

def tfidf_baseline(corpus, max_n=MAX_NGRAM):
    """Rank each document's n-grams by in-document count times smoothed idf.

    ``corpus`` is a sequence of (id, tokens) pairs or objects with ``id`` and
    ``tokens``. idf = ln((1 + |corpus|) / (1 + df)), with df counted over
    stemmed spans. Returns {id: [ScoredPhrase, ...]}.
    """
    docs = [(d.id, list(d.tokens)) if hasattr(d, "tokens") else (d[0], list(d[1])) for d in corpus]
    df = Counter()
    span_lists = {}
    for doc_id, tokens in docs:
        spans = enumerate_spans(len(tokens), max_n) if tokens else []
        span_lists[doc_id] = spans
        df.update({stem_phrase(tokens[i:i + n]) for i, n in spans})
    n_docs = len(docs)
    out = {}
    for doc_id, tokens in docs:
        spans = span_lists[doc_id]
        tf = Counter(" ".join(tokens[i:i + n]) for i, n in spans)
        scores = []
        for i, n in spans:
            window = tokens[i:i + n]
            idf = math.log((1 + n_docs) / (1 + df[stem_phrase(window)]))
            scores.append(tf[" ".join(window)] * idf)
        out[doc_id] = rank_spans(tokens, scores, spans)
    return out
