"""Command-line entry point: ``kpimportance <subcommand> ...``."""

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from .encoder import load_precomputed
from .errors import KPError
from .evaluation import DEFAULT_KS, evaluate, extract_topk, score_document, tfidf_baseline
from .model import KeyphraseModel
from .synth import SynthSpec, synth_corpus
from .text import iter_jsonl, load_corpus, tokenize
from .trainer import TrainConfig, train

log = logging.getLogger("kpimportance")


def _write_extractions(path, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for doc_id, scored in rows:
            f.write(json.dumps({
                "id": doc_id,
                "keyphrases": [p.surface for p in scored],
                "scores": [p.score for p in scored],
            }) + "\n")


def _read_documents(path):
    """(id, tokens) for each record; keyphrases are optional here."""
    for lineno, obj in iter_jsonl(path):
        if not isinstance(obj, dict) or "id" not in obj:
            raise KPError(f"line {lineno}: missing field 'id'")
        if "tokens" in obj:
            tokens = [t.lower() for t in obj["tokens"]]
        elif "text" in obj:
            tokens = tokenize(obj["text"])
        else:
            raise KPError(f"line {lineno}: missing field 'text' or 'tokens'")
        yield str(obj["id"]), tokens


def cmd_train(args):
    overrides = {"seed": args.seed}
    config = TrainConfig.from_file(args.config, **overrides)
    if not config.train_data:
        raise KPError("config field 'train_data' must name a JSONL dataset")
    base = os.path.dirname(os.path.abspath(args.config))
    data_path = os.path.join(base, config.train_data)
    corpus = list(load_corpus(data_path, config.max_seq_len, config.max_n))
    precomputed = None
    if config.embeddings:
        precomputed = load_precomputed(os.path.join(base, config.embeddings), config.d)
    out = args.out or f"runs/run-{time.strftime('%Y%m%d-%H%M%S')}"
    t0 = time.time()
    _, state = train(corpus, config, out_dir=out, precomputed=precomputed)
    print(json.dumps({
        "out": out,
        "epochs": state.epoch,
        "steps": state.step,
        "seconds": round(time.time() - t0, 2),
        "final_loss": state.losses,
    }))


def cmd_extract(args):
    model = KeyphraseModel.load(args.model)
    precomputed = load_precomputed(args.embeddings, model.dims.d) if args.embeddings else None
    max_len = model.config.get("max_seq_len", 512)
    rows = []
    for doc_id, tokens in _read_documents(args.input):
        tokens = tokens[:max_len]
        H = precomputed[doc_id] if precomputed is not None and doc_id in precomputed else None
        rows.append((doc_id, score_document(tokens, model, H)[:args.topk]))
    _write_extractions(args.out, rows)


def _read_predictions(path):
    preds = {}
    for lineno, obj in iter_jsonl(path):
        if "id" not in obj or "keyphrases" not in obj:
            raise KPError(f"{path} line {lineno}: prediction records need 'id' and 'keyphrases'")
        preds[str(obj["id"])] = list(obj["keyphrases"])
    return preds


def cmd_eval(args):
    ks = [int(k) for k in args.ks.split(",") if k.strip()]
    preds = _read_predictions(args.pred)
    golds = {}
    for lineno, obj in iter_jsonl(args.gold):
        if "id" not in obj or "keyphrases" not in obj:
            raise KPError(f"{args.gold} line {lineno}: gold records need 'id' and 'keyphrases'")
        golds[str(obj["id"])] = list(obj["keyphrases"])
    report = evaluate(preds, golds, ks)
    out = {"table": report.to_table, "csv": report.to_csv, "json": report.to_json}[args.format]()
    sys.stdout.write(out if out.endswith("\n") else out + "\n")


def cmd_gradcheck(args):
    from .gradcheck import run_gradient_suite

    results = run_gradient_suite(points=args.points, seed=args.seed)
    worst = 0.0
    for name, err in results.items():
        status = "ok" if err <= args.tolerance else "FAIL"
        print(f"{name:<28} max_rel_err={err:.3e} {status}")
        worst = max(worst, err)
    if worst > args.tolerance:
        raise KPError(f"gradient check failed: worst relative error {worst:.3e} > {args.tolerance:.1e}")


def cmd_synth(args):
    with open(args.spec, encoding="utf-8") as f:
        spec = SynthSpec.from_dict(json.load(f))
    synth_corpus(spec, args.out)


def cmd_baseline(args):
    docs = list(_read_documents(args.input))
    ranked = tfidf_baseline(docs)
    _write_extractions(args.out, [(doc_id, ranked[doc_id][:args.topk]) for doc_id, _ in docs])


def build_parser():
    parser = argparse.ArgumentParser(prog="kpimportance", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("extract", help="extract top-k keyphrases with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--topk", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--embeddings", help="precomputed-embedding JSONL to bypass the encoder")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", help="macro R@k / F1@k of predictions against gold")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--ks", default=",".join(str(k) for k in DEFAULT_KS))
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--points", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth-data", help="write a synthetic labeled corpus")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("baseline-tfidf", help="rank n-grams by TF-IDF")
    p.add_argument("--input", required=True)
    p.add_argument("--topk", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="raise", invalid="raise")
    try:
        args.func(args)
    except (KPError, OSError, ValueError, FloatingPointError, KeyError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
