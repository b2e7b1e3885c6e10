"""``cvse`` command-line entry point.

Exit status: 0 on success, 2 for usage errors, 3 for configuration errors,
1 for anything else.  Failures print one line to stderr of the form
``error code=<CODE> [key=<dotted.key>] msg=<text>``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import RunConfig
from .consensus import write_concept_scores
from .corpus import (build_vocabulary, corpus_labels, read_corpus, read_lexicon,
                     read_word_vectors)
from .errors import CVSEError, ConfigError
from .evaluation import build_gallery, embed_images, embed_texts, recall_report, retrieve
from .graph import build_graph
from .io import read_features, write_json, write_matrix
from .synthetic import generate, write_synthetic
from .train import align_features, load_checkpoint, make_pairs, train, vocab_from_meta

log = logging.getLogger("cvse")

COMMANDS = ("build-vocab", "build-graph", "train", "eval", "retrieve", "export-concepts",
            "gen-synthetic")
PATH_KEYS = ("corpus", "val_corpus", "features", "word_vectors", "lexicon", "out_dir")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                        dest="overrides", help="override one dotted config key (repeatable)")
    common.add_argument("--seed", type=int, help="random seed (train.seed)")
    common.add_argument("--out", metavar="DIR", help="output directory (paths.out_dir)")
    common.add_argument("--checkpoint", metavar="PATH",
                        help="checkpoint to load (default: <out>/checkpoint.bin)")
    p = argparse.ArgumentParser(prog="cvse", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def resolve_config(args) -> RunConfig:
    """Defaults < config file < ``--set`` < dedicated flags.

    Relative paths inside the config file are taken relative to the file.
    """
    cfg = cfgmod.load_config(args.config, cls=RunConfig)
    if args.config:
        base = Path(args.config).resolve().parent
        for key in PATH_KEYS:
            p = getattr(cfg.paths, key)
            if p is not None and not os.path.isabs(p):
                setattr(cfg.paths, key, str(base / p))
    for item in args.overrides:
        cfgmod.set_key(cfg, *cfgmod.parse_override(item))
    if args.seed is not None:
        cfg.train.seed = args.seed
    if args.out is not None:
        cfg.paths.out_dir = args.out
    return cfg.validate()


def _require(cfg: RunConfig, key: str) -> str:
    value = getattr(cfg.paths, key)
    if not value:
        raise ConfigError(f"paths.{key}", "required by this command")
    return value


def _out_dir(cfg: RunConfig) -> str:
    out = _require(cfg, "out_dir")
    os.makedirs(out, exist_ok=True)
    return out


def _lexicon(cfg):
    return read_lexicon(cfg.paths.lexicon) if cfg.paths.lexicon else None


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


# ---------------------------------------------------------------- commands


def cmd_gen_synthetic(cfg: RunConfig, args) -> None:
    seed = args.seed if args.seed is not None else 7
    paths = write_synthetic(generate(seed), _out_dir(cfg))
    _emit({"seed": seed, **paths})


def cmd_build_vocab(cfg: RunConfig, args) -> None:
    records = read_corpus(_require(cfg, "corpus"))
    vocab = build_vocabulary(records, _lexicon(cfg), cfg.vocab.q)
    path = os.path.join(_out_dir(cfg), "vocab.tsv")
    vocab.to_tsv(path)
    _emit({"vocab": path, "q": len(vocab), **vocab.type_counts()})


def cmd_build_graph(cfg: RunConfig, args) -> None:
    records = read_corpus(_require(cfg, "corpus"))
    out = _out_dir(cfg)
    vocab = build_vocabulary(records, _lexicon(cfg), cfg.vocab.q)
    vocab.to_tsv(os.path.join(out, "vocab.tsv"))
    g = cfg.graph
    graph = build_graph(corpus_labels(records, vocab, cfg.vocab.cooccurrence_unit),
                        g.s, g.u, g.epsilon, g.denominator)
    params = {"s": g.s, "u": g.u, "epsilon": g.epsilon, "denominator": g.denominator,
              "cooccurrence_unit": cfg.vocab.cooccurrence_unit, "q": len(vocab)}
    written = {}
    for stage, matrix in graph.stages.items():
        path = os.path.join(out, f"{stage}.bin")
        write_matrix(path, matrix, stage, params)
        written[stage] = path
    _emit({"edges": int(graph.G.sum()), **written})


def _load_eval_inputs(cfg: RunConfig, args):
    ckpt = args.checkpoint or os.path.join(_require(cfg, "out_dir"), "checkpoint.bin")
    model, _, train_cfg, meta = load_checkpoint(ckpt)
    feats, index = read_features(_require(cfg, "features"))
    train_records = read_corpus(_require(cfg, "corpus"))
    eval_records = read_corpus(cfg.paths.val_corpus) if cfg.paths.val_corpus else train_records
    vocab = vocab_from_meta(meta)
    unit = train_cfg.vocab.cooccurrence_unit
    gallery_pairs = make_pairs(train_records, align_features(train_records, feats, index), vocab, unit)
    eval_pairs = make_pairs(eval_records, align_features(eval_records, feats, index), vocab, unit)
    gallery = build_gallery(model, gallery_pairs.features, gallery_pairs.tokens, gallery_pairs.labels)
    return model, train_cfg, eval_records, eval_pairs, gallery


def cmd_train(cfg: RunConfig, args) -> None:
    records = read_corpus(_require(cfg, "corpus"))
    feats, index = read_features(_require(cfg, "features"))
    table = None
    if cfg.paths.word_vectors:
        table = read_word_vectors(cfg.paths.word_vectors, dim=cfg.vocab.word_dim,
                                  seed=cfg.train.seed)
    val = read_corpus(cfg.paths.val_corpus) if cfg.paths.val_corpus else None
    out = _out_dir(cfg)
    result = train(cfg.training(), records, feats, index, table, _lexicon(cfg), val, out_dir=out)
    _emit({"checkpoint": os.path.join(out, "checkpoint.bin"), **result.epochs[-1]})


def cmd_eval(cfg: RunConfig, args) -> None:
    model, train_cfg, _, pairs, gallery = _load_eval_inputs(cfg, args)
    result = retrieve(model, pairs.features, pairs.tokens, gallery, train_cfg.inference.k)
    report = recall_report(result.similarity, pairs.pair_image)
    if cfg.paths.out_dir:
        write_json(os.path.join(_out_dir(cfg), "metrics.json"), report)
    _emit(report)


def cmd_retrieve(cfg: RunConfig, args) -> None:
    model, train_cfg, records, pairs, gallery = _load_eval_inputs(cfg, args)
    result = retrieve(model, pairs.features, pairs.tokens, gallery, train_cfg.inference.k)
    out = _out_dir(cfg)
    caption_ids = []
    for i, rec in enumerate(records):
        caption_ids += [f"{rec.image_id}#{n}" for n, t in enumerate(rec.token_lists()) if t]
    top = 10
    path = os.path.join(out, "retrieval.jsonl")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, ranking in enumerate(result.text_ranking):
            fh.write(json.dumps({"query": pairs.image_ids[i], "kind": "image",
                                 "ranked": [caption_ids[j] for j in ranking[:top]]}) + "\n")
        for j, ranking in enumerate(result.image_ranking):
            fh.write(json.dumps({"query": caption_ids[j], "kind": "caption",
                                 "ranked": [pairs.image_ids[i] for i in ranking[:top]]}) + "\n")
    write_matrix(os.path.join(out, "similarity.bin"), result.similarity, "S",
                 {"rows": "images", "cols": "captions"})
    _emit({"rankings": path, "images": len(pairs.image_ids), "captions": len(caption_ids)})


def cmd_export_concepts(cfg: RunConfig, args) -> None:
    model, train_cfg, records, pairs, gallery = _load_eval_inputs(cfg, args)
    out = _out_dir(cfg)
    Z = model.concepts()
    path = os.path.join(out, "concepts.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "token"] + [f"z{j}" for j in range(Z.shape[1])])
        for i, (tok, row) in enumerate(zip(model.concept_tokens, Z)):
            w.writerow([i, tok] + [f"{x:.6g}" for x in row])
    scores_path = os.path.join(out, "concept_scores.csv")
    image_scores = embed_images(model, pairs.features, Z).scores
    result = retrieve(model, pairs.features, pairs.tokens, gallery, train_cfg.inference.k)
    text_scores = embed_texts(model, pairs.tokens, result.predicted_labels, Z).scores
    ids = [f"image:{i}" for i in pairs.image_ids]
    ids += [f"caption:{pairs.image_ids[pairs.pair_image[j]]}#{j}" for j in range(len(pairs))]
    write_concept_scores(scores_path, ids, np.vstack([image_scores, text_scores]),
                         model.concept_tokens)
    _emit({"concepts": path, "concept_scores": scores_path})


HANDLERS = {
    "build-vocab": cmd_build_vocab,
    "build-graph": cmd_build_graph,
    "train": cmd_train,
    "eval": cmd_eval,
    "retrieve": cmd_retrieve,
    "export-concepts": cmd_export_concepts,
    "gen-synthetic": cmd_gen_synthetic,
}


def _fail(code: str, msg: str, key: str | None = None) -> None:
    text = " ".join(str(msg).split())
    keypart = ""
    if key:
        keypart = f" key={key}"
        text = text.removeprefix(f"{key}: ")
    print(f"error code={code}{keypart} msg={text}", file=sys.stderr)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = os.environ.get("CVSE_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        _fail(exc.code, exc, exc.key)
        return 3
    except CVSEError as exc:
        _fail(exc.code, exc)
        return 1
    except OSError as exc:
        _fail("IO_ERROR", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
