"""Operator entry points: ingest | extract | train | generate | trace |
eval | synth | serve.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import config as config_mod
from . import kg as kg_mod
from . import synth as synth_mod
from . import training as training_mod
from .config import ConfigError
from .context_encoder import Tokenizer
from .grounding import EmptyGrounding, Lexicons, Lemmatizer, load_pos_lexicon
from .kg import KGError
from .model import Model, ModelConfig
from .pipeline import GenerationBundle, evaluate_files, run_config_extraction

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class DataError(Exception):
    pass


def _read_lines(path: str) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return [line.rstrip("\n") for line in fh if line.strip()]
    except OSError as e:
        raise DataError(str(e))


def _load_config(args) -> config_mod.RunConfig:
    cfg = config_mod.load(getattr(args, "config", None))
    overrides = {
        "extraction.hops": getattr(args, "hops", None),
        "extraction.top_b": getattr(args, "top_b", None),
        "flow.gamma": getattr(args, "gamma", None),
        "flow.aggregator": getattr(args, "aggregator", None),
        "train.alpha": getattr(args, "alpha", None),
        "train.beta": getattr(args, "beta", None),
        "train.lr0": getattr(args, "lr", None),
        "train.total_steps": getattr(args, "steps", None),
        "train.batch_size": getattr(args, "batch_size", None),
        "train.seed": getattr(args, "seed", None),
        "generate.beam": getattr(args, "beam", None),
        "generate.max_len": getattr(args, "max_len", None),
    }
    if getattr(args, "no_pos_filter", False):
        overrides["extraction.pos_filter"] = False
    return config_mod.apply_overrides(cfg, overrides)


def _lexicons(args) -> Lexicons:
    table = None
    if getattr(args, "lemma_table", None):
        table = {}
        for line in _read_lines(args.lemma_table):
            if line.startswith("#"):
                continue
            word, lemma = line.split("\t")
            table[word] = lemma
    pos = load_pos_lexicon(getattr(args, "pos_lexicon", None))
    stop = kg_mod.load_stopwords(getattr(args, "stopwords", None))
    return Lexicons(lemmatizer=Lemmatizer(table) if table is not None else Lemmatizer(),
                    pos=pos, stopwords=stop)


# -- commands -------------------------------------------------------------


def cmd_ingest(args) -> int:
    rel_map = kg_mod.load_relation_map(args.relation_map)
    stop = kg_mod.load_stopwords(args.stopwords)
    lemmatizer = Lemmatizer()
    options = kg_mod.IngestOptions(stopwords=stop, lemmatize=lemmatizer)
    graph = kg_mod.ingest_file(args.assertions, rel_map, options,
                               skip_report_path=args.skip_report)
    kg_mod.save(graph, args.out)
    print("ingested %d concepts, %d stored edges -> %s"
          % (len(graph.concepts), graph.triple_count(), args.out))
    return 0


def cmd_extract(args) -> int:
    cfg = _load_config(args)
    graph = kg_mod.load(args.graph)
    lex = _lexicons(args)
    ext = run_config_extraction(cfg)
    from .grounding import extract_subgraph, match_concepts
    with open(args.out, "w", encoding="utf-8") as out:
        for line in _read_lines(args.input):
            mentions = match_concepts(line.lower().split(), graph, lex,
                                      pos_filter=ext.pos_filter)
            sources = {m.concept for m in mentions}
            try:
                sub = extract_subgraph(graph, sources, ext)
            except EmptyGrounding:
                out.write(json.dumps({"error": "empty grounding", "text": line}) + "\n")
                continue
            out.write(json.dumps(sub.to_json()) + "\n")
    return 0


def _prepare_dataset(rows, graph, tokenizer, lex, ext):
    data = []
    skipped = 0
    for row in rows:
        try:
            data.append(training_mod.prepare_example(
                row["src"], row["tgt"], graph, tokenizer, lex, ext))
        except EmptyGrounding:
            skipped += 1
    if skipped:
        print("skipped %d examples with empty grounding" % skipped, file=sys.stderr)
    if not data:
        raise DataError("no trainable examples after grounding")
    return data


def cmd_train(args) -> int:
    cfg = _load_config(args)
    graph = kg_mod.load(args.graph)
    lex = _lexicons(args)
    ext = run_config_extraction(cfg)
    rows = training_mod.load_dataset(args.data)
    texts = [r["src"] for r in rows] + [r["tgt"] for r in rows]
    tokenizer = Tokenizer.from_corpus(texts)
    os.makedirs(args.out_dir, exist_ok=True)

    mc = ModelConfig(vocab_size=tokenizer.vocab_size,
                     num_relation_codes=graph.num_relation_codes,
                     d_model=cfg.model.d_model, n_heads=cfg.model.n_heads,
                     n_layers=cfg.model.n_layers, d_ff=cfg.model.d_ff,
                     max_len=cfg.model.max_len, d_g=cfg.model.d_g,
                     gnn_layers=cfg.model.gnn_layers, gamma=cfg.flow.gamma,
                     aggregator=cfg.flow.aggregator, flow_hops=cfg.flow.hops)
    tc = training_mod.TrainConfig(alpha=cfg.train.alpha, beta=cfg.train.beta,
                                  lr0=cfg.train.lr0, total_steps=cfg.train.total_steps,
                                  batch_size=cfg.train.batch_size, seed=cfg.train.seed,
                                  checkpoint_every=cfg.train.checkpoint_every)
    model = Model(mc, tokenizer, rng=np.random.default_rng(cfg.train.seed))
    dataset = _prepare_dataset(rows, graph, tokenizer, lex, ext)

    with open(os.path.join(args.out_dir, "effective_config.json"), "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
    training_mod.train(model, dataset, tc,
                       log_path=os.path.join(args.out_dir, "train_log.csv"),
                       checkpoint_prefix=os.path.join(args.out_dir, "ckpt"))
    final = os.path.join(args.out_dir, "final.ckpt")
    training_mod.save_checkpoint(model, final, extra={"config": cfg.to_dict()})
    if args.dev:
        dev = _prepare_dataset(training_mod.load_dataset(args.dev),
                               graph, tokenizer, lex, ext)
        report = training_mod.evaluate(model, dev)
        print("dev nll/token %.4f, accuracy %.3f"
              % (report["nll_per_token"], report["token_accuracy"]))
    print("saved %s" % final)
    return 0


def _bundle(args) -> GenerationBundle:
    cfg = _load_config(args)
    return GenerationBundle.load(args.checkpoint, args.graph,
                                 lexicons=_lexicons(args),
                                 extraction=run_config_extraction(cfg))


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    bundle = _bundle(args)
    lines = _read_lines(args.input)
    out_fh = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for line in lines:
            hyps = bundle.generate(line, beam=cfg.generate.beam,
                                   max_len=cfg.generate.max_len)
            if args.nbest:
                for rank, h in enumerate(hyps, start=1):
                    out_fh.write("%d\t%.6f\t%s\n"
                                 % (rank, h.logprob, bundle.hypothesis_text(h)))
            else:
                out_fh.write(bundle.hypothesis_text(hyps[0]) + "\n")
    finally:
        if args.out:
            out_fh.close()
            with open(args.out + ".config.json", "w") as fh:
                json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
    return 0


def cmd_trace(args) -> int:
    cfg = _load_config(args)
    bundle = _bundle(args)
    for line in _read_lines(args.input):
        records = bundle.trace(line, top_k=args.top_k, max_len=cfg.generate.max_len)
        for rec in records:
            print("# step %d token=%s gate=%.4f"
                  % (rec["step"], rec["token"], rec["gate"]))
            if rec["paths"]:
                print(rec["paths"])
    return 0


def cmd_eval(args) -> int:
    report = evaluate_files(_read_lines(args.hyp), _read_lines(args.ref),
                            bleu_orders=tuple(args.bleu), distinct_orders=tuple(args.distinct))
    for name in sorted(report):
        print("%s\t%.6f" % (name, report[name]))
    return 0


def cmd_synth(args) -> int:
    corpus = synth_mod.generate(args.seed, n_train=args.train_n, n_dev=args.dev_n)
    paths = synth_mod.write(corpus, args.out_dir)
    print("wrote %s" % json.dumps(paths, indent=2, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    import uvicorn
    from .service import create_app
    app = create_app(checkpoint_path=args.checkpoint, graph_path=args.graph,
                     config_path=getattr(args, "config", None))
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hopgen",
                                description="knowledge-grounded generation pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, config=True):
        if config:
            sp.add_argument("--config", help="JSON run config")
        sp.add_argument("--stopwords", help="stop-word list file")
        sp.add_argument("--lemma-table", dest="lemma_table", help="word<TAB>lemma file")
        sp.add_argument("--pos-lexicon", dest="pos_lexicon", help="lemma<TAB>pos file")
        sp.add_argument("--no-pos-filter", dest="no_pos_filter", action="store_true")

    sp = sub.add_parser("ingest", help="build a binary graph from a triple dump")
    sp.add_argument("--assertions", required=True)
    sp.add_argument("--relation-map", dest="relation_map")
    sp.add_argument("--stopwords")
    sp.add_argument("--out", required=True)
    sp.add_argument("--skip-report", dest="skip_report")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("extract", help="extract subgraphs for input lines")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--hops", type=int)
    sp.add_argument("--top-b", dest="top_b", type=int)
    add_common(sp)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("train", help="train on a JSONL parallel corpus")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--dev")
    sp.add_argument("--out-dir", dest="out_dir", required=True)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--aggregator", choices=["max", "mean"])
    sp.add_argument("--hops", type=int)
    sp.add_argument("--top-b", dest="top_b", type=int)
    add_common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("generate", help="decode hypotheses for input lines")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--graph", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--out")
    sp.add_argument("--beam", type=int)
    sp.add_argument("--max-len", dest="max_len", type=int)
    sp.add_argument("--nbest", action="store_true")
    add_common(sp)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("trace", help="show reasoning paths and gate per step")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--graph", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--top-k", dest="top_k", type=int, default=3)
    sp.add_argument("--max-len", dest="max_len", type=int)
    add_common(sp)
    sp.set_defaults(func=cmd_trace)

    sp = sub.add_parser("eval", help="BLEU / Distinct over hypothesis+reference files")
    sp.add_argument("--hyp", required=True)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--bleu", type=int, nargs="+", default=[1, 2])
    sp.add_argument("--distinct", type=int, nargs="+", default=[2, 3])
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("synth", help="write a synthetic KG + corpus")
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--out-dir", dest="out_dir", required=True)
    sp.add_argument("--train-n", dest="train_n", type=int, default=64)
    sp.add_argument("--dev-n", dest="dev_n", type=int, default=32)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--graph", required=True)
    sp.add_argument("--config")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError, KGError, ValueError, OSError,
            json.JSONDecodeError, KeyError) as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_DATA
    except (training_mod.TrainingDiverged, FloatingPointError) as e:
        print("numeric failure: %s" % e, file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
