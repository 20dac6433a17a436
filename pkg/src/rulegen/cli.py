"""Command-line surface.

Exit codes: 0 success, 2 validation failure, 3 I/O failure,
4 decode failure, 5 gradient-check exceedance.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .ast_tree import token_yield
from .config import ConfigError, RunConfig
from .data import (
    DatasetError,
    example_from_line,
    load_dataset,
    save_dataset,
    synth_corpus,
)
from .decode import beam_search
from .grammar import GrammarError, grammar_from_json, grammar_to_json, induce_grammar
from .model import Model
from .params import CheckpointError
from .training import evaluate, train

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_DECODE = 4
EXIT_GRADCHECK = 5


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _read_text(path):
    try:
        with open(path, encoding="utf-8") as f:
            return f.read()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e}", EXIT_IO)


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    except OSError as e:
        raise CliError(f"cannot write {path}: {e}", EXIT_IO)


def _load_grammar(path):
    try:
        return grammar_from_json(_read_text(path))
    except (GrammarError, json.JSONDecodeError) as e:
        raise CliError(f"invalid grammar {path}: {e}", EXIT_VALIDATION)


def _load_examples(path):
    if not os.path.exists(path):
        raise CliError(f"no such dataset: {path}", EXIT_IO)
    try:
        return load_dataset(path)
    except DatasetError as e:
        raise CliError(str(e), EXIT_VALIDATION)


def _load_model(args, grammar):
    if not os.path.exists(args.checkpoint):
        raise CliError(f"no such checkpoint: {args.checkpoint}", EXIT_IO)
    try:
        return Model.load(args.checkpoint, grammar)
    except CheckpointError as e:
        raise CliError(str(e), EXIT_VALIDATION)


def cmd_extract_grammar(args):
    examples = _load_examples(args.data)
    try:
        grammar = induce_grammar([ex.ast for ex in examples])
    except GrammarError as e:
        raise CliError(str(e), EXIT_VALIDATION)
    _write_text(args.out, grammar_to_json(grammar))
    print(f"rules {grammar.num_rules}")
    print(f"symbols {len(grammar.symbols)}")
    print(f"scope_vocab {len(grammar.scope_vocab)}")
    return EXIT_OK


def cmd_train(args):
    grammar = _load_grammar(args.grammar)
    train_examples = _load_examples(args.data)
    dev_examples = _load_examples(args.dev) if args.dev else []
    try:
        config = RunConfig.from_json(_read_text(args.config))
    except ConfigError as e:
        raise CliError(str(e), EXIT_VALIDATION)
    result = train(train_examples, dev_examples, grammar, config,
                   out_dir=args.out_dir, log_print=True)
    print(f"updates {result.updates}")
    return EXIT_OK


def _parse_slots(values):
    slots = []
    for item in values or []:
        if "=" not in item:
            raise CliError(f"slot {item!r} must look like name=value",
                           EXIT_VALIDATION)
        name, value = item.split("=", 1)
        slots.append((name, value))
    return slots


def cmd_generate(args):
    grammar = _load_grammar(args.grammar)
    model = _load_model(args, grammar)
    if os.path.exists(args.input):
        line = _read_text(args.input).strip().splitlines()[0]
        try:
            ex = example_from_line(line)
        except (DatasetError, json.JSONDecodeError, ValueError) as e:
            raise CliError(f"invalid input record: {e}", EXIT_VALIDATION)
        description, slots = ex.description, ex.slots
    else:
        description, slots = args.input, _parse_slots(args.slot)
    result = beam_search(model, description, slots, beam_size=args.beam)
    if result.failed:
        raise CliError("decode failure: no complete hypothesis", EXIT_DECODE)
    best = result.hypotheses[0]
    print(" ".join(token_yield(best.ast)))
    if args.show_ast:
        from .data import ast_to_doc

        doc = {
            "ast": ast_to_doc(best.ast),
            "rule_trace": list(best.rule_trace),
            "step_log_probs": result.step_log_probs,
            "log_prob": best.log_prob,
        }
        print(json.dumps(doc, indent=2))
    return EXIT_OK


def cmd_evaluate(args):
    grammar = _load_grammar(args.grammar)
    model = _load_model(args, grammar)
    examples = _load_examples(args.data)
    report = evaluate(model, examples, bypass_gold=args.bypass_gold)
    if args.report:
        _write_text(args.report, json.dumps(report, indent=2) + "\n")
    print(f"str_acc {report['str_acc']:.4f}")
    print(f"bleu {report['bleu']:.4f}")
    return EXIT_OK


def cmd_synth_data(args):
    if args.grammar_size < 1 or args.depth < 0 or args.count < 0:
        raise CliError("sizes must be positive", EXIT_VALIDATION)
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as e:
        raise CliError(f"cannot create {args.out}: {e}", EXIT_IO)
    examples = synth_corpus(num_ops=args.grammar_size, max_depth=args.depth,
                            count=args.count, seed=args.seed)
    save_dataset(examples, os.path.join(args.out, "train.jsonl"))
    if args.test_count:
        test = synth_corpus(num_ops=args.grammar_size, max_depth=args.depth,
                            count=args.test_count, seed=args.seed + 1,
                            value_prefix="tval")
        save_dataset(test, os.path.join(args.out, "test.jsonl"))
    if examples:
        grammar = induce_grammar([ex.ast for ex in examples])
        _write_text(os.path.join(args.out, "grammar.json"),
                    grammar_to_json(grammar))
    print(f"wrote {args.count} examples to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args):
    from .gradcheck import TOLERANCE, run_full_check, run_op_checks

    failures = []
    op_report = run_op_checks(seed=args.seed)
    for name, err in op_report.items():
        status = "ok" if err < TOLERANCE else "FAIL"
        print(f"op {name} {err:.3e} {status}")
        if err >= TOLERANCE:
            failures.append(f"op {name}")
    variants = [("base", {})]
    if args.all_variants:
        from .config import ABLATION_TOGGLES

        variants += [(t, {t: True}) for t in ABLATION_TOGGLES]
    for label, overrides in variants:
        report = run_full_check(dims=args.dims, layers=args.layers,
                                samples_per_tensor=args.samples,
                                seed=args.seed, corrupt=args.corrupt,
                                **overrides)
        worst = max(report.values())
        status = "ok" if worst < TOLERANCE else "FAIL"
        print(f"model[{label}] max {worst:.3e} {status}")
        for name, err in report.items():
            if err >= TOLERANCE:
                failures.append(f"model[{label}] {name}")
                print(f"  {name} {err:.3e} FAIL")
    if failures:
        print(f"gradcheck failed: {len(failures)} group(s) over {TOLERANCE}")
        return EXIT_GRADCHECK
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="rulegen",
        description="Grammar-rule sequence code generation with CNN modules")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("extract-grammar", help="induce a grammar from ASTs")
    g.add_argument("--data", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_extract_grammar)

    t = sub.add_parser("train", help="teacher-forced training")
    t.add_argument("--data", required=True)
    t.add_argument("--dev")
    t.add_argument("--grammar", required=True)
    t.add_argument("--config", required=True)
    t.add_argument("--out-dir", required=True)
    t.set_defaults(fn=cmd_train)

    gen = sub.add_parser("generate", help="decode one description")
    gen.add_argument("--checkpoint", required=True)
    gen.add_argument("--grammar", required=True)
    gen.add_argument("--input", required=True,
                     help="description text or path to a one-record file")
    gen.add_argument("--beam", type=int, default=None)
    gen.add_argument("--slot", action="append",
                     help="name=value, repeatable (text input only)")
    gen.add_argument("--show-ast", action="store_true")
    gen.set_defaults(fn=cmd_generate)

    ev = sub.add_parser("evaluate", help="score a dataset")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--grammar", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--report")
    ev.add_argument("--bypass-gold", action="store_true",
                    help="score gold ASTs against themselves")
    ev.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("synth-data", help="emit a toy grammar and corpus")
    s.add_argument("--grammar-size", type=int, default=3)
    s.add_argument("--depth", type=int, default=2)
    s.add_argument("--count", type=int, default=20)
    s.add_argument("--test-count", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth_data)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient check")
    gc.add_argument("--dims", type=int, default=4)
    gc.add_argument("--layers", type=int, default=3)
    gc.add_argument("--samples", type=int, default=4,
                    help="entries checked per tensor; 0 = exhaustive")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--all-variants", action="store_true",
                    help="also check every ablation toggle one at a time")
    gc.add_argument("--corrupt", action="store_true",
                    help="fault-injection hook: corrupt one gradient")
    gc.set_defaults(fn=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
