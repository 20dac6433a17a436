#!/usr/bin/env python3
"""Regenerate the committed test fixtures with independent oracles.

Deliberately avoids the rulegen package: the grammar manifest comes
from a standalone brute-force sweep over the fixture trees, and the
BLEU reference values come from a from-scratch reimplementation of the
metric definition. The test suite compares library output against the
files this script writes.
"""
import json
import math
import os

HERE = os.path.dirname(os.path.abspath(__file__))
FIXTURES = os.path.join(HERE, "..", "tests", "fixtures")


def t(symbol, value, node_class=None):
    doc = {"symbol": symbol, "children": [{"symbol": "tok", "terminal": value}]}
    if node_class:
        doc["node_class"] = node_class
    return doc


def stmt(child):
    return {"symbol": "A", "children": [child]}


def prog(fn, stmts):
    return {
        "symbol": "S",
        "scope": fn,
        "children": [
            t("F", fn, "function_name"),
            {"symbol": "B", "children": stmts},
        ],
    }


def var(value):
    return stmt(t("V", value, "variable"))


def call():
    return stmt(t("C", "pass"))


TREES = [
    prog("init", [var("a")]),
    prog("update", [var("a"), call()]),
    prog("init", [var("b"), var("a"), call()]),
    prog("run", [call()]),
    prog("update", [var("x")]),
    prog("run", [var("b"), var("x")]),
]


def describe(tree):
    """Deterministic description: fn name then one token per statement."""
    fn = tree["children"][0]["children"][0]["terminal"]
    toks = [fn]
    for s in tree["children"][1]["children"]:
        leaf = s["children"][0]
        kind = leaf["symbol"].lower()
        toks.append(kind)
        if leaf["symbol"] == "V":
            toks.append(leaf["children"][0]["terminal"])
    return " ".join(toks)


def first_var(tree):
    for s in tree["children"][1]["children"]:
        leaf = s["children"][0]
        if leaf["symbol"] == "V":
            return leaf["children"][0]["terminal"]
    return None


def write_trees():
    lines = []
    for i, tree in enumerate(TREES):
        v = first_var(tree)
        rec = {
            "id": f"fix{i}",
            "description": describe(tree),
            "slots": [{"name": "arg", "value": v}] if v else [],
            "ast": tree,
        }
        lines.append(json.dumps(rec, sort_keys=True))
    with open(os.path.join(FIXTURES, "six_trees.jsonl"), "w") as f:
        f.write("\n".join(lines) + "\n")


def sweep_rules():
    """Brute-force rule sweep: first-occurrence ids over pre-order."""
    rules = []
    seen = {}
    lhs_counts = {}
    scopes = []

    def walk(node):
        if node.get("scope") and node["scope"] not in scopes:
            scopes.append(node["scope"])
        children = node.get("children", [])
        if not children:
            return
        rhs = tuple(c["symbol"] for c in children)
        value = None
        if len(children) == 1 and "terminal" in children[0]:
            value = children[0]["terminal"]
        key = (node["symbol"], rhs, value)
        if key not in seen:
            seen[key] = len(rules)
            rules.append({
                "id": len(rules),
                "lhs": node["symbol"],
                "rhs": list(rhs),
                "terminal": value,
            })
            lhs_counts[node["symbol"]] = lhs_counts.get(node["symbol"], 0) + 1
        for c in children:
            walk(c)

    for tree in TREES:
        walk(tree)
    # cross-check the count against an order-free sorted set
    assert len({(r["lhs"], tuple(r["rhs"]), r["terminal"])
                for r in rules}) == len(rules)
    return rules, lhs_counts, scopes


def write_manifest():
    rules, lhs_counts, scopes = sweep_rules()
    doc = {
        "rule_count": len(rules),
        "rules": rules,
        "lhs_counts": lhs_counts,
        "scope_vocab": scopes,
        "start": "S",
    }
    with open(os.path.join(FIXTURES, "manifest.json"), "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


# --- reference BLEU ------------------------------------------------------

def ref_bleu(cands, refs):
    """Corpus BLEU-4, pooled counts, add-one smoothing for n >= 2,
    brevity penalty. Written independently of the library (per-pair
    dict building, fraction accumulation in plain floats)."""
    clen = sum(len(c) for c in cands)
    rlen = sum(len(r) for r in refs)
    if clen == 0:
        return 0.0
    log_prec = []
    for n in (1, 2, 3, 4):
        hit = tot = 0
        for cand, ref in zip(cands, refs):
            cn = {}
            for i in range(len(cand) - n + 1):
                gram = tuple(cand[i:i + n])
                cn[gram] = cn.get(gram, 0) + 1
            rn = {}
            for i in range(len(ref) - n + 1):
                gram = tuple(ref[i:i + n])
                rn[gram] = rn.get(gram, 0) + 1
            for gram, c in cn.items():
                tot += c
                hit += min(c, rn.get(gram, 0))
        if n >= 2:
            hit += 1
            tot += 1
        if hit == 0 or tot == 0:
            return 0.0
        log_prec.append(math.log(hit / tot))
    bp = 1.0 if clen > rlen else math.exp(1.0 - rlen / clen)
    return bp * math.exp(sum(log_prec) / 4.0)


BLEU_PAIRS = [
    (["the", "cat", "sat", "on", "the", "mat"],
     ["the", "cat", "sat", "on", "a", "mat"]),
    (["return", "self", "health"],
     ["return", "self", "health"]),
    (["if", "x", "then", "y"],
     ["if", "x", "then", "y", "else", "z"]),
]


def write_bleu_fixture():
    cands = [c for c, _ in BLEU_PAIRS]
    refs = [r for _, r in BLEU_PAIRS]
    matches = sum(1 for c, r in BLEU_PAIRS if c == r)
    doc = {
        "pairs": [{"candidate": c, "reference": r} for c, r in BLEU_PAIRS],
        "bleu": ref_bleu(cands, refs),
        "string_accuracy": matches / len(BLEU_PAIRS),
        "per_pair_bleu": [ref_bleu([c], [r]) for c, r in BLEU_PAIRS],
    }
    with open(os.path.join(FIXTURES, "bleu_fixture.json"), "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


if __name__ == "__main__":
    os.makedirs(FIXTURES, exist_ok=True)
    write_trees()
    write_manifest()
    write_bleu_fixture()
    print(f"fixtures written to {os.path.normpath(FIXTURES)}")
