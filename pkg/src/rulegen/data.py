"""Dataset interchange records, the AST document codec, random tree
sampling, and the synthetic corpus generator used for desk-scale
experiments.

A dataset is one JSON record per line:
    {"id", "description", "slots": [{"name", "value"}...], "ast": {...}}
with AST nodes {"symbol", "node_class"?, "terminal"?, "scope"?,
"children": [...]}; a node is a terminal leaf iff "terminal" is present.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .ast_tree import AstNode, PartialAst, apply_rule
from .grammar import (
    FUNCTION_NAME,
    Grammar,
    NONTERMINAL,
    STRUCTURAL,
    Symbol,
    TERMINAL,
    VARIABLE,
    validate_tree,
)


class DatasetError(ValueError):
    pass


@dataclass
class Example:
    id: str
    description: str
    slots: list  # list[tuple[str, str]], order significant
    ast: AstNode

    def slot_values(self):
        return [v for _, v in self.slots]


def ast_to_doc(node: AstNode) -> dict:
    doc = {"symbol": node.symbol.name}
    if node.symbol.kind == TERMINAL:
        doc["terminal"] = node.terminal_value
    else:
        if node.symbol.node_class != STRUCTURAL:
            doc["node_class"] = node.symbol.node_class
        if node.scope_name is not None:
            doc["scope"] = node.scope_name
        doc["children"] = [ast_to_doc(c) for c in node.children]
    return doc


def ast_from_doc(doc: dict) -> AstNode:
    if not isinstance(doc, dict) or "symbol" not in doc:
        raise DatasetError("AST node must be an object with a 'symbol'")
    name = doc["symbol"]
    if "terminal" in doc:
        if doc.get("children"):
            raise DatasetError(f"terminal node {name!r} with children")
        return AstNode(Symbol(name, TERMINAL), doc["terminal"])
    sym = Symbol(name, NONTERMINAL, doc.get("node_class", STRUCTURAL))
    children = tuple(ast_from_doc(c) for c in doc.get("children", []))
    return AstNode(sym, None, children, doc.get("scope"))


def example_to_line(ex: Example) -> str:
    doc = {
        "id": ex.id,
        "description": ex.description,
        "slots": [{"name": n, "value": v} for n, v in ex.slots],
        "ast": ast_to_doc(ex.ast),
    }
    return json.dumps(doc, sort_keys=True)


def example_from_line(line: str) -> Example:
    doc = json.loads(line)
    for key in ("id", "description", "ast"):
        if key not in doc:
            raise DatasetError(f"record missing {key!r}")
    slots = [(s["name"], s["value"]) for s in doc.get("slots", [])]
    names = [n for n, _ in slots]
    if len(set(names)) != len(names):
        raise DatasetError(f"record {doc['id']!r} has duplicate slot names")
    ast = ast_from_doc(doc["ast"])
    validate_tree(ast)
    return Example(doc["id"], doc["description"], slots, ast)


def load_dataset(path) -> list:
    examples = []
    ids = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                ex = example_from_line(line)
            except (json.JSONDecodeError, DatasetError, ValueError) as e:
                raise DatasetError(f"{path}:{lineno}: {e}") from e
            if ex.id in ids:
                raise DatasetError(f"{path}:{lineno}: duplicate id {ex.id!r}")
            ids.add(ex.id)
            examples.append(ex)
    if not examples:
        raise DatasetError(f"{path}: empty dataset")
    return examples


def save_dataset(examples, path):
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(example_to_line(ex) + "\n")


def _min_heights(g: Grammar):
    """Min derivation height per rule, for bounded random sampling."""
    sym_h = {name: (0 if s.kind == TERMINAL else None)
             for name, s in g.symbols.items()}
    rule_h = {r.id: None for r in g.rules}
    changed = True
    while changed:
        changed = False
        for r in g.rules:
            hs = [sym_h[s.name] for s in r.rhs]
            if any(h is None for h in hs):
                continue
            h = 1 + max(hs)
            if rule_h[r.id] is None or h < rule_h[r.id]:
                rule_h[r.id] = h
                changed = True
            cur = sym_h[r.lhs.name]
            if cur is None or h < cur:
                sym_h[r.lhs.name] = h
                changed = True
    return rule_h


def random_tree(g: Grammar, rng, max_depth=8, start=None) -> AstNode:
    """Sample a complete tree by random rule choice; beyond max_depth the
    minimum-height rule for the frontier symbol is forced."""
    start = start or g.start_symbol
    rule_h = _min_heights(g)
    t = PartialAst.from_root(AstNode(start))
    while t.frontier_path is not None:
        depth = len(t.frontier_path)
        ids = list(g.lhs_index[t.frontier.symbol.name])
        if depth >= max_depth:
            best = min(rule_h[i] for i in ids if rule_h[i] is not None)
            ids = [i for i in ids if rule_h[i] == best]
        rid = ids[int(rng.integers(len(ids)))]
        t = apply_rule(t, g.rules[rid], g.scope_symbols)
    return t.root


# --- synthetic corpus ----------------------------------------------------

_T = Symbol("tok", TERMINAL)


def _term(nonterminal: Symbol, value: str, scope=None) -> AstNode:
    return AstNode(nonterminal, None, (AstNode(_T, value),), scope)


def synth_corpus(num_ops=3, max_depth=2, count=20, seed=0,
                 value_prefix="val", value_base=0):
    """Deterministic toy corpus: the description spells out the
    derivation token by token, so a correct model can reach 100%.

    Trees are S(F(fn), E(...chain of decorations...), V(slot value));
    the V leaf equals the example's single slot value, exercising the
    copy mechanism.
    """
    rng = np.random.default_rng(seed)
    s_sym = Symbol("S", NONTERMINAL, STRUCTURAL)
    f_sym = Symbol("F", NONTERMINAL, FUNCTION_NAME)
    e_sym = Symbol("E", NONTERMINAL, STRUCTURAL)
    w_sym = Symbol("W", NONTERMINAL, VARIABLE)
    v_sym = Symbol("V", NONTERMINAL, VARIABLE)
    d_syms = [Symbol(f"D{i}", NONTERMINAL, VARIABLE) for i in range(num_ops)]

    fn_pool = [f"fn{j}" for j in range(3)]
    w_pool = [f"w{j}" for j in range(min(max(num_ops, 2), 6))]

    examples = []
    for n in range(count):
        fn = fn_pool[int(rng.integers(len(fn_pool)))]
        depth = int(rng.integers(0, max_depth + 1))
        ops = [int(rng.integers(num_ops)) for _ in range(depth)]
        wj = w_pool[int(rng.integers(len(w_pool)))]
        value = f"{value_prefix}{value_base + n}"

        expr = _term(w_sym, wj)
        expr = AstNode(e_sym, None, (expr,))
        for i in reversed(ops):
            deco = _term(d_syms[i], f"d{i}")
            expr = AstNode(e_sym, None, (deco, expr))
        tree = AstNode(
            s_sym, None,
            (_term(f_sym, fn), expr, _term(v_sym, value)),
            scope_name=fn,
        )
        desc_tokens = [fn] + [f"d{i}" for i in ops] + [wj, "name", value]
        examples.append(Example(
            id=f"syn{value_base + n}",
            description=" ".join(desc_tokens),
            slots=[("name", value)],
            ast=tree,
        ))
    return examples
