"""Grammar induction from AST corpora and the rule inventory.

Rules are the decoder's prediction alphabet: one rule per distinct
(lhs, rhs-symbol-sequence) pair observed in the training trees, plus
one terminal-production rule per distinct (lhs, terminal value). A
list-valued construct observed with different child counts yields one
rule per length. Rule ids follow first occurrence over a pre-order
sweep of the corpus in input order, so induction is deterministic.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

NONTERMINAL = "nonterminal"
TERMINAL = "terminal"

STRUCTURAL = "structural"
VARIABLE = "variable"
FUNCTION_NAME = "function_name"

NODE_CLASSES = (STRUCTURAL, VARIABLE, FUNCTION_NAME)

# Reserved terminal symbol for copy-produced leaves whose lhs has no
# observed terminal rule.
COPY_TERMINAL_NAME = "<tok>"


class GrammarError(ValueError):
    pass


class StructuralInputError(GrammarError):
    """Malformed input tree; the message names the offending node path."""


class UncoverableSymbolError(GrammarError):
    """A nonterminal with no rule to expand it."""


class IllegalApplicationError(GrammarError):
    """Rule lhs does not match the frontier symbol."""


class CompleteTreeError(GrammarError):
    """Operation needs a frontier but the tree is complete."""


class MissingRuleError(GrammarError):
    """A gold expansion has no corresponding rule in the grammar."""


@dataclass(frozen=True)
class Symbol:
    name: str
    kind: str  # NONTERMINAL | TERMINAL
    node_class: str = STRUCTURAL

    def __post_init__(self):
        if not self.name:
            raise GrammarError("empty symbol name")
        if self.kind not in (NONTERMINAL, TERMINAL):
            raise GrammarError(f"bad symbol kind {self.kind!r}")
        if self.node_class not in NODE_CLASSES:
            raise GrammarError(f"bad node class {self.node_class!r}")


@dataclass(frozen=True)
class GrammarRule:
    id: int
    lhs: Symbol
    rhs: tuple  # tuple[Symbol, ...]
    terminal_value: str | None = None

    def __post_init__(self):
        if self.lhs.kind != NONTERMINAL:
            raise GrammarError(f"terminal lhs {self.lhs.name!r}")
        if not self.rhs:
            raise GrammarError("empty rhs")
        is_term_prod = len(self.rhs) == 1 and self.rhs[0].kind == TERMINAL
        if (self.terminal_value is not None) != is_term_prod:
            raise GrammarError(
                "terminal_value must be set iff rhs is a single terminal")

    @property
    def key(self):
        return (self.lhs.name, tuple(s.name for s in self.rhs),
                self.terminal_value)


class Grammar:
    """Immutable after construction; safe for shared reads."""

    def __init__(self, rules, symbols, scope_vocab=(), scope_symbols=(),
                 start_symbol=None):
        self.rules: list[GrammarRule] = list(rules)
        self.symbols: dict[str, Symbol] = dict(symbols)
        self.scope_vocab: list[str] = list(scope_vocab)
        self.scope_symbols: frozenset[str] = frozenset(scope_symbols)
        self.start_symbol: Symbol | None = start_symbol
        self._by_key = {}
        lhs_index: dict[str, list[int]] = {}
        for i, r in enumerate(self.rules):
            if r.id != i:
                raise GrammarError(f"non-dense rule id {r.id} at position {i}")
            lhs_index.setdefault(r.lhs.name, []).append(r.id)
            self._by_key[r.key] = r.id
            for s in (r.lhs,) + r.rhs:
                if s.name not in self.symbols:
                    raise GrammarError(f"rule uses unknown symbol {s.name!r}")
        self.lhs_index: dict[str, tuple] = {
            k: tuple(v) for k, v in lhs_index.items()}

    @property
    def num_rules(self) -> int:
        return len(self.rules)

    def rule_id(self, lhs_name, rhs_names, terminal_value=None):
        return self._by_key.get((lhs_name, tuple(rhs_names), terminal_value))

    def symbol_order(self):
        """Symbol names in a stable, serialization-defining order."""
        return list(self.symbols)


def _walk(node, path, visit):
    visit(node, path)
    for i, child in enumerate(node.children):
        _walk(child, path + (i,), visit)


def _validate_node(node, path):
    has_value = node.terminal_value is not None
    if has_value and node.children:
        raise StructuralInputError(
            f"node at {list(path)} has both a terminal value and children")
    if has_value and node.symbol.kind != TERMINAL:
        raise StructuralInputError(
            f"node at {list(path)} carries a value on a nonterminal symbol")
    if node.symbol.kind == TERMINAL and not has_value:
        raise StructuralInputError(
            f"terminal node at {list(path)} is missing its value")
    if node.children:
        term_children = [c for c in node.children
                         if c.symbol.kind == TERMINAL]
        if term_children and len(node.children) != 1:
            raise StructuralInputError(
                f"node at {list(path)} mixes terminal leaves with siblings")


def validate_tree(root):
    _walk(root, (), _validate_node)


def induce_grammar(corpus) -> "Grammar":
    """Collect every observed expansion over a pre-order sweep.

    Also records scope names seen on nodes and which symbols introduce
    them, for the scope-controller vocabulary.
    """
    corpus = list(corpus)
    if not corpus:
        raise StructuralInputError("empty induction corpus")

    symbols: dict[str, Symbol] = {}
    rules: list[GrammarRule] = []
    seen_keys: dict[tuple, int] = {}
    scope_vocab: list[str] = []
    scope_seen = set()
    scope_symbols = set()

    def intern(sym: Symbol, path):
        prev = symbols.get(sym.name)
        if prev is None:
            symbols[sym.name] = sym
            return sym
        if prev != sym:
            raise StructuralInputError(
                f"symbol {sym.name!r} redeclared inconsistently at {list(path)}")
        return prev

    def visit(node, path):
        _validate_node(node, path)
        intern(node.symbol, path)
        if node.scope_name is not None:
            scope_symbols.add(node.symbol.name)
            if node.scope_name not in scope_seen:
                scope_seen.add(node.scope_name)
                scope_vocab.append(node.scope_name)
        if not node.children:
            return
        rhs = tuple(intern(c.symbol, path + (i,))
                    for i, c in enumerate(node.children))
        value = None
        if len(node.children) == 1 and node.children[0].symbol.kind == TERMINAL:
            value = node.children[0].terminal_value
        key = (node.symbol.name, tuple(s.name for s in rhs), value)
        if key not in seen_keys:
            rid = len(rules)
            seen_keys[key] = rid
            rules.append(GrammarRule(rid, node.symbol, rhs, value))

    for tree in corpus:
        _walk(tree, (), visit)

    return Grammar(rules, symbols, scope_vocab, scope_symbols,
                   start_symbol=corpus[0].symbol)


def valid_rule_mask(g: Grammar, frontier_symbol: Symbol) -> np.ndarray:
    if frontier_symbol.kind != NONTERMINAL:
        raise GrammarError(f"{frontier_symbol.name!r} is not a nonterminal")
    ids = g.lhs_index.get(frontier_symbol.name)
    if not ids:
        raise UncoverableSymbolError(
            f"no rules expand symbol {frontier_symbol.name!r}")
    mask = np.zeros(g.num_rules, dtype=bool)
    mask[list(ids)] = True
    return mask


def copy_terminal_symbol(g: Grammar, lhs: Symbol) -> Symbol:
    """Terminal symbol to use for a copy-produced leaf under ``lhs``.

    Reuses the symbol of the lhs's first terminal rule when one exists,
    otherwise a reserved token symbol.
    """
    for rid in g.lhs_index.get(lhs.name, ()):
        r = g.rules[rid]
        if r.terminal_value is not None:
            return r.rhs[0]
    return Symbol(COPY_TERMINAL_NAME, TERMINAL)


GRAMMAR_VERSION = 1


def grammar_to_json(g: Grammar) -> str:
    doc = {
        "version": GRAMMAR_VERSION,
        "start": g.start_symbol.name if g.start_symbol else None,
        "symbols": [
            {"name": s.name, "kind": s.kind, "node_class": s.node_class}
            for s in g.symbols.values()
        ],
        "rules": [
            {
                "id": r.id,
                "lhs": r.lhs.name,
                "rhs": [s.name for s in r.rhs],
                **({"terminal": r.terminal_value}
                   if r.terminal_value is not None else {}),
            }
            for r in g.rules
        ],
        "scope_vocab": g.scope_vocab,
        "scope_symbols": sorted(g.scope_symbols),
    }
    return json.dumps(doc, indent=2) + "\n"


def grammar_from_json(text: str) -> Grammar:
    doc = json.loads(text)
    if doc.get("version") != GRAMMAR_VERSION:
        raise GrammarError(f"unsupported grammar version {doc.get('version')}")
    symbols = {
        e["name"]: Symbol(e["name"], e["kind"], e.get("node_class", STRUCTURAL))
        for e in doc["symbols"]
    }
    rules = [
        GrammarRule(
            e["id"], symbols[e["lhs"]],
            tuple(symbols[n] for n in e["rhs"]),
            e.get("terminal"),
        )
        for e in doc["rules"]
    ]
    start = symbols.get(doc.get("start")) if doc.get("start") else None
    return Grammar(rules, symbols, doc.get("scope_vocab", ()),
                   doc.get("scope_symbols", ()), start_symbol=start)
