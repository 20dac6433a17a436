"""Partial ASTs and the structural views the decoder consumes.

A tree is immutable; expansion returns a fresh tree sharing untouched
subtrees. The frontier is the first unexpanded nonterminal in
depth-first pre-order, addressed by its child-index path from the root.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .grammar import (
    CompleteTreeError,
    FUNCTION_NAME,
    Grammar,
    GrammarRule,
    IllegalApplicationError,
    MissingRuleError,
    NONTERMINAL,
    STRUCTURAL,
    Symbol,
    TERMINAL,
    validate_tree,
)

PHD_SYMBOL = Symbol("<phd>", NONTERMINAL, STRUCTURAL)
VISIT = "visit"
BACKTRACK = "backtrack"


class DerivationError(ValueError):
    pass


class IncompleteDerivationError(DerivationError):
    """Rule sequence ended while a frontier remained."""


class OverlongDerivationError(DerivationError):
    """Rules left over after the tree completed."""


@dataclass(frozen=True)
class AstNode:
    symbol: Symbol
    terminal_value: str | None = None
    children: tuple = ()
    scope_name: str | None = None

    @property
    def is_terminal(self) -> bool:
        return self.symbol.kind == TERMINAL

    @property
    def expanded(self) -> bool:
        return bool(self.children) or self.is_terminal


@dataclass(frozen=True)
class TraversalUnit:
    node: AstNode
    flag: str  # VISIT | BACKTRACK


def find_frontier(root: AstNode):
    """Path of the first pre-order unexpanded nonterminal, or None."""
    stack = [(root, ())]
    while stack:
        node, path = stack.pop()
        if node.symbol.kind == NONTERMINAL and not node.children:
            return path
        for i in range(len(node.children) - 1, -1, -1):
            stack.append((node.children[i], path + (i,)))
    return None


@dataclass(frozen=True)
class PartialAst:
    root: AstNode
    frontier_path: tuple | None

    @classmethod
    def from_root(cls, root: AstNode) -> "PartialAst":
        return cls(root, find_frontier(root))

    @property
    def complete(self) -> bool:
        return self.frontier_path is None

    def node_at(self, path) -> AstNode:
        node = self.root
        for i in path:
            node = node.children[i]
        return node

    @property
    def frontier(self) -> AstNode | None:
        if self.frontier_path is None:
            return None
        return self.node_at(self.frontier_path)


def node_count(root: AstNode) -> int:
    return 1 + sum(node_count(c) for c in root.children)


def trees_equal(a: AstNode, b: AstNode, compare_scopes=False) -> bool:
    """Structural equality; scope names are metadata unless asked for."""
    if a.symbol != b.symbol or a.terminal_value != b.terminal_value:
        return False
    if compare_scopes and a.scope_name != b.scope_name:
        return False
    if len(a.children) != len(b.children):
        return False
    return all(trees_equal(x, y, compare_scopes)
               for x, y in zip(a.children, b.children))


def token_yield(root: AstNode) -> list:
    """In-order terminal values; the textual projection of a tree."""
    out = []

    def walk(node):
        if node.terminal_value is not None:
            out.append(node.terminal_value)
        for c in node.children:
            walk(c)

    walk(root)
    return out


def _next_frontier_after(root: AstNode, path):
    """First unexpanded nonterminal at or under ``path``, else the next
    one in pre-order after it."""
    sub = find_frontier_in(root, path)
    if sub is not None:
        return sub
    # Walk up, scanning later siblings' subtrees.
    while path:
        parent_path, idx = path[:-1], path[-1]
        parent = root
        for i in parent_path:
            parent = parent.children[i]
        for j in range(idx + 1, len(parent.children)):
            sub = find_frontier_in(root, parent_path + (j,))
            if sub is not None:
                return sub
        path = parent_path
    return None


def find_frontier_in(root: AstNode, path):
    node = root
    for i in path:
        node = node.children[i]
    rel = find_frontier(node)
    if rel is None:
        return None
    return path + rel


def _rebuild(root: AstNode, path, new_node, scope_value, scope_symbols):
    """Replace the node at ``path`` and, when ``scope_value`` is set,
    stamp it on the deepest scope-introducing ancestor lacking one."""
    chain = [root]
    node = root
    for i in path:
        node = node.children[i]
        chain.append(node)
    scope_at = -1
    if scope_value is not None:
        for depth in range(len(chain) - 1, -1, -1):
            cand = chain[depth]
            if cand.symbol.name in scope_symbols and cand.scope_name is None:
                scope_at = depth
                break
    current = new_node
    if scope_at == len(chain) - 1:
        current = AstNode(current.symbol, current.terminal_value,
                          current.children, scope_value)
    for depth in range(len(path) - 1, -1, -1):
        parent = chain[depth]
        idx = path[depth]
        children = parent.children[:idx] + (current,) + parent.children[idx + 1:]
        scope = scope_value if depth == scope_at else parent.scope_name
        current = AstNode(parent.symbol, parent.terminal_value, children, scope)
    return current


def _expand(t: PartialAst, children, scope_value, scope_symbols) -> PartialAst:
    fnode = t.frontier
    new_node = AstNode(fnode.symbol, None, tuple(children), fnode.scope_name)
    new_root = _rebuild(t.root, t.frontier_path, new_node,
                        scope_value, scope_symbols)
    new_path = _next_frontier_after(new_root, t.frontier_path)
    return PartialAst(new_root, new_path)


def apply_rule(t: PartialAst, rule: GrammarRule,
               scope_symbols=frozenset()) -> PartialAst:
    """Expand the frontier with ``rule``; pure (input untouched)."""
    if t.frontier_path is None:
        raise CompleteTreeError("cannot apply a rule to a complete tree")
    fnode = t.frontier
    if fnode.symbol.name != rule.lhs.name:
        raise IllegalApplicationError(
            f"rule {rule.id} expands {rule.lhs.name!r}, "
            f"frontier is {fnode.symbol.name!r}")
    if rule.terminal_value is not None:
        children = [AstNode(rule.rhs[0], rule.terminal_value)]
    else:
        children = [AstNode(s) for s in rule.rhs]
    scope_value = None
    if (fnode.symbol.node_class == FUNCTION_NAME
            and rule.terminal_value is not None):
        scope_value = rule.terminal_value
    return _expand(t, children, scope_value, scope_symbols)


def apply_copy(t: PartialAst, value: str, terminal_symbol: Symbol,
               scope_symbols=frozenset()) -> PartialAst:
    """Attach a copied terminal leaf at the frontier (slot-copy path)."""
    if t.frontier_path is None:
        raise CompleteTreeError("cannot copy into a complete tree")
    fnode = t.frontier
    scope_value = value if fnode.symbol.node_class == FUNCTION_NAME else None
    return _expand(t, [AstNode(terminal_symbol, value)],
                   scope_value, scope_symbols)


def encode_to_rules(tree: AstNode, g: Grammar) -> list:
    """Leftmost-derivation rule ids whose replay reconstructs ``tree``."""
    validate_tree(tree)
    out = []

    def walk(node):
        if not node.children:
            return
        rhs_names = tuple(c.symbol.name for c in node.children)
        value = None
        if len(node.children) == 1 and node.children[0].symbol.kind == TERMINAL:
            value = node.children[0].terminal_value
        rid = g.rule_id(node.symbol.name, rhs_names, value)
        if rid is None:
            raise MissingRuleError(
                f"no rule {node.symbol.name} -> {list(rhs_names)}"
                + (f" = {value!r}" if value is not None else ""))
        out.append(rid)
        for c in node.children:
            walk(c)

    walk(tree)
    return out


def decode_from_rules(rules, g: Grammar, start: Symbol) -> AstNode:
    """Replay a leftmost derivation; exact inverse of encode_to_rules."""
    if start.kind != NONTERMINAL:
        raise DerivationError(f"start symbol {start.name!r} is not a nonterminal")
    t = PartialAst.from_root(AstNode(start))
    for rid in rules:
        if t.frontier_path is None:
            raise OverlongDerivationError(
                f"rule {rid} applied after the tree completed")
        t = apply_rule(t, g.rules[rid], g.scope_symbols)
    if t.frontier_path is not None:
        raise IncompleteDerivationError(
            f"derivation ended at frontier {t.frontier.symbol.name!r}")
    return t.root


def preorder_with_backtrack(t: PartialAst, with_placeholder: bool):
    """Pre-order traversal emitting each node on entry and after its
    subtree. With the placeholder, n_PHD is inserted right after the
    frontier among its siblings (as a child when the frontier is the
    root), marking where the next rule applies."""
    if with_placeholder and t.frontier_path is None:
        raise CompleteTreeError("placeholder insertion needs a frontier")
    units = []
    phd = AstNode(PHD_SYMBOL)
    fpath = t.frontier_path

    def walk(node, path):
        units.append(TraversalUnit(node, VISIT))
        for i, c in enumerate(node.children):
            walk(c, path + (i,))
        if with_placeholder and path == fpath and path == ():
            units.append(TraversalUnit(phd, VISIT))
            units.append(TraversalUnit(phd, BACKTRACK))
        units.append(TraversalUnit(node, BACKTRACK))
        if with_placeholder and path == fpath and path != ():
            units.append(TraversalUnit(phd, VISIT))
            units.append(TraversalUnit(phd, BACKTRACK))

    walk(t.root, ())
    return units


def root_path(t: PartialAst):
    """Nodes from the root down to the frontier, inclusive."""
    if t.frontier_path is None:
        raise CompleteTreeError("complete tree has no frontier path")
    nodes = [t.root]
    node = t.root
    for i in t.frontier_path:
        node = node.children[i]
        nodes.append(node)
    return nodes


def context_triple(root: AstNode, path):
    """(node, parent, grandparent) at ``path``; missing ancestors are None
    and stand for the PAD embedding downstream."""
    chain = [root]
    node = root
    for i in path:
        node = node.children[i]
        chain.append(node)
    parent = chain[-2] if len(chain) >= 2 else None
    grand = chain[-3] if len(chain) >= 3 else None
    return node, parent, grand


def nearest_scope(t: PartialAst):
    """Scope name on the closest ancestor of the frontier (inclusive)."""
    if t.frontier_path is None:
        raise CompleteTreeError("complete tree has no frontier")
    for node in reversed(root_path(t)):
        if node.scope_name is not None:
            return node.scope_name
    return None


def augmented_view(t: PartialAst):
    """Index-based view of the placeholder-augmented tree.

    Returns (nodes, parents, grands, units): nodes in augmented
    pre-order, parent/grandparent indices (-1 when absent), and the
    traversal as (node_index, flag_index) with 0=visit, 1=backtrack.
    """
    if t.frontier_path is None:
        raise CompleteTreeError("placeholder view needs a frontier")
    nodes, parents, grands, units = [], [], [], []
    phd = AstNode(PHD_SYMBOL)
    fpath = t.frontier_path

    def add(node, parent_idx):
        idx = len(nodes)
        nodes.append(node)
        parents.append(parent_idx)
        grands.append(parents[parent_idx] if parent_idx >= 0 else -1)
        return idx

    def emit_phd(parent_idx):
        pidx = add(phd, parent_idx)
        units.append((pidx, 0))
        units.append((pidx, 1))

    def walk(node, path, parent_idx):
        idx = add(node, parent_idx)
        units.append((idx, 0))
        for i, c in enumerate(node.children):
            walk(c, path + (i,), idx)
        if path == fpath and path == ():
            emit_phd(idx)
        units.append((idx, 1))
        if path == fpath and path != ():
            emit_phd(parent_idx)

    walk(t.root, (), -1)
    return nodes, parents, grands, units


def reconstruct_from_traversal(units):
    """Invert a visit/backtrack traversal back to its tree.

    Stack-based: a visit opens a node under the current top, a backtrack
    closes the top. Serves as the independent inversion oracle.
    """
    root_box = []
    stack = []
    for u in units:
        if u.flag == VISIT:
            stack.append((u.node, []))
        elif u.flag == BACKTRACK:
            if not stack:
                raise DerivationError("backtrack with empty stack")
            node, kids = stack.pop()
            if node.symbol != u.node.symbol:
                raise DerivationError("mismatched backtrack unit")
            rebuilt = AstNode(node.symbol, node.terminal_value,
                              tuple(kids), node.scope_name)
            if stack:
                stack[-1][1].append(rebuilt)
            else:
                root_box.append(rebuilt)
        else:
            raise DerivationError(f"bad traversal flag {u.flag!r}")
    if stack or len(root_box) != 1:
        raise DerivationError("traversal does not close a single tree")
    return root_box[0]
