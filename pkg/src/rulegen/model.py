"""The grammar-rule predictor.

Four convolutional feature extractors (predicted-rule CNN, tree-based
convolution over (node, parent, grandparent) triples, pre-order
traversal CNN over the backtracking sequence, tree-path CNN over the
root-to-frontier chain) are aggregated by attentive and max pooling and
fed to a per-node-class two-layer perceptron whose masked softmax ranges
over the grammar rules plus, for variable nodes, one copy target per
input slot.

Controller A is the max-pool of the encoder features and steers the
rule and tree-path attention; controller B is the nearest enclosing
scope-name embedding (zero when absent) and steers the pre-order and
encoder attention.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .ast_tree import (
    PHD_SYMBOL,
    AstNode,
    PartialAst,
    apply_copy,
    apply_rule,
    augmented_view,
    nearest_scope,
    root_path,
)
from .config import RunConfig
from .encoder import TokenVocab, shortcut_cnn, tokenize
from .grammar import (
    Grammar,
    TERMINAL,
    VARIABLE,
    copy_terminal_symbol,
    grammar_to_json,
    valid_rule_mask,
)
from .params import ParamStore, embedding_init, load_params, save_params, xavier_uniform

FLAG_DIM = 8
HEAD_CLASSES = ("structural", "variable", "function_name")
SHARED_HEAD = "shared"

# Fixed aggregate order (checkpoint compatibility):
#   att(rule | A), att(path | A), att(preorder | B), att(encoder | B),
#   max(encoder), max(preorder), [att(tree-conv | B) when enabled]
AGGREGATE_ORDER = ("att_rule", "att_path", "att_pre", "att_enc",
                   "max_enc", "max_pre", "att_ast")


class DeadEndError(RuntimeError):
    """Frontier with no valid rule and no copy target."""


@dataclass(frozen=True)
class DecoderState:
    rule_trace: tuple      # rule ids; copy steps appear as R + slot index
    partial_ast: PartialAst
    slots: tuple           # ((name, value), ...)

    def scope(self):
        if self.partial_ast.frontier_path is None:
            return None
        return nearest_scope(self.partial_ast)


def initial_state(grammar: Grammar, slots=()) -> DecoderState:
    root = AstNode(grammar.start_symbol)
    return DecoderState((), PartialAst.from_root(root), tuple(slots))


def advance(state: DecoderState, target: int, grammar: Grammar) -> DecoderState:
    """Apply a predicted target: a rule id, or R+j for copying slot j."""
    r = grammar.num_rules
    if target < r:
        ast = apply_rule(state.partial_ast, grammar.rules[target],
                         grammar.scope_symbols)
    else:
        j = target - r
        value = state.slots[j][1]
        sym = copy_terminal_symbol(grammar, state.partial_ast.frontier.symbol)
        ast = apply_copy(state.partial_ast, value, sym, grammar.scope_symbols)
    return DecoderState(state.rule_trace + (target,), ast, state.slots)


def attentive_pool(candidates, controller, weight):
    """Softmax-weighted sum of rows; weights from the bilinear logits
    y_i^T W c. A zero controller degenerates to the unweighted mean."""
    logits = ad.matmul(ad.matmul(candidates, weight), controller)
    alpha = ad.softmax(logits)
    return ad.matmul(alpha, candidates)


def grammar_hash(grammar: Grammar) -> str:
    return hashlib.sha256(grammar_to_json(grammar).encode("utf-8")).hexdigest()


class Model:
    def __init__(self, grammar: Grammar, config: RunConfig,
                 token_vocab: TokenVocab, terminal_vocab, slot_name_vocab,
                 dtype=np.float32, seed=None, store=None):
        self.grammar = grammar
        self.config = config
        self.token_vocab = token_vocab
        self.terminal_vocab = list(terminal_vocab)
        self.slot_name_vocab = list(slot_name_vocab)
        self.dtype = np.dtype(dtype)

        self.sym_index = {name: i for i, name in enumerate(grammar.symbol_order())}
        self.phd_index = len(self.sym_index)
        self.pad_index = len(self.sym_index) + 1
        self.term_index = {v: i for i, v in enumerate(self.terminal_vocab)}
        self.term_unk = len(self.terminal_vocab)
        self.slot_index = {n: i for i, n in enumerate(self.slot_name_vocab)}
        self.slot_unk = len(self.slot_name_vocab)
        self.scope_index = {n: i for i, n in enumerate(grammar.scope_vocab)}
        r = grammar.num_rules
        self.rule_pad = r
        self.rule_copy = r + 1

        if config.share_heads:
            self.heads = (SHARED_HEAD,)
        else:
            self.heads = HEAD_CLASSES

        if store is not None:
            self.store = store
        else:
            if seed is None:
                seed = config.seed
            self.store = self._init_params(np.random.default_rng(seed))

    # -- parameters -------------------------------------------------------

    def head_for(self, node_class: str) -> str:
        return SHARED_HEAD if self.config.share_heads else node_class

    def _copy_head(self) -> str:
        return self.head_for(VARIABLE)

    def aggregate_width(self) -> int:
        cfg = self.config
        parts = 6
        if cfg.no_rule_cnn:
            parts -= 1
        if cfg.no_treepath_cnn:
            parts -= 1
        if cfg.extra_treeconv_pool:
            parts += 1
        return parts * cfg.dim

    def _init_params(self, rng) -> ParamStore:
        cfg = self.config
        g = self.grammar
        d, k, layers, hidden = cfg.dim, cfg.window, cfg.layers, cfg.mlp_hidden
        store = ParamStore(dtype=self.dtype)

        store.add("emb/token", embedding_init(rng, len(self.token_vocab), d))
        store.add("emb/symbol", embedding_init(rng, len(self.sym_index) + 2, d))
        store.add("emb/terminal", embedding_init(rng, self.term_unk + 1, d))
        store.add("emb/rule", embedding_init(rng, g.num_rules + 2, d))
        store.add("emb/flag", embedding_init(rng, 2, FLAG_DIM))
        if not cfg.no_scope:
            store.add("emb/scope",
                      embedding_init(rng, max(len(g.scope_vocab), 1), d))
        if not cfg.no_copy:
            store.add("emb/slot", embedding_init(rng, self.slot_unk + 1, d))

        def convs(prefix):
            for layer in range(1, layers + 1):
                store.add(f"{prefix}conv{layer}",
                          xavier_uniform(rng, d, k * d, shape=(k * d, d)))

        convs("enc/")
        agg = self.aggregate_width()
        for head in self.heads:
            if not cfg.no_rule_cnn:
                convs(f"{head}/rule/")
            if not cfg.no_tree_conv:
                store.add(f"{head}/ast_w",
                          xavier_uniform(rng, d, 3 * d, shape=(3 * d, d)))
            if not cfg.no_preorder_cnn:
                store.add(f"{head}/pre_proj",
                          xavier_uniform(rng, d, d + FLAG_DIM,
                                         shape=(d + FLAG_DIM, d)))
                convs(f"{head}/pre/")
            if not cfg.no_treepath_cnn:
                convs(f"{head}/path/")
            if not cfg.attention_to_maxpool:
                if not cfg.no_rule_cnn:
                    store.add(f"{head}/att_rule", xavier_uniform(rng, d, d))
                if not cfg.no_treepath_cnn:
                    store.add(f"{head}/att_path", xavier_uniform(rng, d, d))
                store.add(f"{head}/att_pre", xavier_uniform(rng, d, d))
                store.add(f"{head}/att_enc", xavier_uniform(rng, d, d))
                if cfg.extra_treeconv_pool:
                    store.add(f"{head}/att_ast", xavier_uniform(rng, d, d))
            store.add(f"{head}/mlp_w1", xavier_uniform(rng, hidden, agg))
            store.add(f"{head}/mlp_b1", np.zeros(hidden))
            store.add(f"{head}/mlp_w2",
                      xavier_uniform(rng, g.num_rules, hidden))
            store.add(f"{head}/mlp_b2", np.zeros(g.num_rules))
            if not cfg.no_copy and head == self._copy_head():
                store.add(f"{head}/copy_w", xavier_uniform(rng, hidden, d))
        return store

    # -- forward ----------------------------------------------------------

    def mlp_weight_names(self):
        return [n for n in self.store.names()
                if n.endswith("/mlp_w1") or n.endswith("/mlp_w2")]

    def encode(self, description: str, train=False, rng=None,
               word_dropout=0.0):
        """Returns (per-position features, max-pool controller)."""
        cfg = self.config
        tokens = tokenize(description)
        idx = self.token_vocab.indices(tokens)
        if train and word_dropout > 0.0 and rng is not None:
            idx = [1 if rng.random() < word_dropout else i for i in idx]
        y0 = ad.embedding(self.store["emb/token"], idx)
        feats = shortcut_cnn(self.store, "enc/", y0, cfg.layers, cfg.window)
        return feats, ad.max_over_rows(feats)

    def _zero_vec(self):
        return ad.constant(np.zeros(self.config.dim, dtype=self.dtype))

    def _scope_controller(self, state: DecoderState):
        if self.config.no_scope:
            return self._zero_vec(), True
        scope = state.scope()
        if scope is None or scope not in self.scope_index:
            return self._zero_vec(), True
        row = ad.embedding(self.store["emb/scope"],
                           [self.scope_index[scope]])
        return _row(row), False

    def _pool(self, feats, controller, weight_name):
        if self.config.attention_to_maxpool:
            return ad.max_over_rows(feats)
        return attentive_pool(feats, controller, self.store[weight_name])

    def _node_inputs(self, nodes):
        sym_idx, term_idx, is_term = [], [], []
        for node in nodes:
            if node.symbol.kind == TERMINAL:
                sym_idx.append(self.pad_index)
                term_idx.append(self.term_index.get(node.terminal_value,
                                                    self.term_unk))
                is_term.append(1.0)
            else:
                if node.symbol is PHD_SYMBOL or node.symbol.name == PHD_SYMBOL.name:
                    sym_idx.append(self.phd_index)
                else:
                    sym_idx.append(self.sym_index[node.symbol.name])
                term_idx.append(self.term_unk)
                is_term.append(0.0)
        sym_rows = ad.embedding(self.store["emb/symbol"], sym_idx)
        term_rows = ad.embedding(self.store["emb/terminal"], term_idx)
        keep = np.asarray(is_term, dtype=self.dtype)
        return ad.add(ad.row_scale(sym_rows, 1.0 - keep),
                      ad.row_scale(term_rows, keep))

    def ast_features(self, state: DecoderState, head: str):
        """Tree-conv outputs per augmented node plus the traversal index."""
        cfg = self.config
        nodes, parents, grands, units = augmented_view(state.partial_ast)
        x = self._node_inputs(nodes)
        if cfg.no_tree_conv:
            return x, units
        n = len(nodes)
        pad_row = ad.embedding(self.store["emb/symbol"], [self.pad_index])
        xp = ad.concat([x, pad_row], axis=0)
        par = [p if p >= 0 else n for p in parents]
        gpa = [p if p >= 0 else n for p in grands]
        triples = ad.concat([x,
                             ad.gather_rows(xp, par),
                             ad.gather_rows(xp, gpa)], axis=1)
        y_ast = ad.relu(ad.matmul(triples, self.store[f"{head}/ast_w"]))
        return y_ast, units

    def preorder_features(self, y_ast, units, head: str):
        cfg = self.config
        if cfg.no_preorder_cnn:
            return y_ast
        node_idx = [i for i, _ in units]
        flags = [f for _, f in units]
        u0 = ad.matmul(
            ad.concat([ad.gather_rows(y_ast, node_idx),
                       ad.embedding(self.store["emb/flag"], flags)], axis=1),
            self.store[f"{head}/pre_proj"])
        return shortcut_cnn(self.store, f"{head}/pre/", u0,
                            cfg.layers, cfg.window)

    def rule_features(self, state: DecoderState, head: str):
        idx = [t if t < self.grammar.num_rules else self.rule_copy
               for t in state.rule_trace]
        if not idx:
            idx = [self.rule_pad]
        y0 = ad.embedding(self.store["emb/rule"], idx)
        return shortcut_cnn(self.store, f"{head}/rule/", y0,
                            self.config.layers, self.config.window)

    def path_features(self, state: DecoderState, head: str):
        idx = [self.sym_index[n.symbol.name]
               for n in root_path(state.partial_ast)]
        y0 = ad.embedding(self.store["emb/symbol"], idx)
        return shortcut_cnn(self.store, f"{head}/path/", y0,
                            self.config.layers, self.config.window)

    def aggregate(self, state: DecoderState, enc_feats, enc_controller,
                  head: str):
        cfg = self.config
        ctrl_a = enc_controller
        ctrl_b, _ = self._scope_controller(state)
        y_ast, units = self.ast_features(state, head)
        feats_pre = self.preorder_features(y_ast, units, head)
        parts = []
        if not cfg.no_rule_cnn:
            parts.append(self._pool(self.rule_features(state, head),
                                    ctrl_a, f"{head}/att_rule"))
        if not cfg.no_treepath_cnn:
            parts.append(self._pool(self.path_features(state, head),
                                    ctrl_a, f"{head}/att_path"))
        parts.append(self._pool(feats_pre, ctrl_b, f"{head}/att_pre"))
        parts.append(self._pool(enc_feats, ctrl_b, f"{head}/att_enc"))
        parts.append(ad.max_over_rows(enc_feats))
        parts.append(ad.max_over_rows(feats_pre))
        if cfg.extra_treeconv_pool:
            parts.append(self._pool(y_ast, ctrl_b, f"{head}/att_ast"))
        return ad.concat(parts, axis=0)

    def predict(self, state: DecoderState, enc_feats, enc_controller,
                train=False, rng=None):
        """Masked log-probabilities over rules (+ copy targets for the
        variable head); entries invalid for the frontier are -inf."""
        cfg = self.config
        frontier = state.partial_ast.frontier
        if frontier is None:
            raise DeadEndError("predict on a complete tree")
        head = self.head_for(frontier.symbol.node_class)
        agg = self.aggregate(state, enc_feats, enc_controller, head)
        x = ad.dropout(agg, cfg.dropout, rng, train)
        h = ad.relu(ad.add(ad.matmul(self.store[f"{head}/mlp_w1"], x),
                           self.store[f"{head}/mlp_b1"]))
        h = ad.dropout(h, cfg.dropout, rng, train)
        logits = ad.add(ad.matmul(self.store[f"{head}/mlp_w2"], h),
                        self.store[f"{head}/mlp_b2"])

        rule_ids = self.grammar.lhs_index.get(frontier.symbol.name, ())
        mask = np.zeros(self.grammar.num_rules, dtype=bool)
        mask[list(rule_ids)] = True

        use_copy = (not cfg.no_copy
                    and frontier.symbol.node_class == VARIABLE
                    and state.slots)
        if use_copy:
            slot_idx = [self.slot_index.get(n, self.slot_unk)
                        for n, _ in state.slots]
            slot_rows = ad.embedding(self.store["emb/slot"], slot_idx)
            carrier = ad.matmul(h, self.store[f"{head}/copy_w"])
            copy_logits = ad.matmul(slot_rows, carrier)
            logits = ad.concat([logits, copy_logits], axis=0)
            mask = np.concatenate([mask, np.ones(len(state.slots), dtype=bool)])
        if not mask.any():
            raise DeadEndError(
                f"no valid rule or copy target for {frontier.symbol.name!r}")
        return ad.masked_log_softmax(logits, mask)

    # -- persistence ------------------------------------------------------

    def save(self, path, include_optimizer=True):
        extras = {
            "config": json.loads(self.config.to_json()),
            "config_hash": self.config.hash(),
            "grammar_hash": grammar_hash(self.grammar),
            "token_vocab": self.token_vocab.tokens(),
            "terminal_vocab": self.terminal_vocab,
            "slot_name_vocab": self.slot_name_vocab,
            "seed": self.config.seed,
        }
        save_params(self.store, path, extras=extras,
                    include_optimizer=include_optimizer)

    @classmethod
    def load(cls, path, grammar: Grammar, dtype=np.float32,
             check_grammar=True):
        from .params import CheckpointError

        store, header = load_params(path, dtype=dtype)
        extras = header.get("extras", {})
        config = RunConfig(**extras["config"])
        if extras.get("config_hash") != config.hash():
            raise CheckpointError("checkpoint config hash mismatch")
        if check_grammar and extras.get("grammar_hash") != grammar_hash(grammar):
            raise CheckpointError("checkpoint was trained on a different grammar")
        vocab = TokenVocab(extras["token_vocab"][2:])
        return cls(grammar, config, vocab, extras["terminal_vocab"],
                   extras["slot_name_vocab"], dtype=dtype, store=store)


def _row(matrix_tensor):
    """First row of a (1, d) tensor as a vector."""
    return ad.Tensor(matrix_tensor.data[0], parents=(matrix_tensor,),
                     backward_fn=lambda g: (g[None, :],))


def vocabs_from_examples(examples):
    """(token vocab, terminal vocab, slot-name vocab) from training data."""
    from .ast_tree import token_yield

    token_vocab = TokenVocab.build(ex.description for ex in examples)
    terminals, seen_t = [], set()
    slot_names, seen_s = [], set()
    for ex in examples:
        for v in token_yield(ex.ast):
            if v not in seen_t:
                seen_t.add(v)
                terminals.append(v)
        for n, _ in ex.slots:
            if n not in seen_s:
                seen_s.add(n)
                slot_names.append(n)
    return token_vocab, terminals, slot_names
