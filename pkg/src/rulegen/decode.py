"""Beam search over grammar-rule expansions.

Hypotheses expand their leftmost frontier with the masked rule
distribution; invalid rules never enter a trace. A hypothesis is
complete once every leaf is a terminal; completed hypotheses are frozen
and compete with expanding ones by total log-probability (no length
normalization). Dead-end states are pruned.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DeadEndError, DecoderState, Model, advance, initial_state


@dataclass(frozen=True)
class Hypothesis:
    state: DecoderState
    log_prob: float

    @property
    def complete(self) -> bool:
        return self.state.partial_ast.complete

    @property
    def rule_trace(self):
        return self.state.rule_trace

    @property
    def ast(self):
        return self.state.partial_ast.root


@dataclass
class DecodeResult:
    hypotheses: list       # complete, best first
    step_log_probs: list   # per-step log p of the top hypothesis

    @property
    def failed(self) -> bool:
        return not self.hypotheses


def _sort_key(h: Hypothesis):
    return (-h.log_prob, h.state.rule_trace)


def beam_search(model: Model, description: str, slots=(), beam_size=None,
                max_steps=None) -> DecodeResult:
    cfg = model.config
    beam_size = beam_size or cfg.beam_size
    max_steps = max_steps or cfg.max_decode_steps
    grammar = model.grammar
    enc_feats, ctrl = model.encode(description, train=False)

    start = Hypothesis(initial_state(grammar, slots), 0.0)
    beam = [start]
    steps = {(): []}  # trace -> per-step log probs, for reporting
    for _ in range(max_steps):
        if all(h.complete for h in beam):
            break
        candidates = []
        for h in beam:
            if h.complete:
                candidates.append(h)
                continue
            try:
                logp = model.predict(h.state, enc_feats, ctrl, train=False)
            except DeadEndError:
                continue
            lp = logp.data
            order = np.argsort(-lp, kind="stable")
            for idx in order[:beam_size]:
                if not np.isfinite(lp[idx]):
                    break
                ns = advance(h.state, int(idx), grammar)
                candidates.append(Hypothesis(ns, h.log_prob + float(lp[idx])))
                steps[ns.rule_trace] = steps[h.state.rule_trace] + [float(lp[idx])]
        if not candidates:
            break
        candidates.sort(key=_sort_key)
        beam = candidates[:beam_size]
        kept = {h.state.rule_trace for h in beam}
        steps = {t: v for t, v in steps.items() if t in kept}

    complete = sorted((h for h in beam if h.complete), key=_sort_key)
    top_steps = steps.get(complete[0].state.rule_trace, []) if complete else []
    return DecodeResult(complete, top_steps)
