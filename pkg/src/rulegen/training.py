"""Teacher-forced training over gold rule sequences, plus evaluation.

Each example contributes the sum of per-step cross-entropies along its
gold derivation; gradients accumulate over a window of examples before
one Adam update. The L2 penalty on the fully connected weights is added
once per window. All randomness (parameter init, dropout, shuffling)
flows from the run seed.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .ast_tree import token_yield
from .config import RunConfig
from .data import Example
from .decode import beam_search
from .grammar import Grammar, MissingRuleError, TERMINAL, VARIABLE
from .metrics import bleu, string_accuracy
from .model import Model, advance, initial_state, vocabs_from_examples
from .params import adam_step


def derivation_targets(example: Example, grammar: Grammar,
                       use_copy: bool) -> list:
    """Gold prediction targets in leftmost-derivation order.

    A variable-node terminal whose value equals some slot value becomes
    the first matching slot's copy target (R + slot index); otherwise
    the terminal rule is the target. Raises MissingRuleError when
    neither exists.
    """
    r = grammar.num_rules
    slot_values = example.slot_values()
    targets = []

    def walk(node):
        if not node.children:
            return
        rhs_names = tuple(c.symbol.name for c in node.children)
        value = None
        if len(node.children) == 1 and node.children[0].symbol.kind == TERMINAL:
            value = node.children[0].terminal_value
        if (use_copy and value is not None
                and node.symbol.node_class == VARIABLE
                and value in slot_values):
            targets.append(r + slot_values.index(value))
        else:
            rid = grammar.rule_id(node.symbol.name, rhs_names, value)
            if rid is None:
                raise MissingRuleError(
                    f"no rule {node.symbol.name} -> {list(rhs_names)}"
                    + (f" = {value!r}" if value is not None else ""))
            targets.append(rid)
        for c in node.children:
            walk(c)

    walk(example.ast)
    return targets


def example_loss(model: Model, example: Example, targets, train=True,
                 rng=None):
    """Summed negative log-likelihood of the gold targets, plus the
    per-step count (for mean-loss reporting)."""
    cfg = model.config
    enc_feats, ctrl = model.encode(example.description, train=train, rng=rng,
                                   word_dropout=cfg.word_dropout)
    state = initial_state(model.grammar, example.slots)
    loss = None
    for target in targets:
        logp = model.predict(state, enc_feats, ctrl, train=train, rng=rng)
        step = ad.scale(ad.pick(logp, target), -1.0)
        loss = step if loss is None else ad.add(loss, step)
        state = advance(state, target, model.grammar)
    return loss, len(targets)


def decode_yield(model: Model, example: Example):
    """Top-hypothesis token yield, or None on decode failure."""
    result = beam_search(model, example.description, example.slots)
    if result.failed:
        return None
    return token_yield(result.hypotheses[0].ast)


def evaluate(model: Model, examples, bypass_gold=False) -> dict:
    """Decode every example and score StrAcc / corpus BLEU."""
    records = []
    preds, golds = [], []
    for ex in examples:
        gold = token_yield(ex.ast)
        pred = gold if bypass_gold else decode_yield(model, ex)
        preds.append(pred)
        golds.append(gold)
        records.append({
            "id": ex.id,
            "gold_yield": gold,
            "pred_yield": pred,
            "match": pred is not None and pred == gold,
            "bleu": bleu([pred], [gold]),
        })
    return {
        "str_acc": string_accuracy(preds, golds),
        "bleu": bleu(preds, golds),
        "examples": records,
    }


@dataclass
class TrainResult:
    model: Model
    log_lines: list = field(default_factory=list)
    updates: int = 0
    skipped: int = 0
    best_dev_acc: float = -1.0


def train(train_examples, dev_examples, grammar: Grammar, config: RunConfig,
          out_dir=None, dtype=np.float32, log_print=False) -> TrainResult:
    token_vocab, terminals, slot_names = vocabs_from_examples(train_examples)
    model = Model(grammar, config, token_vocab, terminals, slot_names,
                  dtype=dtype, seed=config.seed)
    rng = np.random.default_rng(config.seed + 1)

    usable = []
    skipped = 0
    for ex in train_examples:
        try:
            usable.append((ex, derivation_targets(ex, grammar,
                                                  not config.no_copy)))
        except MissingRuleError:
            skipped += 1
    result = TrainResult(model, skipped=skipped)

    def log(line):
        result.log_lines.append(line)
        if log_print:
            print(line)

    if skipped:
        log(f"skipped {skipped} underivable examples")
    if not usable:
        raise MissingRuleError("no derivable training examples")

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.json"), "w") as f:
            f.write(config.to_json())
        token_vocab.save(os.path.join(out_dir, "vocab.txt"))

    def save_checkpoint():
        if out_dir:
            model.save(os.path.join(out_dir, "checkpoint.bin"))

    best_dev = -1.0
    evals_since_best = 0
    pending = 0
    stop = False
    for epoch in range(1, config.epochs + 1):
        total_loss = 0.0
        total_steps = 0
        order = rng.permutation(len(usable))
        for pos in order:
            ex, targets = usable[pos]
            loss, nsteps = example_loss(model, ex, targets, train=True,
                                        rng=rng)
            loss.backward()
            total_loss += loss.item()
            total_steps += nsteps
            pending += 1
            if pending >= config.accumulation_window:
                _apply_update(model, config)
                pending = 0
                result.updates += 1
                if config.max_updates and result.updates >= config.max_updates:
                    stop = True
                    break
        if pending and (stop or epoch == config.epochs):
            _apply_update(model, config)
            pending = 0
            result.updates += 1

        mean_loss = total_loss / max(total_steps, 1)
        dev_acc = dev_bleu = None
        if epoch % config.eval_interval == 0 or stop or epoch == config.epochs:
            if dev_examples:
                report = evaluate(model, dev_examples)
                dev_acc, dev_bleu = report["str_acc"], report["bleu"]
                if dev_acc > best_dev:
                    best_dev = dev_acc
                    evals_since_best = 0
                    save_checkpoint()
                else:
                    evals_since_best += 1
            if config.stop_at_train_acc > 0:
                train_report = evaluate(model, [ex for ex, _ in usable])
                if train_report["str_acc"] >= config.stop_at_train_acc:
                    stop = True
        fmt = lambda v: f"{v:.4f}" if v is not None else "-"
        log(f"epoch {epoch} loss {mean_loss:.6f} "
            f"dev_acc {fmt(dev_acc)} dev_bleu {fmt(dev_bleu)}")
        if dev_examples and evals_since_best > config.patience:
            log(f"early stop after {epoch} epochs")
            stop = True
        if stop:
            break

    result.best_dev_acc = best_dev
    if not dev_examples or best_dev < 0:
        save_checkpoint()
    if out_dir:
        with open(os.path.join(out_dir, "log.txt"), "w") as f:
            f.write("\n".join(result.log_lines) + "\n")
    return result


def _apply_update(model: Model, config: RunConfig):
    if config.l2 > 0:
        for name in model.mlp_weight_names():
            p = model.store[name]
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
            p.grad += (2.0 * config.l2) * p.data
    adam_step(model.store, lr=config.lr)
    model.store.zero_grad()
