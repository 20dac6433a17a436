"""Finite-difference verification of the analytic gradients.

Two levels: per-op checks on small random tensors, and a full-model
check that differentiates the teacher-forced loss of a tiny synthetic
batch with respect to every parameter group. Central differences at
64-bit; relative error must stay under the library-wide threshold.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .config import RunConfig
from .data import synth_corpus
from .grammar import induce_grammar
from .model import Model, vocabs_from_examples
from .training import derivation_targets, example_loss

TOLERANCE = 1e-4
EPSILON = 1e-5


# Floor on the relative-error denominator: central differences on a
# loss of magnitude ~10 carry ~1e-10 of float64 cancellation noise, so
# comparing gradients below ~1e-5 would measure noise, not correctness.
DENOM_FLOOR = 1e-5


def relative_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), DENOM_FLOOR)


def check_tensor(loss_fn, param, analytic_grad, samples_per_tensor=0,
                 rng=None, eps=EPSILON) -> float:
    """Max relative error over (sampled) entries of one parameter."""
    flat = param.data.reshape(-1)
    count = flat.size
    if samples_per_tensor and samples_per_tensor < count:
        idx = rng.choice(count, size=samples_per_tensor, replace=False)
    else:
        idx = np.arange(count)
    worst = 0.0
    ga = analytic_grad.reshape(-1)

    def error_at(i, e):
        orig = flat[i]
        flat[i] = orig + e
        lp = loss_fn()
        flat[i] = orig - e
        lm = loss_fn()
        flat[i] = orig
        return relative_error(float(ga[i]), (lp - lm) / (2 * e))

    for i in idx:
        err = error_at(i, eps)
        if err >= TOLERANCE:
            # a ReLU kink or argmax flip inside the interval inflates the
            # estimate; a genuinely wrong gradient stays wrong at every step
            err = min(err, error_at(i, eps / 10))
        worst = max(worst, err)
    return worst


def check_model(model: Model, loss_builder, samples_per_tensor=0,
                seed=0, corrupt=False) -> dict:
    """Relative error per parameter group for a full forward/backward.

    ``loss_builder()`` must rebuild the loss tensor from scratch (it is
    re-evaluated at perturbed parameters). ``corrupt`` deliberately
    offsets one analytic gradient; the harness must then report a
    failure (fault-injection hook for the CLI test).
    """
    rng = np.random.default_rng(seed)
    model.store.zero_grad()
    loss_builder().backward()
    grads = {n: (model.store[n].grad.copy()
                 if model.store[n].grad is not None
                 else np.zeros_like(model.store[n].data))
             for n in model.store.names()}
    model.store.zero_grad()
    if corrupt:
        first = model.store.names()[0]
        grads[first] = grads[first] + 1.0

    def scalar_loss():
        return loss_builder().item()

    report = {}
    for name in model.store.names():
        report[name] = check_tensor(scalar_loss, model.store[name],
                                    grads[name], samples_per_tensor, rng)
    return report


def build_tiny_model(config: RunConfig):
    """Tiny corpus + model that exercises every head and the copy path."""
    examples = synth_corpus(num_ops=2, max_depth=1, count=3,
                            seed=config.seed)
    grammar = induce_grammar([ex.ast for ex in examples])
    token_vocab, terminals, slot_names = vocabs_from_examples(examples)
    model = Model(grammar, config, token_vocab, terminals, slot_names,
                  dtype=np.float64, seed=config.seed)
    batches = [(ex, derivation_targets(ex, grammar, not config.no_copy))
               for ex in examples]

    def loss_builder():
        total = None
        for ex, targets in batches:
            loss, _ = example_loss(model, ex, targets, train=False)
            total = loss if total is None else ad.add(total, loss)
        if config.l2 > 0:
            for name in model.mlp_weight_names():
                total = ad.add(total, ad.scale(
                    ad.sumsq(model.store[name]), config.l2))
        return total

    return model, loss_builder


def run_full_check(dims=4, layers=3, samples_per_tensor=4, seed=0,
                   corrupt=False, **config_overrides) -> dict:
    config = RunConfig(dim=dims, layers=layers, mlp_hidden=dims,
                       dropout=0.0, seed=seed, **config_overrides)
    model, loss_builder = build_tiny_model(config)
    return check_model(model, loss_builder, samples_per_tensor,
                       seed=seed, corrupt=corrupt)


def _fd_input_check(op, shapes, rng, scalarize=ad.sum_all, eps=EPSILON):
    tensors = [ad.Tensor(rng.standard_normal(s), requires_grad=True)
               for s in shapes]
    scalarize(op(*tensors)).backward()
    worst = 0.0
    for t in tensors:
        flat = t.data.reshape(-1)
        ga = t.grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = scalarize(op(*tensors)).item()
            flat[i] = orig - eps
            lm = scalarize(op(*tensors)).item()
            flat[i] = orig
            worst = max(worst, relative_error(float(ga[i]),
                                              (lp - lm) / (2 * eps)))
        t.grad = None
    return worst


def run_op_checks(seed=0) -> dict:
    """Finite-difference checks for each differentiable op."""
    rng = np.random.default_rng(seed)
    report = {}
    report["matmul"] = _fd_input_check(ad.matmul, [(3, 4), (4, 2)], rng)
    report["matvec"] = _fd_input_check(ad.matmul, [(3, 4), (4,)], rng)
    report["vecmat"] = _fd_input_check(ad.matmul, [(3,), (3, 4)], rng)
    report["dot"] = _fd_input_check(ad.dot, [(5,), (5,)], rng)
    report["add"] = _fd_input_check(ad.add, [(3, 4), (3, 4)], rng)
    report["add_bias"] = _fd_input_check(ad.add, [(3, 4), (4,)], rng)
    report["relu"] = _fd_input_check(ad.relu, [(4, 3)], rng)
    # sum of a softmax is constant, so weight the entries before reducing
    w = ad.Tensor(rng.standard_normal(6))
    report["softmax"] = _fd_input_check(
        lambda a: ad.dot(ad.softmax(a), w), [(6,)], rng,
        scalarize=lambda t: t)
    report["concat"] = _fd_input_check(
        lambda a, b: ad.concat([a, b], axis=1), [(3, 2), (3, 4)], rng)
    report["stack_window"] = _fd_input_check(
        lambda a: ad.stack_window(a, 2), [(5, 3)], rng)
    report["max_over_rows"] = _fd_input_check(ad.max_over_rows, [(5, 3)], rng)
    report["sumsq"] = _fd_input_check(ad.sumsq, [(4, 2)], rng)
    report["gather_rows"] = _fd_input_check(
        lambda a: ad.gather_rows(a, [0, 2, 2, 1]), [(4, 3)], rng)
    report["embedding"] = _fd_input_check(
        lambda a: ad.embedding(a, [1, 0, 1]), [(3, 4)], rng)
    report["row_scale"] = _fd_input_check(
        lambda a: ad.row_scale(a, np.array([0.5, 2.0, 0.0])), [(3, 4)], rng)
    report["bilinear"] = _fd_input_check(ad.bilinear, [(4,), (4, 4), (4,)], rng)
    report["masked_log_softmax"] = _fd_input_check(
        lambda a: ad.pick(ad.masked_log_softmax(
            a, np.array([True, False, True, True, False])), 2), [(5,)], rng,
        scalarize=lambda t: t)
    return report
