"""Input-description tokenization, the token vocabulary, and the
shortcut-connection CNN stack shared by every convolutional module.

The stack follows the layer recurrence
    y_i(l) = ReLU(c(l) * y_i(l-2) + W(l) [window of y(l-1) at i])
with c(l) = 1 on even layers and 0 on odd layers, zero padding at the
sequence boundaries, and layer 0 the input embeddings. The shortcut is
position-aligned; flip SHORTCUT_SHIFT to reproduce the off-by-one
variant.
"""
from __future__ import annotations

import string
from dataclasses import dataclass

from . import autodiff as ad

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

# 0 keeps the residual at position i; -1 would read position i-1.
SHORTCUT_SHIFT = 0

_PUNCT_TABLE = str.maketrans({ch: " " for ch in string.punctuation})


def tokenize(description: str) -> list:
    """Lowercase, punctuation to spaces, split on whitespace runs."""
    toks = description.lower().translate(_PUNCT_TABLE).split()
    return toks if toks else [PAD_TOKEN]


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 21
    window: int = 2
    dim: int = 128

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("layer count must be >= 1")


class TokenVocab:
    """Dense token -> index map with reserved PAD=0 and UNK=1."""

    def __init__(self, tokens=()):
        self._index = {PAD_TOKEN: 0, UNK_TOKEN: 1}
        for t in tokens:
            if t not in self._index:
                self._index[t] = len(self._index)

    @classmethod
    def build(cls, descriptions) -> "TokenVocab":
        vocab = cls()
        for d in descriptions:
            for t in tokenize(d):
                if t not in vocab._index:
                    vocab._index[t] = len(vocab._index)
        return vocab

    def __len__(self):
        return len(self._index)

    def __contains__(self, token):
        return token in self._index

    def index(self, token) -> int:
        return self._index.get(token, 1)

    def indices(self, tokens) -> list:
        return [self.index(t) for t in tokens]

    def tokens(self) -> list:
        return list(self._index)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for t in self._index:
                f.write(t + "\n")

    @classmethod
    def load(cls, path) -> "TokenVocab":
        with open(path, encoding="utf-8") as f:
            lines = [line.rstrip("\n") for line in f]
        if lines[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary file must start with PAD and UNK")
        return cls(lines[2:])


def shortcut_cnn(store, prefix, y0, layers, window, collect=False):
    """Run the shortcut CNN stack over embedded positions.

    ``store[prefix + "conv{l}"]`` holds W(l) of shape (window*d, d).
    Returns the top layer, or every layer output when ``collect``.
    """
    outs = [y0]
    for layer in range(1, layers + 1):
        z = ad.matmul(ad.stack_window(outs[-1], window),
                      store[f"{prefix}conv{layer}"])
        if layer % 2 == 0:
            skip = outs[layer - 2]
            if SHORTCUT_SHIFT:
                skip = _shift_rows(skip, SHORTCUT_SHIFT)
            z = ad.add(skip, z)
        outs.append(ad.relu(z))
    return outs if collect else outs[-1]


def _shift_rows(x, shift):
    # Only needed for the off-by-one shortcut variant.
    import numpy as np

    n = x.shape[0]
    idx = np.clip(np.arange(n) + shift, 0, n - 1)
    keep = ((np.arange(n) + shift) >= 0) & ((np.arange(n) + shift) < n)
    return ad.row_scale(ad.gather_rows(x, idx), keep.astype(x.dtype))
