"""Grammar-rule sequence code generation with convolutional modules."""

__version__ = "0.1.0"

from .config import RunConfig
from .grammar import Grammar, GrammarRule, Symbol, induce_grammar
from .model import Model

__all__ = [
    "Grammar",
    "GrammarRule",
    "Model",
    "RunConfig",
    "Symbol",
    "induce_grammar",
    "__version__",
]
