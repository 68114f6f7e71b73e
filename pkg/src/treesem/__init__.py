"""treesem: latent-tree compositional semantic parsing.

A Composer induces binary syntax trees with nonterminal labels, an
Interpreter assigns semantic primitives and operations, and a symbolic
algebra evaluates the result; the whole pipeline trains end-to-end with
policy gradients against meaning-equivalence rewards.
"""

__version__ = "0.1.0"

__all__ = ["TreeSemanticParser", "__version__"]


def __getattr__(name):
    if name == "TreeSemanticParser":
        from .estimator import TreeSemanticParser
        return TreeSemanticParser
    raise AttributeError(name)
