"""Interpreter: semantic primitives for lexical nodes, operations for
algebraic nodes.

Lexical nodes (labeled nodes with no labeled node below them) classify
over the phrase-table candidates for their span, reading a contextual
Bi-LSTM span representation: the same span may mean different things in
different sentences. Algebraic nodes classify over operations of matching
arity, reading only the node's own tree representation, detached from
the composer graph; nothing outside the subtree can influence the choice,
and the gradient stays inside the algebraic parameter group.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffgraph as dg
from .diffgraph import ParamStore, Tensor
from .encoders import BiLstmContext, ContextReps
from .phrasetable import PhraseTable
from .semalg import Domain
from .trees import SyntaxTree, TreeNode
from .composer import ComposeOutcome, _choose, _entropy


class InterpretError(ValueError):
    """Contract violation: the composer let through an uninterpretable node."""

    def __init__(self, message: str, span: tuple[int, int]) -> None:
        super().__init__(f"{message} (span {span})")
        self.span = span


@dataclass
class InterpretOutcome:
    assignment: dict[int, tuple[str, str]]
    mode: str
    log_probs_lexical: list[Tensor] = field(default_factory=list)
    log_probs_algebraic: list[Tensor] = field(default_factory=list)
    entropies: list[Tensor] = field(default_factory=list)

    def lines(self, tokens: list[str], tree: SyntaxTree) -> list[str]:
        """Readable `span -> choice` listing for analysis output."""
        out = []
        for node in tree.labeled_nodes:
            role, name = self.assignment[node.id]
            span_text = " ".join(tokens[node.lo:node.hi])
            out.append(f"{node.lo}:{node.hi} {span_text!r} -> {role} {name}")
        return out


class Interpreter:
    def __init__(self, store: ParamStore, rng: np.random.Generator,
                 vocab_size: int, dim: int, domain: Domain) -> None:
        self.dim = dim
        self.context = BiLstmContext(store, rng, vocab_size, dim,
                                     group="lexical")
        self.primitive_ids = sorted(domain.primitives)
        self.prim_index = {p: i for i, p in enumerate(self.primitive_ids)}
        w = dg.glorot_width(2 * dim, len(self.primitive_ids))
        self.lex_w = store.add(
            "lexical", "lex.w",
            dg.uniform(rng, (len(self.primitive_ids), 2 * dim), w))
        self.lex_b = store.add(
            "lexical", "lex.b", np.zeros((len(self.primitive_ids), 1)))

        self.operation_ids = sorted(domain.operations)
        self.op_index = {o: i for i, o in enumerate(self.operation_ids)}
        self.ops_by_arity: dict[int, list[str]] = {}
        for oid in self.operation_ids:
            arity = domain.operations[oid].arity
            self.ops_by_arity.setdefault(arity, []).append(oid)
        wa = dg.glorot_width(dim, len(self.operation_ids))
        self.alg_w = store.add(
            "algebraic", "alg.w",
            dg.uniform(rng, (len(self.operation_ids), dim), wa))
        self.alg_b = store.add(
            "algebraic", "alg.b", np.zeros((len(self.operation_ids), 1)))

    # -- single-node classifiers ----------------------------------------

    def classify_lexical(self, node: TreeNode, tokens: list[str],
                         context: ContextReps, table: PhraseTable,
                         mode: str, rng=None, want_entropy: bool = False):
        candidates = table.lookup(tokens[node.lo:node.hi])
        if not candidates:
            raise InterpretError(
                "lexical node has no phrase-table candidates", node.span)
        if len(candidates) == 1:
            return candidates[0][0], None, None
        rep = context.span_rep(node.lo, node.hi)
        logits_all = dg.reshape(
            dg.add(dg.matmul(self.lex_w, rep), self.lex_b),
            (len(self.primitive_ids),))
        idxs = [self.prim_index[pid] for pid, _ in candidates]
        logits = dg.take(logits_all, idxs)
        choice, logp, ent = _choose(logits, mode, rng, want_entropy)
        return candidates[choice][0], logp, ent

    def algebraic_distribution(self, rep: Tensor, arity: int) -> np.ndarray:
        """Probabilities over the feasible operations, for inspection."""
        feasible = self.ops_by_arity.get(arity, [])
        logits_all = dg.add(dg.matmul(self.alg_w, rep.detach()), self.alg_b)
        logits = dg.take(dg.reshape(logits_all, (len(self.operation_ids),)),
                         [self.op_index[o] for o in feasible])
        e = np.exp(logits.data - logits.data.max())
        return e / e.sum()

    def classify_algebraic(self, node: TreeNode, rep: Tensor, mode: str,
                           rng=None, want_entropy: bool = False):
        arity = len(node.nt_children)
        feasible = self.ops_by_arity.get(arity, [])
        if not feasible:
            raise InterpretError(
                f"no operation of arity {arity} exists", node.span)
        if len(feasible) == 1:
            return feasible[0], None, None
        # detach: the composer's parameters are not updated through the
        # algebraic classifier's log-probabilities
        logits_all = dg.reshape(
            dg.add(dg.matmul(self.alg_w, rep.detach()), self.alg_b),
            (len(self.operation_ids),))
        logits = dg.take(logits_all, [self.op_index[o] for o in feasible])
        choice, logp, ent = _choose(logits, mode, rng, want_entropy)
        return feasible[choice], logp, ent

    # -- whole-tree assignment ------------------------------------------

    def interpret(self, compose_out: ComposeOutcome, tokens: list[str],
                  ids: list[int], table: PhraseTable, mode: str,
                  rng=None, context: ContextReps | None = None,
                  want_entropy: bool = False) -> InterpretOutcome:
        tree = compose_out.tree
        out = InterpretOutcome(assignment={}, mode=mode)
        lexical = [n for n in tree.labeled_nodes if not n.nt_children]
        algebraic = [n for n in tree.labeled_nodes if n.nt_children]
        if context is None and any(
                len(table.lookup(tokens[n.lo:n.hi])) > 1 for n in lexical):
            # contextual representations matter only for ambiguous spans
            context = self.context.encode(ids)
        for node in lexical:
            pid, logp, ent = self.classify_lexical(
                node, tokens, context, table, mode, rng, want_entropy)
            out.assignment[node.id] = ("primitive", pid)
            if logp is not None:
                out.log_probs_lexical.append(logp)
            if ent is not None:
                out.entropies.append(ent)
        for node in algebraic:
            rep = compose_out.reps.get(node.id)
            if rep is None:
                raise InterpretError(
                    "no tree representation recorded for node", node.span)
            oid, logp, ent = self.classify_algebraic(
                node, rep, mode, rng, want_entropy)
            out.assignment[node.id] = ("operation", oid)
            if logp is not None:
                out.log_probs_algebraic.append(logp)
            if ent is not None:
                out.entropies.append(ent)
        return out
