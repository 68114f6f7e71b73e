"""Latent-tree composer: bottom-up merge decisions with nonterminal
labeling and context-free abstraction.

Each merge step scores every adjacent pair through the tree cell in one
batched pass, picks a pair (argmax or categorical sample), labels the new
node with an (N+1)-way classifier, and, when abstraction is on, replaces a
labeled node's upward message by a projection of its label embedding so
that everything above sees only the nonterminal symbol.

Label classes 1..N are masked to 0 whenever the constraint set forbids a
nonterminal here: a candidate with n > 0 visible nonterminal children
needs an operation of arity n to exist, and a candidate with none (a
lexical candidate) needs its span in the phrase table.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffgraph as dg
from .diffgraph import ParamStore, Tensor
from .encoders import BiLstmContext, LeafEncoder, MergeScorer, NodeState, TreeCell
from .phrasetable import PhraseTable
from .trees import SyntaxTree, TreeNode


class ComposeError(ValueError):
    pass


@dataclass(frozen=True)
class ConstraintSet:
    table: PhraseTable
    arity_set: frozenset[int]

    def __post_init__(self) -> None:
        if not self.arity_set:
            raise ComposeError("constraint set lacks operation arities")


def nonterminal_allowed(n_nt_children: int, span_tokens: list[str],
                        constraints: ConstraintSet) -> bool:
    """Parameter and phrase-table constraints for one candidate node."""
    if n_nt_children > 0:
        return n_nt_children in constraints.arity_set
    return bool(constraints.table.lookup(span_tokens))


def stable_probs(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max())
    return e / e.sum()


@dataclass
class ComposeOutcome:
    tree: SyntaxTree
    mode: str
    log_probs: list[Tensor] = field(default_factory=list)
    entropies: list[Tensor] = field(default_factory=list)
    reps: dict[int, Tensor] = field(default_factory=dict)  # node id -> r_v

    def log_prob_total(self) -> float:
        return float(sum(float(t.data) for t in self.log_probs))


class Composer:
    def __init__(self, store: ParamStore, rng: np.random.Generator,
                 vocab_size: int, dim: int, nonterminals: int,
                 abstraction: bool = True, semantic_locality: bool = True
                 ) -> None:
        if nonterminals < 1:
            raise ValueError("need at least one nonterminal symbol")
        self.dim = dim
        self.n_labels = nonterminals
        self.abstraction = abstraction
        self.semantic_locality = semantic_locality
        self.leaf = LeafEncoder(store, rng, vocab_size, dim)
        self.cell = TreeCell(store, rng, dim)
        self.scorer = MergeScorer(store, rng, dim)
        w = dg.glorot_width(dim, nonterminals + 1)
        self.label_w = store.add("composer", "label.w",
                                 dg.uniform(rng, (nonterminals + 1, dim), w))
        self.label_b = store.add("composer", "label.b",
                                 np.zeros((nonterminals + 1, 1)))
        self.nt_emb = store.add("composer", "abstract.emb",
                                dg.uniform(rng, (nonterminals, dim), 0.1))
        wr = dg.glorot_width(dim, dim)
        self.red_w = store.add("composer", "abstract.w",
                               dg.uniform(rng, (dim, dim), wr))
        self.red_b = store.add("composer", "abstract.b", np.zeros((dim, 1)))
        if not semantic_locality:
            # ablation: contextualize leaves with a Bi-LSTM before the
            # tree cell, deliberately leaking outside context into r_v
            self.pre_context = BiLstmContext(store, rng, vocab_size, dim,
                                             group="composer", prefix="pre")
            wm = dg.glorot_width(2 * dim, dim)
            self.mix_w = store.add("composer", "pre.mix_w",
                                   dg.uniform(rng, (dim, 2 * dim), wm))
            self.mix_b = store.add("composer", "pre.mix_b",
                                   np.zeros((dim, 1)))

    # -- label head -----------------------------------------------------

    def label_logits(self, rep: Tensor) -> Tensor:
        out = dg.add(dg.matmul(self.label_w, rep), self.label_b)
        return dg.reshape(out, (self.n_labels + 1,))

    def classify_label(self, rep: Tensor, mode: str,
                       rng: np.random.Generator | None,
                       want_entropy: bool = False):
        """(N+1)-way nonterminal decision for one node representation.

        Returns (class, log_prob tensor or None, entropy tensor or None).
        """
        logits = self.label_logits(rep)
        return _choose(logits, mode, rng, want_entropy)

    def reduce_abstraction(self, label: int) -> NodeState:
        """Upward state of a labeled node: projection of its symbol
        embedding, fresh memory."""
        if label < 1 or label > self.n_labels:
            raise ComposeError(
                f"reduce_abstraction needs a labeled node, got class {label}")
        row = dg.embedding(self.nt_emb, [label - 1])
        h = dg.add(dg.matmul(self.red_w, dg.transpose(row)), self.red_b)
        return NodeState(h=h, c=dg.constant(np.zeros((self.dim, 1))))

    # -- main loop ------------------------------------------------------

    def compose(self, ids: list[int], tokens: list[str], mode: str,
                constraints: ConstraintSet,
                rng: np.random.Generator | None = None,
                want_entropy: bool = False) -> ComposeOutcome:
        if len(ids) == 0:
            raise ComposeError("cannot compose an empty expression")
        if mode not in ("sampled", "greedy"):
            raise ComposeError(f"unknown mode {mode!r}")
        if mode == "sampled" and rng is None:
            raise ComposeError("sampled mode needs an RNG")
        T = len(ids)
        out = ComposeOutcome(tree=None, mode=mode)  # type: ignore[arg-type]

        if self.semantic_locality:
            h_all, c_all = self.leaf.states(ids)
        else:
            reps = self.pre_context.encode(ids)
            cols = [dg.concat([reps.fw[i], reps.bw[i]], axis=0)
                    for i in range(T)]
            ctx = dg.concat(cols, axis=1) if T > 1 else cols[0]
            h_all = dg.add(dg.matmul(self.mix_w, ctx), self.mix_b)
            c_all = dg.constant(np.zeros((self.dim, T)))

        leaves: list[TreeNode] = []
        h_cols: list[Tensor] = []
        c_cols: list[Tensor] = []
        for i in range(T):
            node = TreeNode(id=i, lo=i, hi=i + 1)
            h_i = dg.slice_cols(h_all, i, i + 1)
            c_i = dg.slice_cols(c_all, i, i + 1)
            if nonterminal_allowed(0, tokens[i:i + 1], constraints):
                label, logp, ent = self.classify_label(
                    h_i, mode, rng, want_entropy)
                node.label = label
                if logp is not None:
                    out.log_probs.append(logp)
                if ent is not None:
                    out.entropies.append(ent)
            if node.label > 0 and self.abstraction:
                state = self.reduce_abstraction(node.label)
                h_i, c_i = state.h, state.c
            leaves.append(node)
            h_cols.append(h_i)
            c_cols.append(c_i)

        row = list(leaves)
        h_row = dg.concat(h_cols, axis=1) if T > 1 else h_cols[0]
        c_row = dg.concat(c_cols, axis=1) if T > 1 else c_cols[0]
        internals: list[TreeNode] = []

        for step in range(T - 1):
            m = len(row) - 1
            hl = dg.slice_cols(h_row, 0, m)
            hr = dg.slice_cols(h_row, 1, m + 1)
            cl = dg.slice_cols(c_row, 0, m)
            cr = dg.slice_cols(c_row, 1, m + 1)
            h_cand, c_cand = self.cell.batch(hl, cl, hr, cr)
            scores = self.scorer.scores(h_cand)
            if mode == "greedy":
                k = int(np.argmax(scores.data))  # leftmost max wins
            elif m == 1:
                k = 0  # forced merge: log-prob exactly 0, nothing recorded
            else:
                probs = stable_probs(scores.data)
                k = int(rng.choice(m, p=probs))
                out.log_probs.append(
                    dg.reshape(dg.take(dg.log_softmax(scores), [k]), ()))
                if want_entropy:
                    out.entropies.append(_entropy(scores))

            node = TreeNode(id=T + step, lo=row[k].lo, hi=row[k + 1].hi,
                            left=row[k], right=row[k + 1], step=step)
            node.nt_children = row[k].exposed() + row[k + 1].exposed()
            h_pre = dg.slice_cols(h_cand, k, k + 1)
            c_pre = dg.slice_cols(c_cand, k, k + 1)
            out.reps[node.id] = h_pre

            n_nt = len(node.nt_children)
            if nonterminal_allowed(n_nt, tokens[node.lo:node.hi], constraints):
                label, logp, ent = self.classify_label(
                    h_pre, mode, rng, want_entropy)
                node.label = label
                if logp is not None:
                    out.log_probs.append(logp)
                if ent is not None:
                    out.entropies.append(ent)

            if node.label > 0 and self.abstraction:
                state = self.reduce_abstraction(node.label)
                h_up, c_up = state.h, state.c
            else:
                h_up, c_up = h_pre, c_pre

            internals.append(node)
            row[k:k + 2] = [node]
            h_row = _splice(h_row, h_up, k)
            c_row = _splice(c_row, c_up, k)

        tree = SyntaxTree(root=row[0], n_tokens=T,
                          nodes=leaves + internals)
        out.tree = tree
        return out


def _splice(mat: Tensor, col: Tensor, k: int) -> Tensor:
    """Replace columns [k, k+2) of ``mat`` by the single column ``col``."""
    n = mat.shape[1]
    parts: list[Tensor] = []
    if k > 0:
        parts.append(dg.slice_cols(mat, 0, k))
    parts.append(col)
    if k + 2 < n:
        parts.append(dg.slice_cols(mat, k + 2, n))
    return parts[0] if len(parts) == 1 else dg.concat(parts, axis=1)


def _entropy(logits: Tensor) -> Tensor:
    p = dg.softmax(logits)
    lp = dg.log_softmax(logits)
    return dg.scale(dg.tsum(dg.mul(p, lp)), -1.0)


def _choose(logits: Tensor, mode: str, rng: np.random.Generator | None,
            want_entropy: bool):
    if mode == "greedy":
        return int(np.argmax(logits.data)), None, None
    probs = stable_probs(logits.data)
    idx = int(rng.choice(len(probs), p=probs))
    logp = dg.reshape(dg.take(dg.log_softmax(logits), [idx]), ())
    ent = _entropy(logits) if want_entropy else None
    return idx, logp, ent
