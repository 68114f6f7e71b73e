"""Neural building blocks: leaf projection, binary child-sum Tree-LSTM,
merge scoring, and a Bi-LSTM for contextual span representations.

Everything operates on column-matrix tensors of shape (D, m) so that all
adjacent merge candidates at one step go through a single set of matrix
ops; a single node state is just the m=1 case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffgraph as dg
from .diffgraph import ParamStore, Tensor


class UnknownTokenId(ValueError):
    def __init__(self, token_id: int, vocab_size: int) -> None:
        super().__init__(
            f"token id {token_id} outside vocabulary of size {vocab_size}")
        self.token_id = token_id


@dataclass
class NodeState:
    """Hidden and memory vectors of one tree node, each of shape (D, 1)."""
    h: Tensor
    c: Tensor


class LeafEncoder:
    """Embeds token ids and projects them to initial node states."""

    def __init__(self, store: ParamStore, rng: np.random.Generator,
                 vocab_size: int, dim: int, group: str = "composer") -> None:
        self.vocab_size = vocab_size
        self.dim = dim
        self.emb = store.add(group, "leaf.emb",
                             dg.uniform(rng, (vocab_size, dim), 0.1))
        w = dg.glorot_width(dim, dim)
        self.w = store.add(group, "leaf.w", dg.uniform(rng, (dim, dim), w))
        self.b = store.add(group, "leaf.b", np.zeros((dim, 1)))

    def _check(self, ids) -> None:
        for tid in ids:
            if not 0 <= int(tid) < self.vocab_size:
                raise UnknownTokenId(int(tid), self.vocab_size)

    def states(self, ids) -> tuple[Tensor, Tensor]:
        """Initial (H, C) matrices of shape (D, T) for a token-id sequence."""
        self._check(ids)
        e = dg.transpose(dg.embedding(self.emb, ids))
        h = dg.add(dg.matmul(self.w, e), self.b)
        c = dg.constant(np.zeros((self.dim, len(ids))))
        return h, c

    def leaf_init(self, token_id: int) -> NodeState:
        h, c = self.states([token_id])
        return NodeState(h=h, c=c)


class TreeCell:
    """Binary child-sum Tree-LSTM: shared forget weights give one forget
    gate per child; input/output gates and the candidate read the summed
    child hidden states."""

    def __init__(self, store: ParamStore, rng: np.random.Generator,
                 dim: int, group: str = "composer") -> None:
        self.dim = dim
        w = dg.glorot_width(dim, dim)
        for gate in ("i", "o", "u", "f"):
            setattr(self, "u_" + gate,
                    store.add(group, f"cell.u_{gate}",
                              dg.uniform(rng, (dim, dim), w)))
        self.b_i = store.add(group, "cell.b_i", np.zeros((dim, 1)))
        self.b_o = store.add(group, "cell.b_o", np.zeros((dim, 1)))
        self.b_u = store.add(group, "cell.b_u", np.zeros((dim, 1)))
        # forget bias 1.0 stabilizes early training
        self.b_f = store.add(group, "cell.b_f", np.ones((dim, 1)))

    def batch(self, hl: Tensor, cl: Tensor, hr: Tensor, cr: Tensor
              ) -> tuple[Tensor, Tensor]:
        hsum = dg.add(hl, hr)
        i = dg.sigmoid(dg.add(dg.matmul(self.u_i, hsum), self.b_i))
        o = dg.sigmoid(dg.add(dg.matmul(self.u_o, hsum), self.b_o))
        u = dg.tanh(dg.add(dg.matmul(self.u_u, hsum), self.b_u))
        f_l = dg.sigmoid(dg.add(dg.matmul(self.u_f, hl), self.b_f))
        f_r = dg.sigmoid(dg.add(dg.matmul(self.u_f, hr), self.b_f))
        c = dg.add(dg.add(dg.mul(i, u), dg.mul(f_l, cl)), dg.mul(f_r, cr))
        h = dg.mul(o, dg.tanh(c))
        return h, c

    def __call__(self, left: NodeState, right: NodeState) -> NodeState:
        if left.h.shape != (self.dim, 1) or right.h.shape != (self.dim, 1):
            raise dg.ShapeMismatch(
                f"tree cell: child shapes {left.h.shape} / {right.h.shape}, "
                f"need ({self.dim}, 1)")
        h, c = self.batch(left.h, left.c, right.h, right.c)
        return NodeState(h=h, c=c)


class MergeScorer:
    """Affine map from a candidate parent's hidden state to a scalar."""

    def __init__(self, store: ParamStore, rng: np.random.Generator,
                 dim: int, group: str = "composer") -> None:
        w = dg.glorot_width(dim, 1)
        self.w = store.add(group, "scorer.w", dg.uniform(rng, (1, dim), w))
        self.b = store.add(group, "scorer.b", np.zeros((1, 1)))

    def scores(self, h: Tensor) -> Tensor:
        """Scores of m candidates from their (D, m) hidden matrix: (m,)."""
        s = dg.add(dg.matmul(self.w, h), self.b)
        return dg.reshape(s, (h.shape[1],))

    def __call__(self, h: Tensor) -> Tensor:
        return dg.reshape(self.scores(h), ())


@dataclass
class ContextReps:
    """Per-token forward/backward Bi-LSTM states, of shape (D, 1) each."""
    fw: list[Tensor]
    bw: list[Tensor]

    def span_rep(self, lo: int, hi: int) -> Tensor:
        """Representation of token span [lo, hi): endpoint concatenation."""
        if not 0 <= lo < hi <= len(self.fw):
            raise ValueError(f"span [{lo}, {hi}) out of range")
        return dg.concat([self.fw[hi - 1], self.bw[lo]], axis=0)


class BiLstmContext:
    """Bidirectional LSTM over the token sequence; owns its embeddings so
    its gradients stay inside the lexical-interpreter parameter group."""

    def __init__(self, store: ParamStore, rng: np.random.Generator,
                 vocab_size: int, dim: int, group: str = "lexical",
                 prefix: str = "context") -> None:
        self.vocab_size = vocab_size
        self.dim = dim
        self.prefix = prefix
        self.emb = store.add(group, f"{prefix}.emb",
                             dg.uniform(rng, (vocab_size, dim), 0.1))
        w_x = dg.glorot_width(dim, 4 * dim)
        w_h = dg.glorot_width(dim, 4 * dim)
        self.params = {}
        for direction in ("fw", "bw"):
            self.params[direction] = {
                "w_x": store.add(group, f"{prefix}.{direction}.w_x",
                                 dg.uniform(rng, (4 * dim, dim), w_x)),
                "w_h": store.add(group, f"{prefix}.{direction}.w_h",
                                 dg.uniform(rng, (4 * dim, dim), w_h)),
                "b": store.add(group, f"{prefix}.{direction}.b",
                               _lstm_bias(dim)),
            }

    def _run(self, proj: Tensor, order: range, direction: str) -> list[Tensor]:
        d = self.dim
        p = self.params[direction]
        h = dg.constant(np.zeros((d, 1)))
        c = dg.constant(np.zeros((d, 1)))
        out: list[Tensor | None] = [None] * len(order)
        for t in order:
            gates = dg.add(dg.slice_cols(proj, t, t + 1),
                           dg.matmul(p["w_h"], h))
            i = dg.sigmoid(dg.slice_rows(gates, 0, d))
            f = dg.sigmoid(dg.slice_rows(gates, d, 2 * d))
            o = dg.sigmoid(dg.slice_rows(gates, 2 * d, 3 * d))
            u = dg.tanh(dg.slice_rows(gates, 3 * d, 4 * d))
            c = dg.add(dg.mul(i, u), dg.mul(f, c))
            h = dg.mul(o, dg.tanh(c))
            out[t] = h
        return out  # type: ignore[return-value]

    def encode(self, ids) -> ContextReps:
        if len(ids) == 0:
            raise ValueError("cannot encode an empty expression")
        for tid in ids:
            if not 0 <= int(tid) < self.vocab_size:
                raise UnknownTokenId(int(tid), self.vocab_size)
        e = dg.transpose(dg.embedding(self.emb, ids))  # (D, T)
        reps = {}
        for direction, order in (("fw", range(len(ids))),
                                 ("bw", range(len(ids) - 1, -1, -1))):
            p = self.params[direction]
            proj = dg.add(dg.matmul(p["w_x"], e), p["b"])
            reps[direction] = self._run(proj, order, direction)
        return ContextReps(fw=reps["fw"], bw=reps["bw"])


def _lstm_bias(dim: int) -> np.ndarray:
    b = np.zeros((4 * dim, 1))
    b[dim:2 * dim] = 1.0  # forget-gate section
    return b
