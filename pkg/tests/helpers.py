"""Shared test utilities: random well-typed (tree, assignment) cases and
finite-difference checks against parameter tensors."""

from __future__ import annotations

import numpy as np

from treesem.diffgraph import Tensor, backward
from treesem.semalg import Domain, Kind, cfq_like_domain, cogs_like_domain
from treesem.trees import SyntaxTree, leaf, merge


def fd_check_param(fn, param: Tensor, rng: np.random.Generator,
                   n_coords: int = 12, eps: float = 1e-5) -> float:
    """Central-difference check of d fn() / d param at sampled coordinates.

    ``fn`` rebuilds the scalar-valued graph on each call; the parameter is
    perturbed in place and restored. Returns the max relative error.
    """
    param._grad = None  # earlier backward passes may have touched it
    out = fn()
    backward(out)
    analytic = param.grad.copy()
    flat_size = param.data.size
    coords = rng.choice(flat_size, size=min(n_coords, flat_size),
                        replace=False)
    worst = 0.0
    for flat_idx in coords:
        idx = np.unravel_index(int(flat_idx), param.data.shape)
        saved = param.data[idx]
        param.data[idx] = saved + eps
        f_plus = float(fn().data)
        param.data[idx] = saved - eps
        f_minus = float(fn().data)
        param.data[idx] = saved
        numeric = (f_plus - f_minus) / (2 * eps)
        a = float(analytic[idx])
        worst = max(worst, abs(a - numeric) / max(1e-8, abs(a) + abs(numeric)))
    return worst

DEFAULT_ENTITIES = [f"M{i}" for i in range(6)]
DEFAULT_PREDICATES = ["DIRECT", "EDIT", "PRODUCE", "MARRY", "PREQUEL"]
DEFAULT_ATTRIBUTES = ["ITALIAN", "FRENCH", "FEMALE"]


def small_cfq_domain() -> Domain:
    return cfq_like_domain(DEFAULT_ENTITIES, DEFAULT_PREDICATES,
                           DEFAULT_ATTRIBUTES)


def small_cogs_domain() -> Domain:
    return cogs_like_domain(["Emma", "Liam", "Ava"],
                            ["cake", "table", "girl", "stage"],
                            ["eat", "see", "give", "hope"])


def kind_letter_map(domain: Domain) -> dict[str, str]:
    letters = {Kind.ENTITY: "E", Kind.PREDICATE: "P", Kind.ATTRIBUTE: "A"}
    return {pid: letters[p.kind] for pid, p in domain.primitives.items()}


def _ops_by_result(domain: Domain):
    table: dict[Kind, list[tuple[str, tuple[Kind, ...]]]] = {}
    for op in domain.operations.values():
        for sig, res in op.signatures:
            table.setdefault(res, []).append((op.id, sig))
    for lst in table.values():
        lst.sort()
    return table


def _prims_by_kind(domain: Domain):
    table: dict[Kind, list[str]] = {}
    for p in domain.primitives.values():
        table.setdefault(p.kind, []).append(p.id)
    for lst in table.values():
        lst.sort()
    return table


class _AstBuilder:
    def __init__(self, domain: Domain, rng: np.random.Generator) -> None:
        self.ops = _ops_by_result(domain)
        self.prims = _prims_by_kind(domain)
        self.rng = rng

    def gen(self, kind: Kind, depth: int):
        can_leaf = kind in self.prims
        if can_leaf and (depth <= 0 or kind not in self.ops
                         or self.rng.random() < 0.4):
            ids = self.prims[kind]
            return ("prim", ids[self.rng.integers(len(ids))])
        choices = self.ops[kind]
        if depth <= 0:
            # No primitive of this kind: pick an op whose arguments ground out.
            grounded = [(o, s) for o, s in choices
                        if all(k in self.prims for k in s)]
            choices = grounded or choices
        op_id, sig = choices[self.rng.integers(len(choices))]
        return ("op", op_id,
                self.gen(sig[0], depth - 1), self.gen(sig[1], depth - 1))


def _realize(ast, tokens, entries, rng, n_labels=3):
    """Turn an AST into tree nodes, appending tokens left to right."""
    if ast[0] == "prim":
        idx = len(tokens)
        tokens.append(f"w{idx}")
        node = leaf(idx, label=int(rng.integers(1, n_labels + 1)))
        entries.append((node, ("primitive", ast[1])))
        return node
    _, op_id, a1, a2 = ast
    left = _realize(a1, tokens, entries, rng, n_labels)
    if rng.random() < 0.3:  # unlabeled filler token between the children
        fidx = len(tokens)
        tokens.append(f"f{fidx}")
        left = merge(left, leaf(fidx))
    right = _realize(a2, tokens, entries, rng, n_labels)
    node = merge(left, right, label=int(rng.integers(1, n_labels + 1)))
    entries.append((node, ("operation", op_id)))
    return node


def random_cfq_case(domain: Domain, rng: np.random.Generator, max_depth=3):
    """A random well-typed question: (tree, assignment, tokens)."""
    builder = _AstBuilder(domain, rng)
    if rng.random() < 0.5:
        lead = "who"
        if rng.random() < 0.7:
            join_ops = [("JOIN_PE", (Kind.PREDICATE, Kind.ENTITY)),
                        ("JOIN_EP", (Kind.ENTITY, Kind.PREDICATE)),
                        ("JOIN_PA", (Kind.PREDICATE, Kind.ATTRIBUTE)),
                        ("JOIN_AP", (Kind.ATTRIBUTE, Kind.PREDICATE))]
            op_id, sig = join_ops[rng.integers(len(join_ops))]
            ast = ("op", op_id, builder.gen(sig[0], max_depth - 1),
                   builder.gen(sig[1], max_depth - 1))
        else:
            ast = builder.gen(Kind.ENTITY, max_depth)
    else:
        lead = "is"
        subject = ("prim",
                   builder.prims[Kind.ENTITY][rng.integers(
                       len(builder.prims[Kind.ENTITY]))])
        if rng.random() < 0.5:
            ast = ("op", "AND_EE", subject, builder.gen(Kind.ENTITY, max_depth - 1))
        else:
            ast = ("op", "AND_EA", subject,
                   builder.gen(Kind.ATTRIBUTE, max_depth - 1))
    tokens = [lead]
    entries: list = []
    body = _realize(ast, tokens, entries, rng)
    root = merge(leaf(0), body)
    qidx = len(tokens)
    tokens.append("?")
    root = merge(root, leaf(qidx))
    tree = SyntaxTree.assemble(root, len(tokens))
    assignment = {node.id: entry for node, entry in entries}
    return tree, assignment, tokens


def random_cogs_case(domain: Domain, rng: np.random.Generator, max_depth=3):
    """A random well-typed declarative: (tree, assignment, tokens)."""
    builder = _AstBuilder(domain, rng)
    ast = builder.gen(Kind.PROPOSITION, max_depth)
    tokens: list[str] = []
    entries: list = []
    body = _realize(ast, tokens, entries, rng)
    dot = len(tokens)
    tokens.append(".")
    root = merge(body, leaf(dot))
    tree = SyntaxTree.assemble(root, len(tokens))
    assignment = {node.id: entry for node, entry in entries}
    return tree, assignment, tokens
