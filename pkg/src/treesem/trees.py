"""Binary syntax trees over token spans.

A tree covers ``n_tokens`` leaves and contains exactly ``n_tokens - 1``
internal nodes, each merging two adjacent spans. Nodes may carry a
nonterminal label in ``1..N``; label 0 means unlabeled. The labeled nodes
form a coarser constituent tree: ``nt_children`` lists, for every node, the
maximal labeled nodes strictly below it (its visible nonterminal children).
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(eq=False)
class TreeNode:
    id: int
    lo: int
    hi: int
    label: int = 0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    step: int = -1  # merge-step index for internal nodes, -1 for leaves
    nt_children: list["TreeNode"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def span(self) -> tuple[int, int]:
        return (self.lo, self.hi)

    def exposed(self) -> list["TreeNode"]:
        """Nonterminal nodes this node presents upward: itself if labeled,
        otherwise its visible nonterminal children."""
        return [self] if self.label > 0 else self.nt_children


class TreeError(ValueError):
    pass


def leaf(index: int, label: int = 0) -> TreeNode:
    return TreeNode(id=-1, lo=index, hi=index + 1, label=label)


def merge(left: TreeNode, right: TreeNode, label: int = 0) -> TreeNode:
    if left.hi != right.lo:
        raise TreeError(
            f"children spans not adjacent: {left.span} then {right.span}"
        )
    node = TreeNode(id=-1, lo=left.lo, hi=right.hi, label=label,
                    left=left, right=right)
    node.nt_children = left.exposed() + right.exposed()
    return node


@dataclass
class SyntaxTree:
    root: TreeNode
    n_tokens: int
    nodes: list[TreeNode]  # leaves by position, then internals in id order

    @classmethod
    def assemble(cls, root: TreeNode, n_tokens: int) -> "SyntaxTree":
        """Finalize a manually built tree: assign ids and validate spans."""
        leaves: list[TreeNode | None] = [None] * n_tokens
        internals: list[TreeNode] = []

        def visit(node: TreeNode) -> None:
            if node.is_leaf:
                if not (0 <= node.lo < n_tokens and node.hi == node.lo + 1):
                    raise TreeError(f"leaf span {node.span} out of range")
                if leaves[node.lo] is not None:
                    raise TreeError(f"duplicate leaf at {node.lo}")
                leaves[node.lo] = node
            else:
                assert node.left is not None and node.right is not None
                visit(node.left)
                visit(node.right)
                internals.append(node)

        visit(root)
        if root.span != (0, n_tokens):
            raise TreeError(f"root span {root.span} != (0, {n_tokens})")
        if any(l is None for l in leaves):
            raise TreeError("tree does not cover every token")
        if len(internals) != n_tokens - 1:
            raise TreeError(
                f"expected {n_tokens - 1} internal nodes, found {len(internals)}"
            )
        for i, l in enumerate(leaves):
            l.id = i  # type: ignore[union-attr]
        for k, node in enumerate(internals):
            node.id = n_tokens + k
            node.step = k
        return cls(root=root, n_tokens=n_tokens,
                   nodes=list(leaves) + internals)  # type: ignore[arg-type]

    @property
    def internal_nodes(self) -> list[TreeNode]:
        return self.nodes[self.n_tokens:]

    @property
    def labeled_nodes(self) -> list[TreeNode]:
        return [n for n in self.nodes if n.label > 0]

    def labeled_spans(self) -> frozenset[tuple[int, int]]:
        return frozenset(n.span for n in self.labeled_nodes)

    def top_level(self) -> list[TreeNode]:
        """Maximal labeled nodes of the whole tree, in span order."""
        return sorted(self.root.exposed(), key=lambda n: n.lo)

    def to_text(self) -> str:
        def ser(node: TreeNode) -> str:
            if node.is_leaf:
                return f"({node.label} {node.lo} {node.hi})"
            return (f"({node.label} {node.lo} {node.hi} "
                    f"{ser(node.left)} {ser(node.right)})")  # type: ignore[arg-type]

        return ser(self.root)

    @classmethod
    def from_text(cls, text: str) -> "SyntaxTree":
        toks = text.replace("(", " ( ").replace(")", " ) ").split()
        pos = 0

        def parse() -> TreeNode:
            nonlocal pos
            if pos >= len(toks) or toks[pos] != "(":
                raise TreeError(f"expected '(' at token {pos} of tree text")
            pos += 1
            try:
                label, lo, hi = (int(toks[pos + k]) for k in range(3))
            except (ValueError, IndexError):
                raise TreeError(f"bad node header at token {pos}") from None
            pos += 3
            if toks[pos] == ")":
                pos += 1
                if hi != lo + 1:
                    raise TreeError(f"leaf span ({lo}, {hi}) is not unit width")
                return leaf(lo, label)
            left_child = parse()
            right_child = parse()
            if toks[pos] != ")":
                raise TreeError(f"expected ')' at token {pos} of tree text")
            pos += 1
            node = merge(left_child, right_child, label)
            if node.span != (lo, hi):
                raise TreeError(f"stated span ({lo}, {hi}) != derived {node.span}")
            return node

        root = parse()
        if pos != len(toks):
            raise TreeError(f"trailing content at token {pos} of tree text")
        return cls.assemble(root, root.hi)
