"""Reverse-mode automatic differentiation over dense float64 tensors.

Define-by-run: every operation returns a new `Tensor` holding its value,
its parents, and a closure that routes the output gradient to the parents.
Graphs are rebuilt per example; `backward` walks one scalar root. Supported
primitives cover what tree-structured recurrent cells need: add (with
column/scalar broadcast), elementwise mul, scalar scale, matmul, transpose,
concat, slicing/gather, reshape, sigmoid, tanh, softmax, log-softmax, sum,
and embedding lookup. No operator fusion, no higher-order derivatives.
"""

from __future__ import annotations

import hashlib
import json
from typing import Callable, Iterable, Iterator

import numpy as np

FORMAT_VERSION = 1


class ShapeMismatch(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


class CheckpointError(ValueError):
    pass


_GRAD_ENABLED = True


class no_grad:
    """Context manager: ops built inside track no gradients (fast eval)."""

    def __enter__(self) -> None:
        global _GRAD_ENABLED
        self._saved = _GRAD_ENABLED
        _GRAD_ENABLED = False

    def __exit__(self, *exc) -> None:
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._saved


class Tensor:
    __slots__ = ("data", "_grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), op: str = "leaf") -> None:
        self.data = data if isinstance(data, np.ndarray) \
            else np.asarray(data, dtype=np.float64)
        self._grad: np.ndarray | None = None
        self.requires_grad = _GRAD_ENABLED and (
            requires_grad or any(p.requires_grad for p in parents))
        self._parents = parents if self.requires_grad else ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def grad(self) -> np.ndarray:
        """Accumulated gradient; zeros until backward reaches this node."""
        if self._grad is None:
            return np.zeros_like(self.data)
        return self._grad

    def _acc(self, g: np.ndarray) -> None:
        if self._grad is None:
            self._grad = np.array(g, dtype=np.float64)
        else:
            self._grad += g

    def _ensure_grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    def detach(self) -> "Tensor":
        return Tensor(self.data, op="detach")

    def item(self) -> float:
        return float(self.data)

    # Operator sugar; floats multiply via `scale`.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return add(self, scale(other, -1.0))

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.data.shape})"


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True,
                  op="param")


def constant(data) -> Tensor:
    return Tensor(data, op="const")


def uniform(rng: np.random.Generator, shape: tuple[int, ...],
            half_width: float) -> np.ndarray:
    return rng.uniform(-half_width, half_width, size=shape)


def glorot_width(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    sa, sb = a.data.shape, b.data.shape
    if sa == sb:
        mode = 0
    elif len(sa) == 2 and sb == (sa[0], 1):
        mode = 1  # column-broadcast bias
    elif sb == ():
        mode = 2
    else:
        raise ShapeMismatch(f"add: incompatible shapes {sa} + {sb}")
    out = Tensor(a.data + b.data, parents=(a, b), op="add")
    if out.requires_grad:
        def _bw(g: np.ndarray) -> None:
            if a.requires_grad:
                a._acc(g)
            if b.requires_grad:
                if mode == 0:
                    b._acc(g)
                elif mode == 1:
                    b._acc(g.sum(axis=1, keepdims=True))
                else:
                    b._acc(g.sum())
        out._backward = _bw
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(
            f"mul: incompatible shapes {a.data.shape} * {b.data.shape}")
    out = Tensor(a.data * b.data, parents=(a, b), op="mul")
    if out.requires_grad:
        def _bw(g: np.ndarray) -> None:
            if a.requires_grad:
                a._acc(g * b.data)
            if b.requires_grad:
                b._acc(g * a.data)
        out._backward = _bw
    return out


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c, parents=(a,), op="scale")
    if out.requires_grad:
        def _bw(g: np.ndarray) -> None:
            a._acc(g * c)
        out._backward = _bw
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 \
            or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(
            f"matmul: incompatible shapes {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, parents=(a, b), op="matmul")
    if out.requires_grad:
        def _bw(g: np.ndarray) -> None:
            if a.requires_grad:
                a._acc(g @ b.data.T)
            if b.requires_grad:
                b._acc(a.data.T @ g)
        out._backward = _bw
    return out


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeMismatch(f"transpose: need 2-d, got {a.data.shape}")
    out = Tensor(a.data.T.copy(), parents=(a,), op="transpose")
    if out.requires_grad:
        def _bw(g: np.ndarray) -> None:
            a._acc(g.T)
        out._backward = _bw
    return out


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise ShapeMismatch("concat: empty input list")
    ndim = parts[0].data.ndim
    if any(p.data.ndim != ndim for p in parts) or axis >= ndim:
        raise ShapeMismatch(
            f"concat: axis {axis} over shapes "
            f"{[p.data.shape for p in parts]}")
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis),
                 parents=tuple(parts), op="concat")
    if out.requires_grad:
        sizes = [p.data.shape[axis] for p in parts]
        offsets = np.cumsum([0] + sizes)

        def _bw(g: np.ndarray) -> None:
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    sl = [slice(None)] * ndim
                    sl[axis] = slice(lo, hi)
                    p._acc(g[tuple(sl)])
        out._backward = _bw
    return out


def slice_cols(a: Tensor, lo: int, hi: int) -> Tensor:
    if a.data.ndim != 2 or not (0 <= lo <= hi <= a.data.shape[1]):
        raise ShapeMismatch(
            f"slice: columns [{lo}:{hi}] of shape {a.data.shape}")
    out = Tensor(a.data[:, lo:hi].copy(), parents=(a,), op="slice")
    if out.requires_grad:
        def _bw(g: np.ndarray) -> None:
            acc = a._ensure_grad()
            acc[:, lo:hi] += g
        out._backward = _bw
    return out


def slice_rows(a: Tensor, lo: int, hi: int) -> Tensor:
    if a.data.ndim != 2 or not (0 <= lo <= hi <= a.data.shape[0]):
        raise ShapeMismatch(
            f"slice: rows [{lo}:{hi}] of shape {a.data.shape}")
    out = Tensor(a.data[lo:hi, :].copy(), parents=(a,), op="slice")
    if out.requires_grad:
        def _bw(g: np.ndarray) -> None:
            acc = a._ensure_grad()
            acc[lo:hi, :] += g
        out._backward = _bw
    return out


def take(a: Tensor, indices) -> Tensor:
    if a.data.ndim != 1:
        raise ShapeMismatch(f"take: need 1-d input, got {a.data.shape}")
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise ShapeMismatch(
            f"take: index out of range for length {a.data.shape[0]}")
    out = Tensor(a.data[idx], parents=(a,), op="slice")
    if out.requires_grad:
        def _bw(g: np.ndarray) -> None:
            acc = a._ensure_grad()
            np.add.at(acc, idx, g)
        out._backward = _bw
    return out


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    if int(np.prod(a.data.shape)) != int(np.prod(shape)):
        raise ShapeMismatch(f"reshape: {a.data.shape} -> {shape}")
    out = Tensor(a.data.reshape(shape).copy(), parents=(a,), op="reshape")
    if out.requires_grad:
        def _bw(g: np.ndarray) -> None:
            a._acc(g.reshape(a.data.shape))
        out._backward = _bw
    return out


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    out = Tensor(s, parents=(a,), op="sigmoid")
    if out.requires_grad:
        def _bw(g: np.ndarray) -> None:
            a._acc(g * s * (1.0 - s))
        out._backward = _bw
    return out


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    out = Tensor(t, parents=(a,), op="tanh")
    if out.requires_grad:
        def _bw(g: np.ndarray) -> None:
            a._acc(g * (1.0 - t * t))
        out._backward = _bw
    return out


def softmax(a: Tensor) -> Tensor:
    if a.data.ndim != 1:
        raise ShapeMismatch(f"softmax: need 1-d logits, got {a.data.shape}")
    x = a.data
    if not np.all(np.isfinite(x)):
        raise NumericalError("softmax: non-finite logits")
    e = np.exp(x - x.max())
    s = e / e.sum()
    out = Tensor(s, parents=(a,), op="softmax")
    if out.requires_grad:
        def _bw(g: np.ndarray) -> None:
            a._acc(s * (g - g @ s))
        out._backward = _bw
    return out


def log_softmax(a: Tensor) -> Tensor:
    if a.data.ndim != 1:
        raise ShapeMismatch(
            f"log-softmax: need 1-d logits, got {a.data.shape}")
    x = a.data
    if not np.all(np.isfinite(x)):
        raise NumericalError("log-softmax: non-finite logits")
    z = x - x.max()
    y = z - np.log(np.exp(z).sum())
    out = Tensor(y, parents=(a,), op="log-softmax")
    if out.requires_grad:
        def _bw(g: np.ndarray) -> None:
            a._acc(g - np.exp(y) * g.sum())
        out._backward = _bw
    return out


def tsum(a: Tensor) -> Tensor:
    out = Tensor(np.asarray(a.data.sum()), parents=(a,), op="sum")
    if out.requires_grad:
        def _bw(g: np.ndarray) -> None:
            a._acc(np.full(a.data.shape, float(g)))
        out._backward = _bw
    return out


def embedding(table: Tensor, ids) -> Tensor:
    if table.data.ndim != 2:
        raise ShapeMismatch(
            f"embedding-lookup: table must be 2-d, got {table.data.shape}")
    idx = np.asarray(ids, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeMismatch("embedding-lookup: ids must be 1-d")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ShapeMismatch(
            f"embedding-lookup: id out of range for {table.data.shape[0]} rows")
    out = Tensor(table.data[idx], parents=(table,), op="embedding-lookup")
    if out.requires_grad:
        def _bw(g: np.ndarray) -> None:
            acc = table._ensure_grad()
            np.add.at(acc, idx, g)
        out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# Backward pass and gradient checking
# ---------------------------------------------------------------------------

def backward(root: Tensor) -> None:
    """Populate gradients of everything reachable from a scalar root.

    Contributions accumulate additively across multiple uses of a node.
    """
    if root.data.shape != ():
        raise ValueError(
            f"backward needs a scalar root, got shape {root.data.shape}")
    if not np.isfinite(root.data):
        raise NumericalError("backward: root value is not finite")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    root._acc(np.asarray(1.0))
    for node in reversed(topo):
        if node._backward is not None and node._grad is not None:
            node._backward(node._grad)


def grad_check(f: Callable[[Tensor], Tensor], point: np.ndarray,
               eps: float = 1e-5) -> float:
    """Max relative disagreement between analytic and central-difference
    gradients of a scalar-valued function at ``point``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    point = np.asarray(point, dtype=np.float64)
    x = parameter(point)
    out = f(x)
    backward(out)
    analytic = x.grad.copy()

    worst = 0.0
    flat = point.ravel()
    for i in range(flat.size):
        coord = np.unravel_index(i, point.shape) if point.shape else ()
        plus = point.copy()
        minus = point.copy()
        plus[coord] += eps
        minus[coord] -= eps
        f_plus = float(f(constant(plus)).data)
        f_minus = float(f(constant(minus)).data)
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericalError(
                f"non-finite value while perturbing coordinate {i}")
        numeric = (f_plus - f_minus) / (2.0 * eps)
        a = float(analytic[coord]) if point.shape else float(analytic)
        if not np.isfinite(a):
            raise NumericalError(
                f"non-finite analytic gradient at coordinate {i}")
        denom = max(1e-8, abs(a) + abs(numeric))
        worst = max(worst, abs(a - numeric) / denom)
    return worst


# ---------------------------------------------------------------------------
# Parameter store and checkpointing
# ---------------------------------------------------------------------------

GROUPS = ("composer", "lexical", "algebraic")


class ParamStore:
    """Named parameters partitioned into the three trainable groups."""

    def __init__(self) -> None:
        self._groups: dict[str, dict[str, Tensor]] = {g: {} for g in GROUPS}

    def add(self, group: str, name: str, data: np.ndarray) -> Tensor:
        if group not in self._groups:
            raise KeyError(f"unknown parameter group {group!r}")
        for g, members in self._groups.items():
            if name in members:
                raise ValueError(f"parameter {name!r} already in group {g!r}")
        t = parameter(data)
        self._groups[group][name] = t
        return t

    def get(self, group: str, name: str) -> Tensor:
        return self._groups[group][name]

    def named(self, group: str | None = None
              ) -> Iterator[tuple[str, str, Tensor]]:
        groups = (group,) if group else GROUPS
        for g in groups:
            for name in sorted(self._groups[g]):
                yield g, name, self._groups[g][name]

    def group_tensors(self, group: str) -> list[tuple[str, Tensor]]:
        return [(n, t) for _, n, t in self.named(group)]

    def zero_grad(self) -> None:
        for _, _, t in self.named():
            t._grad = None

    def n_parameters(self) -> int:
        return sum(t.data.size for _, _, t in self.named())

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {f"{g}/{n}": t.data for g, n, t in self.named()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for g, n, t in self.named():
            key = f"{g}/{n}"
            if key not in arrays:
                raise CheckpointError(f"missing tensor {key!r} in checkpoint")
            if arrays[key].shape != t.data.shape:
                raise CheckpointError(
                    f"tensor {key!r} has shape {arrays[key].shape}, "
                    f"expected {t.data.shape}")
            t.data = np.array(arrays[key], dtype=np.float64)


def vocab_hash(vocab: Iterable[str]) -> str:
    h = hashlib.sha256()
    for token in vocab:
        h.update(token.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()[:16]


def save_checkpoint(path, header: dict,
                    arrays: dict[str, np.ndarray]) -> None:
    header = dict(header)
    header["format_version"] = FORMAT_VERSION
    payload = {"__header__": np.frombuffer(
        json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)}
    for key in sorted(arrays):
        payload[key] = arrays[key]
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        with np.load(path, allow_pickle=False) as data:
            if "__header__" not in data:
                raise CheckpointError("checkpoint has no header")
            try:
                header = json.loads(bytes(data["__header__"]).decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
            arrays = {k: data[k] for k in data.files if k != "__header__"}
    except (OSError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"unreadable checkpoint: {exc}") from exc
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} not supported "
            f"(this build reads version {FORMAT_VERSION})")
    return header, arrays
