"""Typed semantic algebra: values, operations, evaluation, and equivalence.

Meanings are propositions: finite sets of ground atoms. An atom is either a
predicate path ``subject P1.P2 object`` or an attribute constraint
``subject ATTR=a``. Two built-in domains supply the operation inventories:

* ``cfq_like_domain`` — conjunction and relational-join operations over
  attribute / predicate / entity values, with question frames that bind an
  answer variable (wh) or assert facts about a named subject (yes/no).
* ``cogs_like_domain`` — event-style operations (prepositional modifiers,
  thematic-role filling, clausal links) over declarative sentences.

Evaluation folds a labeled syntax tree bottom-up: lexical nodes produce
primitive values, algebraic nodes apply an operation to the values of their
visible nonterminal children, and the sentence frame (keyed by the leading
token) grounds the result to a proposition. Any type mismatch yields an
`EvaluationFailure` marker rather than an exception.
"""

from __future__ import annotations

import itertools
import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Mapping

from .trees import SyntaxTree, TreeNode

logger = logging.getLogger(__name__)

# Beyond this many variables, canonicalization falls back to first-appearance
# numbering (factorial bijection search becomes too expensive).
CANON_VAR_CAP = 8

ANSWER_VAR = 0


class Kind(str, Enum):
    ATTRIBUTE = "attribute"
    PREDICATE = "predicate"
    ENTITY = "entity"
    PROPOSITION = "proposition"


# ---------------------------------------------------------------------------
# References and atoms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Var:
    index: int

    def __str__(self) -> str:
        return f"?x{self.index}"


@dataclass(frozen=True)
class Ent:
    name: str

    def __str__(self) -> str:
        return self.name


Ref = Var | Ent


@dataclass(frozen=True)
class PathAtom:
    subject: Ref
    chain: tuple[str, ...]
    obj: Ref

    def __str__(self) -> str:
        return f"{self.subject} {'.'.join(self.chain)} {self.obj}"


@dataclass(frozen=True)
class AttrAtom:
    subject: Ref
    attr: str

    def __str__(self) -> str:
        return f"{self.subject} ATTR={self.attr}"


Atom = PathAtom | AttrAtom


# ---------------------------------------------------------------------------
# Value terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Anon:
    """Anonymous entity constrained by attributes ("an Italian")."""
    attrs: frozenset[str]


Tail = Ent | Anon


@dataclass(frozen=True)
class PredTerm:
    """A predicate chain with attribute constraints on its subject."""
    subj_attrs: frozenset[str]
    chain: tuple[str, ...]


@dataclass(frozen=True)
class EntityTerm:
    """An entity reached through a predicate chain from its head.

    ``head_attrs`` constrain the head (referent); the chain leads from the
    head to ``tail``. A bare entity has an empty chain and a named tail.
    """
    head_attrs: frozenset[str]
    chain: tuple[str, ...]
    tail: Tail


@dataclass(frozen=True)
class NounTerm:
    """Event-domain entity: a reference with attached atoms and an optional
    pending thematic role."""
    ref: Ref
    atoms: frozenset[Atom]
    role: str | None = None


@dataclass(frozen=True)
class Frame:
    """Event-domain frame: an event variable, its predicate, the roles
    already filled, and accumulated atoms."""
    event: Var
    pred: str
    roles: frozenset[str]
    atoms: frozenset[Atom]


@dataclass(frozen=True)
class SemanticValue:
    kind: Kind
    terms: frozenset

    def __post_init__(self) -> None:
        if not self.terms:
            raise ValueError(f"empty term set for {self.kind.value} value")


@dataclass(frozen=True)
class EvaluationFailure:
    """Marker for an uninterpretable tree; consumed by the reward as a
    failed parse, never raised into the trainer."""
    reason: str


class TypeMismatch(Exception):
    """Operation applied to arguments outside its signatures."""


# ---------------------------------------------------------------------------
# Operations and domains
# ---------------------------------------------------------------------------

ApplyFn = Callable[[list[SemanticValue]], SemanticValue]


@dataclass(frozen=True)
class OperationSpec:
    id: str
    arity: int
    signatures: tuple[tuple[tuple[Kind, ...], Kind], ...]
    fn: ApplyFn


@dataclass(frozen=True)
class Primitive:
    id: str
    kind: Kind


class VarAlloc:
    """Fresh-variable source for one evaluation; ?x0 is the answer variable."""

    def __init__(self, start: int = 1) -> None:
        self._next = start

    def fresh(self) -> Var:
        v = Var(self._next)
        self._next += 1
        return v


@dataclass
class Domain:
    name: str
    primitives: dict[str, Primitive]
    operations: dict[str, OperationSpec]
    frames: dict[str, str]  # leading token (lowercased) -> frame kind
    stopwords: frozenset[str]
    make_primitive: Callable[[Primitive, VarAlloc], SemanticValue]

    def arity_set(self) -> frozenset[int]:
        return frozenset(op.arity for op in self.operations.values())

    def operations_of_arity(self, n: int) -> list[str]:
        return sorted(o.id for o in self.operations.values() if o.arity == n)

    def primitive_value(self, pid: str, alloc: VarAlloc) -> SemanticValue:
        return self.make_primitive(self.primitives[pid], alloc)

    def spec(self) -> dict:
        """JSON-able description sufficient to rebuild the domain."""
        ents = sorted(p.id for p in self.primitives.values() if p.kind == Kind.ENTITY)
        preds = sorted(p.id for p in self.primitives.values() if p.kind == Kind.PREDICATE)
        attrs = sorted(p.id for p in self.primitives.values() if p.kind == Kind.ATTRIBUTE)
        return {"kind": self.name, "entities": ents, "predicates": preds,
                "attributes": attrs}


def apply(op: OperationSpec, args: list[SemanticValue]) -> SemanticValue:
    """Apply a semantic operation; raises `TypeMismatch` on bad typing."""
    if len(args) != op.arity:
        raise TypeMismatch(
            f"{op.id} expects {op.arity} arguments, got {len(args)}"
        )
    kinds = tuple(a.kind for a in args)
    if not any(kinds == sig for sig, _res in op.signatures):
        raise TypeMismatch(
            f"{op.id} not defined on ({', '.join(k.value for k in kinds)})"
        )
    return op.fn(args)


# ---------------------------------------------------------------------------
# CFQ-like operation set
# ---------------------------------------------------------------------------

def _union(kind: Kind):
    def fn(args: list[SemanticValue]) -> SemanticValue:
        return SemanticValue(kind, args[0].terms | args[1].terms)
    return fn


def _attrs_of(v: SemanticValue) -> frozenset[str]:
    return frozenset(v.terms)


def _and_attr_entity(attr_first: bool):
    def fn(args: list[SemanticValue]) -> SemanticValue:
        a, e = (args[0], args[1]) if attr_first else (args[1], args[0])
        attrs = _attrs_of(a)
        terms = frozenset(
            EntityTerm(t.head_attrs | attrs, t.chain, t.tail) for t in e.terms
        )
        return SemanticValue(Kind.ENTITY, terms)
    return fn


def _and_attr_pred(attr_first: bool):
    def fn(args: list[SemanticValue]) -> SemanticValue:
        a, p = (args[0], args[1]) if attr_first else (args[1], args[0])
        attrs = _attrs_of(a)
        terms = frozenset(
            PredTerm(t.subj_attrs | attrs, t.chain) for t in p.terms
        )
        return SemanticValue(Kind.PREDICATE, terms)
    return fn


def _join_pred_entity(pred_first: bool):
    def fn(args: list[SemanticValue]) -> SemanticValue:
        p, e = (args[0], args[1]) if pred_first else (args[1], args[0])
        out = []
        for pt in p.terms:
            for et in e.terms:
                if et.head_attrs:
                    # A flat chain cannot constrain an interior entity.
                    raise TypeMismatch(
                        "join target carries head attributes"
                    )
                out.append(EntityTerm(pt.subj_attrs, pt.chain + et.chain, et.tail))
        return SemanticValue(Kind.ENTITY, frozenset(out))
    return fn


def _join_pred_attr(pred_first: bool):
    def fn(args: list[SemanticValue]) -> SemanticValue:
        p, a = (args[0], args[1]) if pred_first else (args[1], args[0])
        attrs = _attrs_of(a)
        terms = frozenset(
            EntityTerm(t.subj_attrs, t.chain, Anon(attrs)) for t in p.terms
        )
        return SemanticValue(Kind.ENTITY, terms)
    return fn


A, P, E, PROP = Kind.ATTRIBUTE, Kind.PREDICATE, Kind.ENTITY, Kind.PROPOSITION


def cfq_like_operations() -> dict[str, OperationSpec]:
    def op(oid: str, sigs: list[tuple[tuple[Kind, ...], Kind]], fn: ApplyFn
           ) -> OperationSpec:
        return OperationSpec(oid, 2, tuple(sigs), fn)

    ops = [
        op("AND_PP", [((P, P), P)], _union(P)),
        op("AND_EE", [((E, E), E)], _union(E)),
        op("AND_AA", [((A, A), A)], _union(A)),
        op("AND_AE", [((A, E), E)], _and_attr_entity(True)),
        op("AND_EA", [((E, A), E)], _and_attr_entity(False)),
        op("AND_AP", [((A, P), P)], _and_attr_pred(True)),
        op("AND_PA", [((P, A), P)], _and_attr_pred(False)),
        op("JOIN_PE", [((P, E), E)], _join_pred_entity(True)),
        op("JOIN_EP", [((E, P), E)], _join_pred_entity(False)),
        op("JOIN_PA", [((P, A), E)], _join_pred_attr(True)),
        op("JOIN_AP", [((A, P), E)], _join_pred_attr(False)),
    ]
    return {o.id: o for o in ops}


def _cfq_primitive(prim: Primitive, alloc: VarAlloc) -> SemanticValue:
    if prim.kind == Kind.ENTITY:
        return SemanticValue(E, frozenset([EntityTerm(frozenset(), (), Ent(prim.id))]))
    if prim.kind == Kind.PREDICATE:
        return SemanticValue(P, frozenset([PredTerm(frozenset(), (prim.id,))]))
    if prim.kind == Kind.ATTRIBUTE:
        return SemanticValue(A, frozenset([prim.id]))
    raise TypeMismatch(f"primitive kind {prim.kind.value} not usable here")


CFQ_STOPWORDS = frozenset(
    "who what is are did was were a an and of the that to 's ? . ,".split()
)


def cfq_like_domain(entities: Iterable[str], predicates: Iterable[str],
                    attributes: Iterable[str]) -> Domain:
    prims = {}
    for name in entities:
        prims[name] = Primitive(name, Kind.ENTITY)
    for name in predicates:
        prims[name] = Primitive(name, Kind.PREDICATE)
    for name in attributes:
        prims[name] = Primitive(name, Kind.ATTRIBUTE)
    if len(prims) != len(set(prims)):
        raise ValueError("primitive ids must be unique across kinds")
    for pid in prims:
        _check_ident(pid)
    frames = {"who": "wh", "what": "wh",
              "is": "assert", "did": "assert", "was": "assert"}
    return Domain("cfq_like", prims, cfq_like_operations(), frames,
                  CFQ_STOPWORDS, _cfq_primitive)


# ---------------------------------------------------------------------------
# COGS-like operation set (event-style)
# ---------------------------------------------------------------------------

ROLE_ABBREV = {"AGE": "AGENT", "THE": "THEME", "REC": "RECIPIENT"}


def _modifier(prep: str, inverted: bool):
    def fn(args: list[SemanticValue]) -> SemanticValue:
        first, second = args[0], args[1]
        head, dep = (second, first) if inverted else (first, second)
        out = []
        for h in head.terms:
            atoms = set(h.atoms)
            for d in dep.terms:
                atoms |= d.atoms
                atoms.add(PathAtom(h.ref, (prep,), d.ref))
            out.append(NounTerm(h.ref, frozenset(atoms), h.role))
        return SemanticValue(E, frozenset(out))
    return fn


def _role_pair(role1: str, role2: str):
    def fn(args: list[SemanticValue]) -> SemanticValue:
        out = []
        for role, arg in ((role1, args[0]), (role2, args[1])):
            for t in arg.terms:
                if t.role is not None:
                    raise TypeMismatch(f"entity already carries role {t.role}")
                out.append(NounTerm(t.ref, t.atoms, role))
        return SemanticValue(E, frozenset(out))
    return fn


def _fill(role: str, entity_first: bool):
    # Every entity term lands in the same frame: a role pair fills two roles.
    def fn(args: list[SemanticValue]) -> SemanticValue:
        e, f = (args[0], args[1]) if entity_first else (args[1], args[0])
        out = []
        for frame in f.terms:
            roles = set(frame.roles)
            atoms = set(frame.atoms)
            for noun in e.terms:
                use_role = noun.role or role
                if use_role in roles:
                    raise TypeMismatch(f"role {use_role} already filled")
                roles.add(use_role)
                atoms |= noun.atoms
                atoms.add(PathAtom(frame.event, (use_role,), noun.ref))
            out.append(Frame(frame.event, frame.pred, frozenset(roles),
                             frozenset(atoms)))
        return SemanticValue(PROP, frozenset(out))
    return fn


def _clause_link(link: str, inverted: bool):
    def fn(args: list[SemanticValue]) -> SemanticValue:
        first, second = args[0], args[1]
        head, dep = (second, first) if inverted else (first, second)
        out = []
        for h in head.terms:
            atoms = set(h.atoms)
            for d in dep.terms:
                atoms |= d.atoms
                atoms.add(PathAtom(h.event, (link,), d.event))
                atoms.add(AttrAtom(d.event, d.pred))
            out.append(Frame(h.event, h.pred, h.roles, frozenset(atoms)))
        return SemanticValue(PROP, frozenset(out))
    return fn


def cogs_like_operations() -> dict[str, OperationSpec]:
    ops: list[OperationSpec] = []

    for prep in ("ON", "IN", "BESIDE"):
        ops.append(OperationSpec(prep, 2, (((E, E), E),), _modifier(prep, False)))
        ops.append(OperationSpec(prep + "_INV", 2, (((E, E), E),),
                                 _modifier(prep, True)))
    for a1, a2 in itertools.permutations(("AGE", "THE", "REC"), 2):
        ops.append(OperationSpec(
            f"{a1}_{a2}", 2, (((E, E), E),),
            _role_pair(ROLE_ABBREV[a1], ROLE_ABBREV[a2])))
    for role in ("AGENT", "THEME", "RECIPIENT"):
        pp = (Kind.PREDICATE, Kind.PROPOSITION)
        sig_ep = tuple(((E, x), PROP) for x in pp)
        sig_pe = tuple(((x, E), PROP) for x in pp)
        ops.append(OperationSpec(f"FILL_{role}_EP", 2, sig_ep, _fill(role, True)))
        ops.append(OperationSpec(f"FILL_{role}_PE", 2, sig_pe, _fill(role, False)))
    for link in ("CCOMP", "XCOMP"):
        pp = (Kind.PREDICATE, Kind.PROPOSITION)
        sigs = tuple(((x, y), PROP) for x in pp for y in pp)
        ops.append(OperationSpec(link, 2, sigs, _clause_link(link, False)))
        ops.append(OperationSpec(link + "_INV", 2, sigs, _clause_link(link, True)))
    return {o.id: o for o in ops}


DEFINITE_MARK = "DEF"


def _cogs_primitive(prim: Primitive, alloc: VarAlloc) -> SemanticValue:
    if prim.kind == Kind.ENTITY:
        if prim.id[0].isupper():  # proper name
            return SemanticValue(E, frozenset([NounTerm(Ent(prim.id), frozenset())]))
        noun = prim.id
        definite = noun.startswith("def_")
        if definite:
            noun = noun[len("def_"):]
        v = alloc.fresh()
        atoms = {AttrAtom(v, noun.upper())}
        if definite:
            atoms.add(AttrAtom(v, DEFINITE_MARK))
        return SemanticValue(E, frozenset([NounTerm(v, frozenset(atoms))]))
    if prim.kind == Kind.PREDICATE:
        ev = alloc.fresh()
        return SemanticValue(P, frozenset([Frame(ev, prim.id.upper(),
                                                 frozenset(), frozenset())]))
    raise TypeMismatch(f"primitive kind {prim.kind.value} not usable here")


COGS_STOPWORDS = frozenset("a the on in beside to that was by .".split())


def cogs_like_domain(names: Iterable[str], nouns: Iterable[str],
                     verbs: Iterable[str]) -> Domain:
    """Nouns get indefinite and definite (``def_``-prefixed) entity
    primitives; the leading-token table routes every sentence to the
    declarative frame."""
    prims = {}
    for n in names:
        prims[n] = Primitive(n, Kind.ENTITY)
    for n in nouns:
        prims[n] = Primitive(n, Kind.ENTITY)
        prims["def_" + n] = Primitive("def_" + n, Kind.ENTITY)
    for v in verbs:
        prims[v] = Primitive(v, Kind.PREDICATE)
    return Domain("cogs_like", prims, cogs_like_operations(),
                  {"*": "decl"}, COGS_STOPWORDS, _cogs_primitive)


def domain_from_spec(spec: dict) -> Domain:
    """Rebuild a domain from the dict produced by `Domain.spec()`."""
    kind = spec.get("kind")
    if kind == "cfq_like":
        return cfq_like_domain(spec["entities"], spec["predicates"],
                               spec["attributes"])
    if kind == "cogs_like":
        names = [e for e in spec["entities"] if e[:1].isupper()]
        nouns = [e for e in spec["entities"]
                 if not e[:1].isupper() and not e.startswith("def_")]
        return cogs_like_domain(names, nouns, spec["predicates"])
    raise ValueError(f"unknown domain kind {kind!r}")


# ---------------------------------------------------------------------------
# Sentence frames and evaluation
# ---------------------------------------------------------------------------

def _term_order(term: EntityTerm):
    tail = term.tail
    tail_key = ("e", tail.name) if isinstance(tail, Ent) \
        else ("a", tuple(sorted(tail.attrs)))
    return (tuple(sorted(term.head_attrs)), term.chain, tail_key)


def _expand_tail(tail: Tail, alloc: VarAlloc, atoms: set[Atom]) -> Ref:
    if isinstance(tail, Ent):
        return tail
    v = alloc.fresh()
    for a in sorted(tail.attrs):
        atoms.add(AttrAtom(v, a))
    return v


def _wh_frame(value: SemanticValue, alloc: VarAlloc) -> set[Atom] | EvaluationFailure:
    if value.kind != Kind.ENTITY:
        return EvaluationFailure(f"wh frame needs an entity, got {value.kind.value}")
    subject = Var(ANSWER_VAR)
    atoms: set[Atom] = set()
    for term in sorted(value.terms, key=_term_order):
        if not term.chain:
            return EvaluationFailure("wh frame over a chainless entity term")
        for a in sorted(term.head_attrs):
            atoms.add(AttrAtom(subject, a))
        obj = _expand_tail(term.tail, alloc, atoms)
        atoms.add(PathAtom(subject, term.chain, obj))
    return atoms


def _assert_frame(value: SemanticValue, alloc: VarAlloc
                  ) -> set[Atom] | EvaluationFailure:
    if value.kind != Kind.ENTITY:
        return EvaluationFailure(
            f"assertion frame needs an entity, got {value.kind.value}")
    subjects = [t for t in value.terms
                if not t.chain and isinstance(t.tail, Ent)]
    if len(subjects) != 1:
        return EvaluationFailure(
            f"assertion frame needs exactly one bare named term, "
            f"found {len(subjects)}")
    subj_term = subjects[0]
    subject = subj_term.tail
    assert isinstance(subject, Ent)
    atoms: set[Atom] = set()
    for a in sorted(subj_term.head_attrs):
        atoms.add(AttrAtom(subject, a))
    for term in sorted(value.terms, key=_term_order):
        if term is subj_term or term == subj_term:
            continue
        for a in sorted(term.head_attrs):
            atoms.add(AttrAtom(subject, a))
        if term.chain:
            obj = _expand_tail(term.tail, alloc, atoms)
            atoms.add(PathAtom(subject, term.chain, obj))
        elif isinstance(term.tail, Anon):
            for a in sorted(term.tail.attrs):
                atoms.add(AttrAtom(subject, a))
    return atoms


def _decl_frame(value: SemanticValue, alloc: VarAlloc
                ) -> set[Atom] | EvaluationFailure:
    if value.kind != Kind.PROPOSITION:
        return EvaluationFailure(
            f"declarative frame needs a proposition, got {value.kind.value}")
    atoms: set[Atom] = set()
    for frame in value.terms:
        atoms |= frame.atoms
        atoms.add(AttrAtom(frame.event, frame.pred))
    return atoms


_FRAME_FNS = {"wh": _wh_frame, "assert": _assert_frame, "decl": _decl_frame}


def frame_for(domain: Domain, tokens: list[str]) -> str | None:
    if "*" in domain.frames:
        return domain.frames["*"]
    return domain.frames.get(tokens[0].lower()) if tokens else None


Assignment = Mapping[int, tuple[str, str]]  # node id -> ("primitive"|"operation", id)


def evaluate_value(domain: Domain, node: TreeNode, assignment: Assignment,
                   alloc: VarAlloc | None = None) -> SemanticValue:
    """Pre-frame fold: the semantic value of one nonterminal node.

    Raises `TypeMismatch` for unassigned nodes, wrong assignment roles, or
    ill-typed applications.
    """
    alloc = alloc or VarAlloc()
    entry = assignment.get(node.id)
    if entry is None:
        raise TypeMismatch(f"node {node.id} (span {node.span}) unassigned")
    role, name = entry
    if not node.nt_children:  # lexical node
        if role != "primitive":
            raise TypeMismatch(
                f"lexical node over span {node.span} assigned {role}")
        if name not in domain.primitives:
            raise TypeMismatch(f"unknown primitive {name}")
        return domain.primitive_value(name, alloc)
    if role != "operation":
        raise TypeMismatch(
            f"algebraic node over span {node.span} assigned {role}")
    op = domain.operations.get(name)
    if op is None:
        raise TypeMismatch(f"unknown operation {name}")
    args = [evaluate_value(domain, c, assignment, alloc)
            for c in sorted(node.nt_children, key=lambda n: n.lo)]
    return apply(op, args)


def evaluate(domain: Domain, tree: SyntaxTree, assignment: Assignment,
             tokens: list[str]) -> SemanticValue | EvaluationFailure:
    """Fold the labeled tree bottom-up and ground the result with the
    sentence frame. Returns a proposition value or a failure marker."""
    alloc = VarAlloc()
    top = tree.top_level()
    if len(top) != 1:
        return EvaluationFailure(
            f"{len(top)} top-level nonterminal nodes (need exactly 1)")
    frame_kind = frame_for(domain, tokens)
    if frame_kind is None:
        lead = tokens[0] if tokens else "<empty>"
        return EvaluationFailure(f"no sentence frame for leading token {lead!r}")
    try:
        value = evaluate_value(domain, top[0], assignment, alloc)
    except TypeMismatch as exc:
        return EvaluationFailure(str(exc))
    atoms = _FRAME_FNS[frame_kind](value, alloc)
    if isinstance(atoms, EvaluationFailure):
        return atoms
    if not atoms:
        return EvaluationFailure("empty meaning after frame grounding")
    return SemanticValue(Kind.PROPOSITION, frozenset(atoms))


# ---------------------------------------------------------------------------
# Canonicalization and equivalence
# ---------------------------------------------------------------------------

def _ref_key(ref: Ref, renaming: Mapping[int, int]) -> tuple[str, str]:
    if isinstance(ref, Ent):
        return ("e", ref.name)
    return ("v", f"{renaming[ref.index]:06d}")


def _atom_key(atom: Atom, renaming: Mapping[int, int]):
    if isinstance(atom, PathAtom):
        return ("p", _ref_key(atom.subject, renaming), atom.chain,
                _ref_key(atom.obj, renaming))
    return ("a", _ref_key(atom.subject, renaming), atom.attr)


def _rename_atom(atom: Atom, renaming: Mapping[int, int]) -> Atom:
    def r(ref: Ref) -> Ref:
        return Var(renaming[ref.index]) if isinstance(ref, Var) else ref

    if isinstance(atom, PathAtom):
        return PathAtom(r(atom.subject), atom.chain, r(atom.obj))
    return AttrAtom(r(atom.subject), atom.attr)


def _atom_vars(atoms: Iterable[Atom]) -> list[int]:
    seen: dict[int, None] = {}
    for atom in atoms:
        refs = (atom.subject, atom.obj) if isinstance(atom, PathAtom) \
            else (atom.subject,)
        for ref in refs:
            if isinstance(ref, Var):
                seen.setdefault(ref.index, None)
    return list(seen)


def _first_appearance_renaming(atoms: set[Atom]) -> dict[int, int]:
    # Stable fallback: anonymize variables, sort, then number by appearance.
    anon = {v: 0 for v in _atom_vars(atoms)}
    ordered = sorted(atoms, key=lambda a: _atom_key(a, anon))
    renaming: dict[int, int] = {ANSWER_VAR: ANSWER_VAR}
    for v in _atom_vars(ordered):
        if v != ANSWER_VAR:
            renaming.setdefault(v, len(renaming))
    if ANSWER_VAR not in _atom_vars(atoms):
        renaming.pop(ANSWER_VAR)
    return renaming


def to_cnf(p: SemanticValue) -> frozenset[Atom]:
    """Canonical conjunct set: duplicates removed, bound variables
    renumbered canonically (minimum over bijections, capped at
    `CANON_VAR_CAP` variables). The answer variable ?x0 is semantically
    distinguished and never renamed."""
    if not isinstance(p, SemanticValue) or p.kind != Kind.PROPOSITION:
        raise ValueError("to_cnf expects a proposition value")
    atoms = set(p.terms)
    variables = _atom_vars(atoms)
    has_answer = ANSWER_VAR in variables
    free = [v for v in variables if v != ANSWER_VAR]
    pinned = {ANSWER_VAR: ANSWER_VAR} if has_answer else {}
    if len(free) > CANON_VAR_CAP:
        logger.warning(
            "canonicalizing %d variables exceeds cap %d; using "
            "first-appearance order", len(free), CANON_VAR_CAP)
        renaming = _first_appearance_renaming(atoms)
        return frozenset(_rename_atom(a, renaming) for a in atoms)
    if len(free) <= 1:
        renaming = dict(pinned)
        if free:
            renaming[free[0]] = 1
        return frozenset(_rename_atom(a, renaming) for a in atoms)
    best_key = None
    best: dict[int, int] | None = None
    for perm in itertools.permutations(range(1, len(free) + 1)):
        renaming = dict(pinned)
        renaming.update(zip(free, perm))
        key = tuple(sorted(_atom_key(a, renaming) for a in atoms))
        if best_key is None or key < best_key:
            best_key, best = key, renaming
    assert best is not None
    return frozenset(_rename_atom(a, best) for a in atoms)


def equivalent(p1: SemanticValue, p2: SemanticValue) -> bool:
    """True iff the two propositions have equal conjunct sets under some
    variable bijection."""
    return to_cnf(p1) == to_cnf(p2)


def meaning_primitives(p: SemanticValue) -> frozenset[str]:
    """Entities, predicates, and attributes occurring in a proposition,
    ignoring structure and variables."""
    if p.kind != Kind.PROPOSITION:
        raise ValueError("meaning_primitives expects a proposition value")
    out: set[str] = set()
    for atom in p.terms:
        if isinstance(atom, PathAtom):
            out.update(atom.chain)
            for ref in (atom.subject, atom.obj):
                if isinstance(ref, Ent):
                    out.add(ref.name)
        else:
            out.add(atom.attr)
            if isinstance(atom.subject, Ent):
                out.add(atom.subject.name)
    return frozenset(out)


# ---------------------------------------------------------------------------
# Meaning grammar: parser and canonical printer
# ---------------------------------------------------------------------------

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_VAR_RE = re.compile(r"\?x(\d+)\Z")


def _check_ident(name: str) -> None:
    if not _IDENT_RE.match(name) or name == "ATTR":
        raise ValueError(f"invalid identifier {name!r}")


class MeaningSyntaxError(ValueError):
    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} (at char {position})")
        self.position = position


def _parse_ref(token: str, position: int) -> Ref:
    m = _VAR_RE.match(token)
    if m:
        return Var(int(m.group(1)))
    if _IDENT_RE.match(token):
        return Ent(token)
    raise MeaningSyntaxError(f"bad reference {token!r}", position)


def parse_meaning(text: str) -> SemanticValue:
    """Parse the textual meaning grammar into a proposition value."""
    if not text.strip():
        raise MeaningSyntaxError("empty meaning", 0)
    atoms: set[Atom] = set()
    offset = 0
    for chunk in text.split(" AND "):
        fields = chunk.split()
        if len(fields) == 2 and fields[1].startswith("ATTR="):
            subj = _parse_ref(fields[0], offset)
            attr = fields[1][len("ATTR="):]
            if not _IDENT_RE.match(attr):
                raise MeaningSyntaxError(f"bad attribute {attr!r}", offset)
            atoms.add(AttrAtom(subj, attr))
        elif len(fields) == 3:
            subj = _parse_ref(fields[0], offset)
            chain = tuple(fields[1].split("."))
            for pred in chain:
                if not _IDENT_RE.match(pred):
                    raise MeaningSyntaxError(f"bad predicate {pred!r}", offset)
            obj = _parse_ref(fields[2], offset + len(fields[0]) + len(fields[1]) + 2)
            atoms.add(PathAtom(subj, chain, obj))
        else:
            raise MeaningSyntaxError(f"malformed atom {chunk!r}", offset)
        offset += len(chunk) + len(" AND ")
    return SemanticValue(Kind.PROPOSITION, frozenset(atoms))


def print_meaning(p: SemanticValue) -> str:
    """Canonical text form: canonicalized atoms, sorted, AND-joined."""
    return " AND ".join(sorted(str(a) for a in to_cnf(p)))
