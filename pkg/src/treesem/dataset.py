"""Corpora: JSONL loading, the synthetic question benchmark with
controlled recombination splits, curriculum filtering, pattern coverage.

The generator pairs a context-free question grammar with the conjunction /
join algebra. Every template carries a gold binary tree and a gold
assignment; the attached meaning is produced by evaluating that tree, and
the whole pipeline is deterministic under the seed. Template-recombination
splits hold out every template that combines two or more composition
devices (deep possessives, conjunctions, attribute modification), while
each single device and every lexical primitive stays in training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .semalg import (
    AttrAtom,
    Domain,
    Ent,
    EvaluationFailure,
    Kind,
    MeaningSyntaxError,
    PathAtom,
    SemanticValue,
    Var,
    cfq_like_domain,
    evaluate,
    parse_meaning,
    print_meaning,
    to_cnf,
)
from .trees import SyntaxTree, TreeNode, leaf, merge

PUNCT_SPLIT = "?.,!"


def tokenize(text: str) -> list[str]:
    """Whitespace tokenization with trailing-punctuation and possessive
    splitting ("M0's?" -> M0 's ?)."""
    out: list[str] = []
    for raw in text.split():
        tail: list[str] = []
        w = raw
        while True:
            if w.endswith("'s") and len(w) > 2:
                tail.append("'s")
                w = w[:-2]
            elif w and w[-1] in PUNCT_SPLIT:
                tail.append(w[-1])
                w = w[:-1]
            else:
                break
        if w:
            out.append(w)
        out.extend(reversed(tail))
    return out


@dataclass
class Sample:
    tokens: list[str]
    meaning_text: str
    meaning: SemanticValue
    gold_tree: SyntaxTree | None = None
    template: str | None = None
    # generator-internal, never serialized: node id -> assignment entry
    gold_assignment: dict | None = None

    @property
    def utterance(self) -> str:
        return " ".join(self.tokens)

    @property
    def length(self) -> int:
        return len(self.tokens)


class DatasetError(ValueError):
    pass


def load(path) -> list[Sample]:
    """Read one JSON object per line: utterance, meaning, optional gold_tree."""
    samples: list[Sample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: line {lineno}: bad JSON: {exc}")
            if "utterance" not in obj or "meaning" not in obj:
                raise DatasetError(
                    f"{path}: line {lineno}: need 'utterance' and 'meaning'")
            try:
                meaning = parse_meaning(obj["meaning"])
            except MeaningSyntaxError as exc:
                raise DatasetError(f"{path}: line {lineno}: {exc}")
            gold = None
            if obj.get("gold_tree"):
                gold = SyntaxTree.from_text(obj["gold_tree"])
            samples.append(Sample(
                tokens=tokenize(obj["utterance"]),
                meaning_text=print_meaning(meaning),
                meaning=meaning,
                gold_tree=gold,
                template=obj.get("template"),
            ))
    if not samples:
        raise DatasetError(f"{path}: empty dataset")
    return samples


def save(path, samples: list[Sample], with_gold_trees: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            obj = {"utterance": s.utterance, "meaning": s.meaning_text}
            if with_gold_trees and s.gold_tree is not None:
                obj["gold_tree"] = s.gold_tree.to_text()
            if s.template:
                obj["template"] = s.template
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def strip_gold(samples: list[Sample]) -> list[Sample]:
    """Trainer-facing view: gold trees removed at the module boundary."""
    return [replace(s, gold_tree=None, gold_assignment=None) for s in samples]


def curriculum_filter(samples: list[Sample], cutoff: int) -> list[Sample]:
    """Samples with input length strictly below the cutoff, stable order."""
    if cutoff < 1:
        raise ValueError(f"curriculum cutoff must be >= 1, got {cutoff}")
    return [s for s in samples if s.length < cutoff]


# ---------------------------------------------------------------------------
# Patterns and coverage
# ---------------------------------------------------------------------------

def input_pattern(tokens, stopwords) -> str:
    return " ".join(t if t.lower() in stopwords else "_" for t in tokens)


def output_pattern(meaning: SemanticValue) -> str:
    parts = []
    for atom in to_cnf(meaning):
        if isinstance(atom, PathAtom):
            subj = str(atom.subject) if isinstance(atom.subject, Var) else "_"
            obj = str(atom.obj) if isinstance(atom.obj, Var) else "_"
            parts.append(f"{subj} {'.'.join('_' for _ in atom.chain)} {obj}")
        else:
            subj = str(atom.subject) if isinstance(atom.subject, Var) else "_"
            parts.append(f"{subj} ATTR=_")
    return " AND ".join(sorted(parts))


def coverage_stats(train: list[Sample], test: list[Sample],
                   stopwords=None) -> tuple[float, float]:
    """Fraction of test inputs/outputs whose anonymized pattern occurs in
    the train data."""
    if not train or not test:
        raise ValueError("coverage_stats needs non-empty train and test")
    stopwords = CFQ_BENCH_STOPWORDS if stopwords is None else stopwords
    train_in = {input_pattern(s.tokens, stopwords) for s in train}
    train_out = {output_pattern(s.meaning) for s in train}
    n_in = sum(input_pattern(s.tokens, stopwords) in train_in for s in test)
    n_out = sum(output_pattern(s.meaning) in train_out for s in test)
    return n_in / len(test), n_out / len(test)


def sample_primitives(samples: list[Sample]) -> frozenset[str]:
    from .semalg import meaning_primitives
    out: set[str] = set()
    for s in samples:
        out |= meaning_primitives(s.meaning)
    return frozenset(out)


def infer_domain(samples: list[Sample], kind: str = "cfq_like") -> Domain:
    """Reconstruct the primitive inventory from gold meanings."""
    if kind != "cfq_like":
        raise ValueError(f"cannot infer a {kind!r} domain from meanings")
    entities: set[str] = set()
    predicates: set[str] = set()
    attributes: set[str] = set()
    for s in samples:
        for atom in s.meaning.terms:
            if isinstance(atom, PathAtom):
                predicates.update(atom.chain)
                for ref in (atom.subject, atom.obj):
                    if isinstance(ref, Ent):
                        entities.add(ref.name)
            else:
                attributes.add(atom.attr)
                if isinstance(atom.subject, Ent):
                    entities.add(atom.subject.name)
    return cfq_like_domain(sorted(entities), sorted(predicates),
                           sorted(attributes))


# ---------------------------------------------------------------------------
# Benchmark lexicon
# ---------------------------------------------------------------------------

# surface -> predicate id, verb and relational-noun readings share ids
VERBS = {
    "directed": "DIRECT", "edited": "EDIT", "produced": "PRODUCE",
    "wrote": "WRITE", "married": "MARRY", "influenced": "INFLUENCE",
    "founded": "FOUND", "acquired": "ACQUIRE", "employed": "EMPLOY",
    "backed": "EXEC_PRODUCE",
}
RELNOUNS = {
    "director": "DIRECT", "editor": "EDIT", "producer": "PRODUCE",
    "writer": "WRITE", "spouse": "MARRY", "founder": "FOUND",
    "employer": "EMPLOY", "prequel": "PREQUEL", "sequel": "SEQUEL",
    "executive producer": "EXEC_PRODUCE",
}
ATTR_WORDS = {
    "italian": "ITALIAN", "french": "FRENCH", "canadian": "CANADIAN",
    "dutch": "DUTCH", "female": "FEMALE", "male": "MALE",
}
CFQ_BENCH_STOPWORDS = frozenset(
    "who is a an and of the 's ? .".split())


@dataclass(frozen=True)
class Lexicon:
    entities: tuple[str, ...]
    verbs: tuple[tuple[str, str], ...]      # (surface, predicate)
    relnouns: tuple[tuple[str, str], ...]
    attrs: tuple[tuple[str, str], ...]

    def predicates(self) -> list[str]:
        return sorted({p for _, p in self.verbs} | {p for _, p in self.relnouns})

    def domain(self) -> Domain:
        return cfq_like_domain(self.entities, self.predicates(),
                               sorted(a for _, a in self.attrs))


def build_lexicon(n_entities: int = 15, n_predicates: int = 12,
                  n_attributes: int = 6) -> Lexicon:
    entities = tuple(f"M{i}" for i in range(n_entities))
    pred_ids = sorted({*VERBS.values(), *RELNOUNS.values()})[:n_predicates]
    verbs = tuple(sorted((s, p) for s, p in VERBS.items() if p in pred_ids))
    relnouns = tuple(sorted((s, p) for s, p in RELNOUNS.items()
                            if p in pred_ids))
    attrs = tuple(sorted(ATTR_WORDS.items())[:n_attributes])
    if not verbs or not relnouns or not attrs:
        raise DatasetError("lexicon inventories must be non-empty")
    return Lexicon(entities, verbs, relnouns, attrs)


# ---------------------------------------------------------------------------
# Template builders
# ---------------------------------------------------------------------------

def _article(word: str) -> str:
    return "an" if word[0] in "aeiou" else "a"


class _Builder:
    """Accumulates tokens, tree nodes, and assignment entries."""

    def __init__(self) -> None:
        self.tokens: list[str] = []
        self.entries: list[tuple[TreeNode, tuple[str, str]]] = []

    def fun(self, word: str) -> TreeNode:
        idx = len(self.tokens)
        self.tokens.append(word)
        return leaf(idx)

    def lex(self, surface: str, pid: str, label: int) -> TreeNode:
        words = surface.split()
        idx = len(self.tokens)
        self.tokens.extend(words)
        node = leaf(idx, label if len(words) == 1 else 0)
        for k in range(1, len(words)):
            node = merge(node, leaf(idx + k),
                         label if k == len(words) - 1 else 0)
        self.entries.append((node, ("primitive", pid)))
        return node

    def op(self, node: TreeNode, op_id: str) -> TreeNode:
        self.entries.append((node, ("operation", op_id)))
        return node

    def ent(self, name: str) -> TreeNode:
        return self.lex(name, name, 1)

    def poss(self, np: TreeNode, rel_surface: str, rel_pid: str) -> TreeNode:
        s = self.fun("'s")
        rel = self.lex(rel_surface, rel_pid, 2)
        return self.op(merge(np, merge(s, rel), label=1), "JOIN_EP")

    def conj(self, left: TreeNode, right_build, op_id: str,
             label: int) -> TreeNode:
        a = self.fun("and")
        right = right_build()
        return self.op(merge(left, merge(a, right), label=label), op_id)

    def wrap(self, body: TreeNode) -> SyntaxTree:
        q = self.fun("?")
        root = merge(self._lead, merge(body, q))
        return SyntaxTree.assemble(root, len(self.tokens))

    def start(self, lead: str) -> None:
        self._lead = self.fun(lead)


@dataclass(frozen=True)
class Template:
    name: str
    devices: frozenset[str]
    build: "callable"

    @property
    def n_devices(self) -> int:
        return len(self.devices)


def _templates(lex: Lexicon, max_poss_depth: int) -> list[Template]:
    E, V, R, A = lex.entities, lex.verbs, lex.relnouns, lex.attrs

    def t(name, devices, build):
        return Template(name, frozenset(devices), build)

    def np_chain(b: _Builder, ent: str, rels: list[tuple[str, str]]):
        node = b.ent(ent)
        for surface, pid in rels:
            node = b.poss(node, surface, pid)
        return node

    out: list[Template] = []

    def wh(body_build):
        def run(rng):
            b = _Builder()
            b.start("who")
            body = body_build(b, rng)
            return b, b.wrap(body)
        return run

    def pick(rng, items):
        return items[rng.integers(len(items))]

    def pick2(rng, items):
        if len(items) == 1:
            return items[0], items[0]
        i = rng.integers(len(items))
        j = (i + 1 + rng.integers(len(items) - 1)) % len(items)
        return items[i], items[j]

    # --- wh templates ---
    def vp_simple(b, rng):
        vs, vp_ = pick(rng, V)
        verb = b.lex(vs, vp_, 2)
        obj = b.ent(pick(rng, E))
        return b.op(merge(verb, obj, label=1), "JOIN_PE")
    out.append(t("wh_v_e", [], wh(vp_simple)))

    def vp_poss(depth):
        def run(b, rng):
            vs, vp_ = pick(rng, V)
            verb = b.lex(vs, vp_, 2)
            rels = [pick(rng, R) for _ in range(depth)]
            obj = np_chain(b, pick(rng, E), rels)
            return b.op(merge(verb, obj, label=1), "JOIN_PE")
        return run
    out.append(t("wh_v_poss1", ["poss"], wh(vp_poss(1))))
    if max_poss_depth >= 2:
        out.append(t("wh_v_poss2", ["poss", "deep_poss"], wh(vp_poss(2))))
    if max_poss_depth >= 3:
        out.append(t("wh_v_poss3", ["poss", "deep_poss", "deeper_poss"],
                     wh(vp_poss(3))))

    def vp_vconj(b, rng):
        (v1s, v1p), (v2s, v2p) = pick2(rng, V)
        verb1 = b.lex(v1s, v1p, 2)
        vconj = b.conj(verb1, lambda: b.lex(v2s, v2p, 2), "AND_PP", 2)
        obj = b.ent(pick(rng, E))
        return b.op(merge(vconj, obj, label=1), "JOIN_PE")
    out.append(t("wh_vconj_e", ["vconj"], wh(vp_vconj)))

    def vp_npconj(b, rng):
        vs, vp_ = pick(rng, V)
        verb = b.lex(vs, vp_, 2)
        e1, e2 = pick2(rng, E)
        npc = b.conj(b.ent(e1), lambda: b.ent(e2), "AND_EE", 1)
        return b.op(merge(verb, npc, label=1), "JOIN_PE")
    out.append(t("wh_v_econj", ["npconj"], wh(vp_npconj)))

    def vp_anon(b, rng):
        vs, vp_ = pick(rng, V)
        verb = b.lex(vs, vp_, 2)
        asurf, attr = pick(rng, A)
        art = b.fun(_article(asurf))
        anode = b.lex(asurf, attr, 3)
        return b.op(merge(verb, merge(art, anode), label=1), "JOIN_PA")
    out.append(t("wh_v_anon", ["anon"], wh(vp_anon)))

    def vp_vconj_poss(b, rng):
        (v1s, v1p), (v2s, v2p) = pick2(rng, V)
        vconj = b.conj(b.lex(v1s, v1p, 2), lambda: b.lex(v2s, v2p, 2),
                       "AND_PP", 2)
        obj = np_chain(b, pick(rng, E), [pick(rng, R)])
        return b.op(merge(vconj, obj, label=1), "JOIN_PE")
    out.append(t("wh_vconj_poss1", ["vconj", "poss"], wh(vp_vconj_poss)))

    def vp_poss_npconj(b, rng):
        vs, vp_ = pick(rng, V)
        verb = b.lex(vs, vp_, 2)
        e1, e2 = pick2(rng, E)
        poss = np_chain(b, e1, [pick(rng, R)])
        npc = b.conj(poss, lambda: b.ent(e2), "AND_EE", 1)
        return b.op(merge(verb, npc, label=1), "JOIN_PE")
    out.append(t("wh_v_poss1_econj", ["poss", "npconj"], wh(vp_poss_npconj)))

    def vp_vconj_npconj(b, rng):
        (v1s, v1p), (v2s, v2p) = pick2(rng, V)
        vconj = b.conj(b.lex(v1s, v1p, 2), lambda: b.lex(v2s, v2p, 2),
                       "AND_PP", 2)
        e1, e2 = pick2(rng, E)
        npc = b.conj(b.ent(e1), lambda: b.ent(e2), "AND_EE", 1)
        return b.op(merge(vconj, npc, label=1), "JOIN_PE")
    out.append(t("wh_vconj_econj", ["vconj", "npconj"], wh(vp_vconj_npconj)))

    if max_poss_depth >= 2:
        def vp_poss2_npconj(b, rng):
            vs, vp_ = pick(rng, V)
            verb = b.lex(vs, vp_, 2)
            e1, e2 = pick2(rng, E)
            poss = np_chain(b, e1, [pick(rng, R), pick(rng, R)])
            npc = b.conj(poss, lambda: b.ent(e2), "AND_EE", 1)
            return b.op(merge(verb, npc, label=1), "JOIN_PE")
        out.append(t("wh_v_poss2_econj", ["deep_poss", "npconj"],
                     wh(vp_poss2_npconj)))

        def vp_vconj_poss2(b, rng):
            (v1s, v1p), (v2s, v2p) = pick2(rng, V)
            vconj = b.conj(b.lex(v1s, v1p, 2), lambda: b.lex(v2s, v2p, 2),
                           "AND_PP", 2)
            obj = np_chain(b, pick(rng, E), [pick(rng, R), pick(rng, R)])
            return b.op(merge(vconj, obj, label=1), "JOIN_PE")
        out.append(t("wh_vconj_poss2", ["vconj", "deep_poss"],
                     wh(vp_vconj_poss2)))

        def vp_vconj_poss1_npconj(b, rng):
            (v1s, v1p), (v2s, v2p) = pick2(rng, V)
            vconj = b.conj(b.lex(v1s, v1p, 2), lambda: b.lex(v2s, v2p, 2),
                           "AND_PP", 2)
            e1, e2 = pick2(rng, E)
            poss = np_chain(b, e1, [pick(rng, R)])
            npc = b.conj(poss, lambda: b.ent(e2), "AND_EE", 1)
            return b.op(merge(vconj, npc, label=1), "JOIN_PE")
        out.append(t("wh_vconj_poss1_econj", ["vconj", "poss", "npconj"],
                     wh(vp_vconj_poss1_npconj)))

    def vp_vconj_anon(b, rng):
        (v1s, v1p), (v2s, v2p) = pick2(rng, V)
        vconj = b.conj(b.lex(v1s, v1p, 2), lambda: b.lex(v2s, v2p, 2),
                       "AND_PP", 2)
        asurf, attr = pick(rng, A)
        art = b.fun(_article(asurf))
        anode = b.lex(asurf, attr, 3)
        return b.op(merge(vconj, merge(art, anode), label=1), "JOIN_PA")
    out.append(t("wh_vconj_anon", ["vconj", "anon"], wh(vp_vconj_anon)))

    # --- assertion templates ---
    def isq(body_build):
        def run(rng):
            b = _Builder()
            b.start("is")
            body = body_build(b, rng)
            return b, b.wrap(body)
        return run

    def is_attr(b, rng):
        subj = b.ent(pick(rng, E))
        asurf, attr = pick(rng, A)
        anode = b.lex(asurf, attr, 3)
        return b.op(merge(subj, anode, label=1), "AND_EA")
    out.append(t("is_e_a", [], isq(is_attr)))

    def is_attr_conj(b, rng):
        subj = b.ent(pick(rng, E))
        (a1s, a1), (a2s, a2) = pick2(rng, A)
        first = b.lex(a1s, a1, 3)
        aconj = b.conj(first, lambda: b.lex(a2s, a2, 3), "AND_AA", 3)
        return b.op(merge(subj, aconj, label=1), "AND_EA")
    out.append(t("is_e_aconj", ["aconj"], isq(is_attr_conj)))

    def nom_of(b, rng, with_attr: bool):
        rs, rp = pick(rng, R)
        anode = None
        if with_attr:
            asurf, attr = pick(rng, A)
            art = b.fun(_article(asurf))
            anode = b.lex(asurf, attr, 3)
        else:
            art = b.fun(_article(rs))
        rel = b.lex(rs, rp, 2)
        of = b.fun("of")
        obj = b.ent(pick(rng, E))
        joined = b.op(merge(rel, merge(of, obj), label=1), "JOIN_PE")
        if anode is not None:
            joined = b.op(merge(anode, joined, label=1), "AND_AE")
        return merge(art, joined)

    def is_nom(b, rng):
        subj = b.ent(pick(rng, E))
        nom = nom_of(b, rng, with_attr=False)
        return b.op(merge(subj, nom, label=1), "AND_EE")
    out.append(t("is_e_nom", ["nom"], isq(is_nom)))

    def is_attr_nom(b, rng):
        subj = b.ent(pick(rng, E))
        nom = nom_of(b, rng, with_attr=True)
        return b.op(merge(subj, nom, label=1), "AND_EE")
    out.append(t("is_e_attr_nom", ["nom", "attr_mod"], isq(is_attr_nom)))

    def is_possnom(b, rng):
        subj = b.ent(pick(rng, E))
        e2 = pick(rng, E)
        poss = np_chain(b, e2, [pick(rng, R)])
        return b.op(merge(subj, poss, label=1), "AND_EE")
    out.append(t("is_e_possnom", ["nom"], isq(is_possnom)))

    def is_nom_poss(b, rng):
        subj = b.ent(pick(rng, E))
        rs, rp = pick(rng, R)
        art = b.fun(_article(rs))
        rel = b.lex(rs, rp, 2)
        of = b.fun("of")
        obj = np_chain(b, pick(rng, E), [pick(rng, R)])
        joined = b.op(merge(rel, merge(of, obj), label=1), "JOIN_PE")
        nom = merge(art, joined)
        return b.op(merge(subj, nom, label=1), "AND_EE")
    out.append(t("is_e_nom_poss1", ["nom", "poss"], isq(is_nom_poss)))

    return out


# ---------------------------------------------------------------------------
# Generation and splits
# ---------------------------------------------------------------------------

@dataclass
class GenConfig:
    mode: str = "template-recombination"  # or "length-extrapolation"
    n_entities: int = 15
    n_predicates: int = 12
    n_attributes: int = 6
    n_train: int = 2000
    n_dev: int = 300
    n_test: int = 500
    max_poss_depth: int = 2
    max_train_len: int = 9  # length-extrapolation mode only
    seed: int = 0

    @classmethod
    def from_file(cls, path) -> "GenConfig":
        cfg = cls()
        errors = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    errors.append(f"line {lineno}: expected key = value")
                    continue
                key, _, value = (p.strip() for p in line.partition("="))
                if not hasattr(cfg, key):
                    errors.append(f"line {lineno}: unknown key {key!r}")
                    continue
                current = getattr(cfg, key)
                try:
                    setattr(cfg, key,
                            type(current)(value) if not isinstance(current, str)
                            else value)
                except ValueError:
                    errors.append(f"line {lineno}: bad value for {key!r}")
        if errors:
            raise DatasetError("; ".join(errors))
        return cfg


class InfeasibleSplit(DatasetError):
    pass


def _instantiate(template: Template, rng: np.random.Generator,
                 domain: Domain) -> Sample:
    builder, tree = template.build(rng)
    assignment = {node.id: entry for node, entry in builder.entries}
    meaning = evaluate(domain, tree, assignment, builder.tokens)
    if isinstance(meaning, EvaluationFailure):
        raise DatasetError(
            f"template {template.name} produced an uninterpretable gold "
            f"tree: {meaning.reason}")
    return Sample(tokens=builder.tokens,
                  meaning_text=print_meaning(meaning),
                  meaning=meaning, gold_tree=tree, template=template.name,
                  gold_assignment=assignment)


def _fill_bucket(templates, domain, rng, target, taken: set[str],
                 exclude=None, max_tries_factor: int = 60) -> list[Sample]:
    out: list[Sample] = []
    tries = 0
    limit = target * max_tries_factor
    while len(out) < target:
        tries += 1
        if tries > limit:
            raise InfeasibleSplit(
                f"could not generate {target} distinct samples from "
                f"{len(templates)} templates (got {len(out)})")
        template = templates[rng.integers(len(templates))]
        sample = _instantiate(template, rng, domain)
        if sample.utterance in taken:
            continue
        if exclude is not None and exclude(sample):
            continue
        taken.add(sample.utterance)
        out.append(sample)
    return out


def _force_primitive_coverage(train, templates, domain, rng, taken):
    """Append simple samples until every lexicon primitive occurs in train."""
    want = set(domain.primitives)
    extra: list[Sample] = []
    for _ in range(4000):
        have = sample_primitives(train + extra)
        if want <= have:
            break
        template = templates[rng.integers(len(templates))]
        sample = _instantiate(template, rng, domain)
        if sample.utterance in taken:
            continue
        if sample_primitives([sample]) - have:
            taken.add(sample.utterance)
            extra.append(sample)
    return extra


def generate(config: GenConfig, seed: int | None = None
             ) -> tuple[list[Sample], list[Sample], list[Sample]]:
    """Deterministic (train, dev, test) generation under the seed."""
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    lex = build_lexicon(config.n_entities, config.n_predicates,
                        config.n_attributes)
    domain = lex.domain()
    templates = _templates(lex, config.max_poss_depth)

    if config.mode == "template-recombination":
        train_templates = [t for t in templates if t.n_devices <= 1]
        test_templates = [t for t in templates if t.n_devices >= 2]
        if not test_templates:
            raise InfeasibleSplit(
                "no multi-device templates exist at these depth bounds; "
                "nothing can be held out")
        taken: set[str] = set()
        train = _fill_bucket(train_templates, domain, rng, config.n_train,
                             taken)
        train += _force_primitive_coverage(train, train_templates, domain,
                                           rng, taken)
        dev = _fill_bucket(train_templates, domain, rng, config.n_dev, taken)
        # a held-out sample must be unreachable from any train pattern
        # (multiword units can make distinct templates collide)
        train_patterns = {input_pattern(s.tokens, CFQ_BENCH_STOPWORDS)
                          for s in train}
        test = _fill_bucket(
            test_templates, domain, rng, config.n_test, taken,
            exclude=lambda s: input_pattern(s.tokens, CFQ_BENCH_STOPWORDS)
            in train_patterns)
        return train, dev, test

    if config.mode == "length-extrapolation":
        taken = set()
        pool = _fill_bucket(templates, domain, rng,
                            config.n_train + config.n_dev + config.n_test * 4,
                            taken)
        short = [s for s in pool if s.length <= config.max_train_len]
        long = [s for s in pool if s.length > config.max_train_len]
        if len(short) < config.n_train + config.n_dev or \
                len(long) < config.n_test:
            raise InfeasibleSplit(
                f"length split at {config.max_train_len} leaves "
                f"{len(short)} short / {len(long)} long samples")
        train = short[:config.n_train]
        train += _force_primitive_coverage(
            train, [t for t in templates if t.n_devices == 0], lex.domain(),
            rng, taken)
        dev = short[config.n_train:config.n_train + config.n_dev]
        test = long[:config.n_test]
        return train, dev, test

    raise DatasetError(f"unknown split mode {config.mode!r}")
