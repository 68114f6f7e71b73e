"""Lexical-unit -> candidate-primitive table.

Built from exact/threshold co-occurrence between word n-grams and the
primitives of the paired meanings, followed by a disambiguation pass that
deletes primitives already "owned" by a single-candidate unit from every
multi-candidate unit. Serves as the hard constraint on which spans may
become lexical nodes and which primitives they may receive.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field

from .semalg import (
    Domain,
    MeaningSyntaxError,
    SemanticValue,
    meaning_primitives,
    parse_meaning,
)


class PhraseTableFormatError(ValueError):
    pass


class CoverageWarning(UserWarning):
    """Some primitive in the corpus is reachable through no lexical unit."""


def _unit_key(tokens) -> str:
    return " ".join(t.lower() for t in tokens)


@dataclass
class PhraseTable:
    """Map from lowercased 1..n-gram units to candidate (primitive, type)
    lists; candidate lists are sorted by primitive id and never empty."""

    entries: dict[str, list[tuple[str, str]]] = field(default_factory=dict)
    max_ngram: int = 3

    def __post_init__(self) -> None:
        self.entries = {u: sorted(set(c)) for u, c in self.entries.items()
                        if c}

    def lookup(self, span_tokens) -> list[tuple[str, str]]:
        return self.entries.get(_unit_key(span_tokens), [])

    def __contains__(self, span_tokens) -> bool:
        return bool(self.lookup(span_tokens))

    def units(self) -> list[str]:
        return sorted(self.entries)

    def primitives(self) -> frozenset[str]:
        return frozenset(pid for cands in self.entries.values()
                         for pid, _ in cands)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for unit in sorted(self.entries):
                for pid, ptype in self.entries[unit]:
                    fh.write(f"{unit}\t{pid}\t{ptype}\n")

    @classmethod
    def load(cls, path) -> "PhraseTable":
        entries: dict[str, list[tuple[str, str]]] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3 or not all(parts):
                    raise PhraseTableFormatError(
                        f"line {lineno}: expected 'unit<TAB>primitive<TAB>"
                        f"type', got {line!r}")
                unit, pid, ptype = parts
                entries.setdefault(unit, []).append((pid, ptype))
        table = cls(entries=entries)
        table.max_ngram = max((len(u.split()) for u in entries), default=3)
        return table


def build(corpus, domain: Domain, max_ngram: int = 3,
          threshold: float = 0.99, min_count: int = 2,
          stopwords: frozenset[str] | None = None) -> PhraseTable:
    """Derive a phrase table from (utterance, meaning) pairs.

    ``corpus`` items are (tokens-or-string, meaning-text-or-value). A unit
    keeps primitive p when co-occurrence is (near-)exact:
    count(u, p) / count(u) >= threshold and count(u, p) >= min_count.
    """
    if not corpus:
        raise ValueError("empty corpus")
    stopwords = domain.stopwords if stopwords is None else stopwords

    unit_count: Counter[str] = Counter()
    pair_count: Counter[tuple[str, str]] = Counter()
    all_primitives: set[str] = set()
    for lineno, (utterance, meaning) in enumerate(corpus, start=1):
        tokens = utterance.split() if isinstance(utterance, str) else list(utterance)
        tokens = [t.lower() for t in tokens]
        if isinstance(meaning, SemanticValue):
            prims = meaning_primitives(meaning)
        else:
            try:
                prims = meaning_primitives(parse_meaning(meaning))
            except MeaningSyntaxError as exc:
                raise ValueError(f"corpus line {lineno}: {exc}") from exc
        all_primitives |= prims
        units = set()
        for n in range(1, max_ngram + 1):
            for i in range(len(tokens) - n + 1):
                gram = tokens[i:i + n]
                if any(t in stopwords for t in gram):
                    continue
                units.add(" ".join(gram))
        for unit in units:
            unit_count[unit] += 1
            for p in prims:
                pair_count[unit, p] += 1

    entries: dict[str, list[str]] = {}
    for unit, total in unit_count.items():
        kept = [p for p in sorted(all_primitives)
                if pair_count[unit, p] >= min_count
                and pair_count[unit, p] / total >= threshold]
        if kept:
            entries[unit] = kept

    # Disambiguation pass: primitives uniquely owned by a one-candidate
    # unit are deleted from every multi-candidate unit's list.
    ready = {cands[0] for cands in entries.values() if len(cands) == 1}
    cleaned: dict[str, list[str]] = {}
    for unit, cands in entries.items():
        if len(cands) > 1:
            cands = [p for p in cands if p not in ready]
        if cands:
            cleaned[unit] = cands

    reachable = {p for cands in cleaned.values() for p in cands}
    unreachable = sorted(all_primitives - reachable)
    if unreachable:
        warnings.warn(
            "primitives reachable through no lexical unit: "
            + ", ".join(unreachable), CoverageWarning, stacklevel=2)

    typed = {
        unit: [(p, domain.primitives[p].kind.value if p in domain.primitives
                else "unknown") for p in cands]
        for unit, cands in cleaned.items()
    }
    return PhraseTable(entries=typed, max_ngram=max_ngram)
