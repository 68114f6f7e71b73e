"""Model bundle: vocabulary, parameter store, composer + interpreter."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import diffgraph as dg
from .composer import Composer, ComposeOutcome, ConstraintSet
from .diffgraph import ParamStore
from .interpreter import Interpreter, InterpretOutcome
from .phrasetable import PhraseTable
from .semalg import (
    Domain,
    EvaluationFailure,
    SemanticValue,
    domain_from_spec,
    evaluate,
)

UNK = "<unk>"


class UnknownToken(ValueError):
    def __init__(self, token: str) -> None:
        super().__init__(f"token {token!r} not in the training vocabulary")
        self.token = token


class Vocab:
    def __init__(self, tokens) -> None:
        rest = [t for t in tokens if t != UNK]
        self.tokens = [UNK] + sorted(set(rest))
        self.index = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def from_samples(cls, samples) -> "Vocab":
        seen = set()
        for s in samples:
            seen.update(s.tokens)
        return cls(seen)

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, tokens, allow_unk: bool = False) -> list[int]:
        ids = []
        for t in tokens:
            i = self.index.get(t)
            if i is None:
                if not allow_unk:
                    raise UnknownToken(t)
                i = 0
            ids.append(i)
        return ids

    def hash(self) -> str:
        return dg.vocab_hash(self.tokens)


@dataclass
class ModelConfig:
    hidden_dim: int = 64
    nonterminals: int = 3
    abstraction: bool = True
    semantic_locality: bool = True


class ParserModel:
    """Parameters plus the two policy modules, ready to parse."""

    def __init__(self, config: ModelConfig, vocab: Vocab, domain: Domain,
                 table: PhraseTable, init_seed: int = 0) -> None:
        self.config = config
        self.vocab = vocab
        self.domain = domain
        self.table = table
        self.store = ParamStore()
        rng = np.random.default_rng(init_seed)
        self.composer = Composer(self.store, rng, len(vocab),
                                 config.hidden_dim, config.nonterminals,
                                 abstraction=config.abstraction,
                                 semantic_locality=config.semantic_locality)
        self.interpreter = Interpreter(self.store, rng, len(vocab),
                                       config.hidden_dim, domain)
        self.constraints = ConstraintSet(table, domain.arity_set())

    # -- parsing ----------------------------------------------------------

    def parse(self, tokens: list[str], mode: str,
              rng: np.random.Generator | None = None,
              context=None, allow_unk: bool = False,
              want_entropy: bool = False
              ) -> tuple[ComposeOutcome, InterpretOutcome]:
        ids = self.vocab.encode(tokens, allow_unk=allow_unk)
        comp = self.composer.compose(ids, tokens, mode, self.constraints,
                                     rng, want_entropy=want_entropy)
        interp = self.interpreter.interpret(
            comp, tokens, ids, self.table, mode, rng, context=context,
            want_entropy=want_entropy)
        return comp, interp

    def greedy_meaning(self, tokens: list[str], allow_unk: bool = True):
        """Deterministic end-to-end parse: (meaning-or-failure, compose,
        interpret)."""
        with dg.no_grad():
            comp, interp = self.parse(tokens, "greedy", allow_unk=allow_unk)
        meaning = evaluate(self.domain, comp.tree, interp.assignment, tokens)
        return meaning, comp, interp

    def encode_context(self, tokens: list[str], allow_unk: bool = False):
        ids = self.vocab.encode(tokens, allow_unk=allow_unk)
        return self.interpreter.context.encode(ids)

    # -- persistence --------------------------------------------------------

    def header(self) -> dict:
        return {
            "model": asdict(self.config),
            "vocab": self.vocab.tokens,
            "vocab_hash": self.vocab.hash(),
            "domain": self.domain.spec(),
            "table": {u: [list(c) for c in cands]
                      for u, cands in self.table.entries.items()},
        }

    @classmethod
    def from_header(cls, header: dict) -> "ParserModel":
        config = ModelConfig(**header["model"])
        vocab = Vocab(header["vocab"])
        if vocab.hash() != header["vocab_hash"]:
            raise dg.CheckpointError("vocabulary hash mismatch in header")
        domain = domain_from_spec(header["domain"])
        table = PhraseTable(entries={
            u: [tuple(c) for c in cands]
            for u, cands in header["table"].items()})
        return cls(config, vocab, domain, table)

    def save(self, path, extra_header: dict | None = None,
             extra_arrays: dict | None = None) -> None:
        header = self.header()
        if extra_header:
            header.update(extra_header)
        arrays = self.store.to_arrays()
        if extra_arrays:
            arrays.update(extra_arrays)
        dg.save_checkpoint(path, header, arrays)

    @classmethod
    def load(cls, path) -> tuple["ParserModel", dict, dict]:
        """Rebuild a model from a checkpoint; returns (model, header,
        non-parameter arrays)."""
        header, arrays = dg.load_checkpoint(path)
        model = cls.from_header(header)
        params = {k: v for k, v in arrays.items()
                  if k.split("/", 1)[0] in dg.GROUPS}
        rest = {k: v for k, v in arrays.items()
                if k.split("/", 1)[0] not in dg.GROUPS}
        model.store.load_arrays(params)
        return model, header, rest
