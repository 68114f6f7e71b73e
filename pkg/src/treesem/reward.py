"""Trajectory rewards: logic-based and primitive-based Jaccard blend."""

from __future__ import annotations

from dataclasses import dataclass

from .semalg import EvaluationFailure, SemanticValue, meaning_primitives, to_cnf


@dataclass(frozen=True)
class RewardBreakdown:
    r1: float
    r2: float
    total: float
    alpha: float


def jaccard(a: frozenset, b: frozenset) -> float:
    """Intersection over union; 1.0 when both sets are empty."""
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def logic_reward(predicted: SemanticValue | EvaluationFailure,
                 gold: SemanticValue) -> float:
    """Jaccard similarity of canonical conjunct sets; 0.0 on failure."""
    if isinstance(predicted, EvaluationFailure):
        return 0.0
    return jaccard(to_cnf(predicted), to_cnf(gold))


def primitive_reward(predicted: SemanticValue | EvaluationFailure,
                     gold: SemanticValue) -> float:
    """Jaccard similarity of the primitive sets, structure ignored."""
    if isinstance(predicted, EvaluationFailure):
        return 0.0
    return jaccard(meaning_primitives(predicted), meaning_primitives(gold))


def total_reward(predicted: SemanticValue | EvaluationFailure,
                 gold: SemanticValue, alpha: float = 0.5) -> RewardBreakdown:
    """Blend ``alpha * logic + (1 - alpha) * primitive``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    r1 = logic_reward(predicted, gold)
    r2 = primitive_reward(predicted, gold)
    return RewardBreakdown(r1=r1, r2=r2, total=alpha * r1 + (1 - alpha) * r2,
                           alpha=alpha)
