"""Feature-weight tuning over accumulated n-best lists (exact per-feature line
search on the score envelope) and shallow-feature n-best reranking that pulls
hypotheses back toward the original MT output.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import metrics
from .decoder import FeatureWeights
from .validation import Sentence

TER = "ter"
BLEU = "bleu"

MIN_GAIN = 1e-4

# weights never searched: per-table bias stays a fixed prior here
_UNTUNABLE: frozenset = frozenset()


class OptimizeError(ValueError):
    pass


@dataclass
class TuneRun:
    """History of accepted line-search steps: (weights, dev objective)."""

    objective: str
    history: list[tuple[FeatureWeights, float]] = field(default_factory=list)

    @property
    def best(self) -> tuple[FeatureWeights, float]:
        return self.history[-1]


@dataclass(frozen=True)
class _Candidate:
    features: dict[str, float]
    edits: int
    ref_len: int
    bleu_stats: tuple


def _objective_value(objective: str, stats) -> float:
    """Corpus objective, oriented so that larger is better."""
    if objective == TER:
        edits, ref_len = stats
        return -(edits / ref_len) if ref_len else 0.0
    matches, totals, hyp_len, ref_len = stats
    return metrics.bleu_from_stats(list(matches), list(totals), hyp_len, ref_len)


def _accumulate(objective: str, picked: Sequence[_Candidate]) -> float:
    if objective == TER:
        return _objective_value(TER, (sum(c.edits for c in picked),
                                      sum(c.ref_len for c in picked)))
    matches = [0] * 4
    totals = [0] * 4
    hyp_len = ref_len = 0
    for c in picked:
        m, t, hl, rl = c.bleu_stats
        matches = [a + b for a, b in zip(matches, m)]
        totals = [a + b for a, b in zip(totals, t)]
        hyp_len += hl
        ref_len += rl
    return _objective_value(BLEU, (matches, totals, hyp_len, ref_len))


def _upper_envelope(lines: Sequence[tuple[float, float, int]]):
    """Upper envelope of y = slope*x + intercept lines.

    Returns interval starts and the winning candidate per interval; the first
    interval starts at -inf. Deterministic for ties (first candidate wins).
    """
    by_slope: dict[float, tuple[float, int]] = {}
    for slope, intercept, cand in lines:
        cur = by_slope.get(slope)
        if cur is None or intercept > cur[0]:
            by_slope[slope] = (intercept, cand)
    ordered = sorted((s, ib[0], ib[1]) for s, ib in by_slope.items())
    hull: list[tuple[float, float, int]] = []
    starts: list[float] = []
    for slope, intercept, cand in ordered:
        while hull:
            s0, i0, _ = hull[-1]
            # intersection with the current hull top
            x = (i0 - intercept) / (slope - s0)
            if starts and x <= starts[-1]:
                hull.pop()
                starts.pop()
            else:
                starts.append(x)
                break
        hull.append((slope, intercept, cand))
    return [float("-inf")] + starts, [c for _, _, c in hull]


def _line_search(pool: Sequence[Sequence[_Candidate]], weights: FeatureWeights,
                 feature: str, objective: str) -> tuple[float, float]:
    """Exact search over one weight; returns (best value, best objective)."""
    current = weights[feature]
    seg_envelopes = []
    breakpoints: set[float] = set()
    for candidates in pool:
        lines = []
        for idx, cand in enumerate(candidates):
            slope = cand.features.get(feature, 0.0)
            base = sum(weights[n] * v for n, v in cand.features.items()
                       if n != feature)
            lines.append((slope, base, idx))
        starts, winners = _upper_envelope(lines)
        seg_envelopes.append((starts, winners, candidates))
        breakpoints.update(starts[1:])
    grid = sorted(breakpoints)
    # probe midpoints of every interval plus the current value
    probes = [current]
    lo = None
    for x in grid:
        probes.append(x - 0.5 if lo is None else (lo + x) / 2.0)
        lo = x
    if lo is not None:
        probes.append(lo + 0.5)

    def pick(gamma: float) -> list[_Candidate]:
        chosen = []
        for starts, winners, candidates in seg_envelopes:
            idx = 0
            for k in range(len(starts) - 1, -1, -1):
                if gamma >= starts[k]:
                    idx = k
                    break
            chosen.append(candidates[winners[idx]])
        return chosen

    best_gamma, best_val = current, None
    for gamma in probes:
        val = _accumulate(objective, pick(gamma))
        better = best_val is None or val > best_val + 1e-12
        tie = best_val is not None and abs(val - best_val) <= 1e-12
        if better or (tie and abs(gamma - current) < abs(best_gamma - current) - 1e-12):
            best_gamma, best_val = gamma, val
    return best_gamma, best_val


def _optimize_pool(pool, weights: FeatureWeights, objective: str,
                   tunable: Sequence[str]) -> tuple[FeatureWeights, float]:
    weights = weights.copy()
    current = _accumulate(objective, [
        max(cands, key=lambda c: sum(weights[n] * v for n, v in c.features.items()))
        for cands in pool
    ])
    while True:
        best_feature = None
        best_gamma = 0.0
        best_val = current
        for feature in tunable:
            gamma, val = _line_search(pool, weights, feature, objective)
            if val > best_val + 1e-12:
                best_feature, best_gamma, best_val = feature, gamma, val
        if best_feature is None or best_val - current < MIN_GAIN:
            break
        weights[best_feature] = best_gamma
        current = best_val
    return weights, current


def tune(
    dev: Sequence[tuple[Sentence, Sentence]],
    decode_nbest: Callable[[FeatureWeights, Sentence], list],
    initial_weights: FeatureWeights | None = None,
    objective: str = TER,
    cycles: int = 3,
    restarts: int = 3,
    seed: int = 0,
    tunable: Sequence[str] | None = None,
) -> tuple[FeatureWeights, TuneRun]:
    """Iterative decode/line-search tuning over the dev set.

    Each cycle decodes the dev segments into n-best lists that accumulate
    across cycles, then per-feature exact line search improves the corpus
    objective on the pooled candidates, with random restarts from perturbed
    weights. Never returns weights scoring worse than the initial ones on the
    final pool.
    """
    if not dev:
        raise OptimizeError("dev set must be non-empty")
    if objective not in (TER, BLEU):
        raise OptimizeError(f"unknown objective {objective!r}")
    weights = (initial_weights or FeatureWeights()).copy()
    if tunable is None:
        tunable = [n for n in weights.names() if n not in _UNTUNABLE]
    rng = random.Random(seed)
    run = TuneRun(objective)

    pool: list[dict[Sentence, _Candidate]] = [dict() for _ in dev]
    stats_cache: dict[tuple[int, Sentence], tuple] = {}

    def candidate(seg: int, tokens: Sentence, features: dict) -> _Candidate:
        key = (seg, tokens)
        if key not in stats_cache:
            ref = dev[seg][1]
            _, breakdown, _ = metrics.ter(tokens, ref)
            stats_cache[key] = (breakdown.edits, breakdown.ref_len,
                                metrics.bleu_stats(tokens, ref))
        edits, ref_len, bstats = stats_cache[key]
        return _Candidate(features, edits, ref_len, bstats)

    final_weights, final_val = weights, None
    for cycle in range(max(1, cycles)):
        for seg, (inp, _ref) in enumerate(dev):
            for tokens, features in decode_nbest(weights, inp):
                entry = pool[seg].get(tokens)
                if entry is None:
                    pool[seg][tokens] = candidate(seg, tokens, features)
        pooled = [list(p.values()) for p in pool]

        best_weights, best_val = _optimize_pool(pooled, weights, objective, tunable)
        for restart in range(restarts):
            perturbed = weights.copy()
            for name in tunable:
                perturbed[name] = perturbed[name] + rng.gauss(0.0, 0.5)
            cand_weights, cand_val = _optimize_pool(pooled, perturbed, objective,
                                                    tunable)
            if cand_val > best_val + 1e-12:
                best_weights, best_val = cand_weights, cand_val
        if not run.history or best_val > run.history[-1][1] + 1e-12:
            run.history.append((best_weights.copy(), best_val))
        if final_val is not None and best_val - final_val < MIN_GAIN:
            if best_val > final_val:
                final_weights, final_val = best_weights, best_val
            break
        weights = best_weights
        final_weights, final_val = best_weights, best_val

    # guarantee: never worse than the initial weights on the final pool
    pooled = [list(p.values()) for p in pool]
    initial = (initial_weights or FeatureWeights())

    def pool_value(w: FeatureWeights) -> float:
        return _accumulate(objective, [
            max(cands, key=lambda c: sum(w[n] * v for n, v in c.features.items()))
            for cands in pooled if cands
        ])

    if pool_value(initial) > pool_value(final_weights) + 1e-12:
        final_weights = initial.copy()
    final_value = pool_value(final_weights)
    if not run.history or final_value >= run.history[-1][1] - 1e-12:
        run.history.append((final_weights.copy(), final_value))
    return final_weights, run


# -- reranking ---------------------------------------------------------------

@dataclass(frozen=True)
class RerankFeatures:
    """Shallow edit features of a hypothesis against the original MT output."""

    insertions: int
    deletions: int
    substitutions: int
    shifts: int
    length_ratio: float
    precision: float  # share of hypothesis tokens present in the MT output
    recall: float     # share of MT tokens present in the hypothesis

    def as_dict(self) -> dict[str, float]:
        return {
            "insertions": float(self.insertions),
            "deletions": float(self.deletions),
            "substitutions": float(self.substitutions),
            "shifts": float(self.shifts),
            "length_ratio": self.length_ratio,
            "precision": self.precision,
            "recall": self.recall,
        }


RERANK_FEATURE_NAMES = tuple(sorted(
    RerankFeatures(0, 0, 0, 0, 0.0, 0.0, 0.0).as_dict()))


def rerank_features(hyp: Sentence, mt: Sentence) -> RerankFeatures:
    _, breakdown, _ = metrics.ter(hyp, mt)
    from collections import Counter

    overlap = sum((Counter(hyp) & Counter(mt)).values())
    return RerankFeatures(
        insertions=breakdown.insertions,
        deletions=breakdown.deletions,
        substitutions=breakdown.substitutions,
        shifts=breakdown.shifts,
        length_ratio=len(hyp) / len(mt) if mt else 0.0,
        precision=overlap / len(hyp) if hyp else 0.0,
        recall=overlap / len(mt) if mt else 0.0,
    )


def rerank(nbest: Sequence[tuple[Sentence, float]], mt: Sentence,
           rerank_weights: dict[str, float]) -> list[tuple[Sentence, float]]:
    """Reorder (tokens, base_score) candidates by base score plus the weighted
    shallow features; ties keep the prior order."""
    if not nbest:
        raise OptimizeError("nbest list must be non-empty")
    for name in rerank_weights:
        if name not in RERANK_FEATURE_NAMES:
            raise OptimizeError(f"unknown rerank feature {name!r}")
    rescored = []
    for tokens, base in nbest:
        feats = rerank_features(tokens, mt).as_dict()
        score = base + sum(rerank_weights.get(n, 0.0) * v for n, v in feats.items())
        rescored.append((tokens, score))
    order = sorted(range(len(rescored)), key=lambda i: (-rescored[i][1], i))
    return [rescored[i] for i in order]
