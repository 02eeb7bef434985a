"""Reference-based evaluation: edit rate with block shifts, corpus BLEU,
sentence-level precision of a re-translation system, and repetition rate.

The edit-rate metric counts word insertions, deletions, substitutions and
block shifts (one edit each), normalized by reference length. The shift
search minimizes shifts + remaining edit distance with a bounded best-first
search: small inputs are solved exactly, long inputs fall back to the best
solution found within the expansion budget.
"""

from __future__ import annotations

import heapq
import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .validation import Sentence, check_equal_lengths

# Expansion budget for the shift search. Never reached for short segments
# (worst observed on 6-token inputs is a few dozen), bounds work on long ones.
MAX_SHIFT_EXPANSIONS = 1000

MATCH = "match"
SUBSTITUTION = "substitution"
INSERTION = "insertion"


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class EditBreakdown:
    """Edit operations transforming a hypothesis into its reference.

    `insertions` counts reference words missing from the hypothesis,
    `deletions` counts extra hypothesis words.
    """

    insertions: int
    deletions: int
    substitutions: int
    shifts: int
    ref_len: int

    @property
    def edits(self) -> int:
        return self.insertions + self.deletions + self.substitutions + self.shifts

    @property
    def ter(self) -> float:
        return self.edits / self.ref_len if self.ref_len else 0.0


@dataclass(frozen=True)
class TerAlignment:
    """Token-level view of the final (post-shift) alignment.

    Hypothesis tokens are labeled match/substitution/insertion (an "insertion"
    is an extra hypothesis token with no reference counterpart); reference
    tokens the hypothesis dropped are marked deleted. Indices refer to the
    original, unshifted hypothesis.
    """

    hyp_labels: tuple[str, ...]
    ref_deleted: tuple[bool, ...]
    links: tuple[tuple[int, int], ...]


def edit_distance(a: Sequence[str], b: Sequence[str], cutoff: int | None = None) -> int:
    """Word-level Levenshtein distance with unit costs.

    With a cutoff, abandons early and returns the cutoff once the true
    distance provably reaches it (row minima never decrease).
    """
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if cutoff is not None and abs(len(a) - len(b)) >= cutoff:
        return cutoff
    prev = list(range(len(b) + 1))
    for i, tok_a in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, tok_b in enumerate(b, start=1):
            sub = prev[j - 1] + (tok_a != tok_b)
            dele = prev[j] + 1
            inse = cur[j - 1] + 1
            cur[j] = sub if sub <= dele and sub <= inse else (dele if dele <= inse else inse)
        if cutoff is not None and min(cur) >= cutoff:
            return cutoff
        prev = cur
    return prev[-1]


def _align_ops(hyp: Sequence[str], ref: Sequence[str]) -> list[tuple[str, int, int]]:
    """Backtrace one minimal edit script as (op, hyp_idx, ref_idx) tuples.

    Tie-break preference: match > substitution > deletion (drop hyp token) >
    insertion (add ref token).
    """
    n, m = len(hyp), len(ref)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        dist[i][0] = i
    for j in range(m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        row = dist[i]
        prev = dist[i - 1]
        tok = hyp[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + (tok != ref[j - 1]), prev[j] + 1, row[j - 1] + 1)
    ops: list[tuple[str, int, int]] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and hyp[i - 1] == ref[j - 1] and dist[i][j] == dist[i - 1][j - 1]:
            ops.append((MATCH, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + 1:
            ops.append((SUBSTITUTION, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            ops.append(("delete", i - 1, -1))
            i -= 1
        else:
            ops.append(("insert", -1, j - 1))
            j -= 1
    ops.reverse()
    return ops


def _bag_distance(hyp: Sequence[str], ref: Sequence[str]) -> int:
    """Lower bound on the edit distance of any reordering of `hyp`.

    Shifts never change the token multiset, so no shift sequence can push the
    remaining edit distance below this value.
    """
    ch, cr = Counter(hyp), Counter(ref)
    return max(sum((ch - cr).values()), sum((cr - ch).values()))


def _misaligned(seq: tuple[str, ...], ref: tuple[str, ...]) -> list[bool]:
    """Tokens of `seq` not identically matched under one minimal edit script."""
    flags = [True] * len(seq)
    for op, hi, _ in _align_ops(seq, ref):
        if op == MATCH:
            flags[hi] = False
    return flags


def _shift_search(hyp: tuple[str, ...], ref: tuple[str, ...], max_expansions: int):
    """Minimize shifts + edit distance over block-shift sequences.

    Best-first search over hypothesis arrangements, pruned by the bag distance
    bound; candidate blocks must contain a currently misaligned token (a shift
    of fully matched material never helps). Returns (#shifts, final
    arrangement, final distance, index permutation); exact whenever the
    expansion budget is not exhausted.
    """
    bag = _bag_distance(hyp, ref)
    base = edit_distance(hyp, ref)
    identity = tuple(range(len(hyp)))
    best = (base, 0, hyp, identity)  # (total, shifts, arrangement, order)
    if base == bag or len(hyp) < 2:
        return 0, hyp, base, identity
    heap = [(base, 0, hyp, identity)]
    seen = {hyp: 0}
    expansions = 0
    while heap and expansions < max_expansions:
        f, g, seq, order = heapq.heappop(heap)
        if g + 1 + bag >= best[0]:
            continue
        expansions += 1
        mis = _misaligned(seq, ref)
        n = len(seq)
        g2 = g + 1
        cutoff = best[0] - g2  # a child improves only below this distance
        for length in range(1, n):
            for start in range(0, n - length + 1):
                if not any(mis[start : start + length]):
                    continue
                block = seq[start : start + length]
                rest = seq[:start] + seq[start + length :]
                block_idx = order[start : start + length]
                rest_idx = order[:start] + order[start + length :]
                for dest in range(0, len(rest) + 1):
                    if dest == start:
                        continue
                    moved = rest[:dest] + block + rest[dest:]
                    prev = seen.get(moved)
                    if prev is not None and prev <= g2:
                        continue
                    seen[moved] = g2
                    dist = edit_distance(moved, ref, cutoff=max(cutoff, bag + 1))
                    moved_order = rest_idx[:dest] + block_idx + rest_idx[dest:]
                    total = g2 + dist
                    if total < best[0]:
                        best = (total, g2, moved, moved_order)
                        cutoff = best[0] - g2
                        if total == bag:
                            return g2, moved, dist, moved_order
                    if g2 + 1 + bag < best[0]:
                        heapq.heappush(heap, (total, g2, moved, moved_order))
    return best[1], best[2], best[0] - best[1], best[3]


def edit_rate(hyp: Sequence[str], ref: Sequence[str],
              max_expansions: int = MAX_SHIFT_EXPANSIONS) -> float:
    """Score-only edit rate, skipping the breakdown and alignment backtrace."""
    hyp = tuple(hyp)
    ref = tuple(ref)
    if not ref:
        raise MetricError("reference must be non-empty")
    if hyp == ref:
        return 0.0
    shifts, _, dist, _ = _shift_search(hyp, ref, max_expansions)
    return (shifts + dist) / len(ref)


def ter(hyp: Sequence[str], ref: Sequence[str],
        max_expansions: int = MAX_SHIFT_EXPANSIONS) -> tuple[float, EditBreakdown, TerAlignment]:
    """Edit rate of `hyp` against `ref`, with the edit breakdown and the final
    token alignment (indices on the original hypothesis)."""
    hyp = tuple(hyp)
    ref = tuple(ref)
    if not ref:
        raise MetricError("reference must be non-empty")
    shifts, current, _, order = _shift_search(hyp, ref, max_expansions)

    ins = dels = subs = 0
    hyp_labels = [INSERTION] * len(hyp)
    ref_deleted = [False] * len(ref)
    links = []
    for op, hi, ri in _align_ops(current, ref):
        if op == MATCH:
            hyp_labels[order[hi]] = MATCH
            links.append((order[hi], ri))
        elif op == SUBSTITUTION:
            subs += 1
            hyp_labels[order[hi]] = SUBSTITUTION
            links.append((order[hi], ri))
        elif op == "delete":
            dels += 1  # extra hypothesis token
        else:
            ins += 1  # reference token missing from the hypothesis
            ref_deleted[ri] = True
    breakdown = EditBreakdown(ins, dels, subs, shifts, len(ref))
    alignment = TerAlignment(tuple(hyp_labels), tuple(ref_deleted), tuple(sorted(links)))
    return breakdown.ter, breakdown, alignment


def hter(mt: Sequence[str], pe: Sequence[str]) -> float:
    """Edit rate of the MT output against its human post-edit."""
    return ter(mt, pe)[0]


def corpus_ter(hyps: Sequence[Sentence], refs: Sequence[Sentence]) -> float:
    """Micro-averaged edit rate: total edits over total reference tokens."""
    check_equal_lengths(hyps=hyps, refs=refs)
    edits = 0
    ref_len = 0
    for hyp, ref in zip(hyps, refs):
        _, breakdown, _ = ter(hyp, ref)
        edits += breakdown.edits
        ref_len += breakdown.ref_len
    if ref_len == 0:
        raise MetricError("empty reference corpus")
    return edits / ref_len


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_stats(hyp: Sequence[str], ref: Sequence[str], max_n: int = 4):
    """Per-sentence sufficient statistics: clipped matches and totals per n, lengths."""
    matches = [0] * max_n
    totals = [0] * max_n
    for n in range(1, max_n + 1):
        hyp_counts = _ngrams(hyp, n)
        ref_counts = _ngrams(ref, n)
        totals[n - 1] = sum(hyp_counts.values())
        matches[n - 1] = sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
    return matches, totals, len(hyp), len(ref)


def bleu_from_stats(matches, totals, hyp_len: int, ref_len: int, max_n: int = 4) -> float:
    if hyp_len == 0:
        return 0.0
    log_prec = 0.0
    for m, t in zip(matches, totals):
        if m == 0 or t == 0:
            return 0.0
        log_prec += math.log(m / t) / max_n
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_prec)


def bleu(hyps: Sequence[Sentence], refs: Sequence[Sentence], max_n: int = 4) -> float:
    """Corpus-level BLEU, orders 1..4 with uniform weights, no smoothing."""
    check_equal_lengths(hyps=hyps, refs=refs)
    if not any(refs):
        raise MetricError("at least one reference must be non-empty")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in zip(hyps, refs):
        m, t, hl, rl = bleu_stats(hyp, ref, max_n)
        matches = [a + b for a, b in zip(matches, m)]
        totals = [a + b for a, b in zip(totals, t)]
        hyp_len += hl
        ref_len += rl
    return bleu_from_stats(matches, totals, hyp_len, ref_len, max_n)


@dataclass(frozen=True)
class PrecisionReport:
    modified: int
    improved: int

    @property
    def precision(self) -> float | None:
        return self.improved / self.modified if self.modified else None


def precision(
    mt: Sequence[Sentence], ape: Sequence[Sentence], ref: Sequence[Sentence]
) -> PrecisionReport:
    """Sentences improved over sentences modified by the re-translation step.

    A segment counts as modified when its edit rate differs from the original
    MT edit rate, improved when it is strictly lower.
    """
    check_equal_lengths(mt=mt, ape=ape, ref=ref)
    modified = improved = 0
    for m, a, r in zip(mt, ape, ref):
        ter_mt = ter(m, r)[0]
        ter_ape = ter(a, r)[0]
        if ter_ape != ter_mt:
            modified += 1
            if ter_ape < ter_mt:
                improved += 1
    return PrecisionReport(modified, improved)


def repetition_rate(corpus: Sequence[Sentence], max_n: int = 4) -> float:
    """Geometric mean over n=1..4 of the rate of non-singleton n-gram types.

    Counted over the full corpus; orders with no n-gram types contribute 1.
    """
    if not corpus:
        raise MetricError("corpus must be non-empty")
    log_sum = 0.0
    for n in range(1, max_n + 1):
        counts = Counter()
        for sent in corpus:
            counts.update(_ngrams(sent, n))
        if not counts:
            continue  # contributes a factor of 1
        repeated = sum(1 for c in counts.values() if c > 1)
        rate = repeated / len(counts)
        if rate == 0.0:
            return 0.0
        log_sum += math.log(rate)
    return math.exp(log_sum / max_n)


@dataclass(frozen=True)
class EvalReport:
    ter: float
    bleu: float
    sentences_modified: int
    sentences_improved: int
    precision: float | None


def evaluate_corpus(
    mt: Sequence[Sentence], ape: Sequence[Sentence], ref: Sequence[Sentence]
) -> EvalReport:
    prec = precision(mt, ape, ref)
    return EvalReport(
        ter=corpus_ter(ape, ref),
        bleu=bleu(ape, ref),
        sentences_modified=prec.modified,
        sentences_improved=prec.improved,
        precision=prec.precision,
    )
