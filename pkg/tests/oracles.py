"""Independent brute-force oracles used to pin the semantics of the fast paths.

These deliberately re-derive results from first principles (exhaustive search,
direct formula evaluation) and must stay independent of the implementations
they check.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter


def levenshtein(a, b) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j - 1] + (x != y), prev[j] + 1, cur[j - 1] + 1))
        prev = cur
    return prev[-1]


def _all_shifts(seq):
    n = len(seq)
    for length in range(1, n):
        for start in range(0, n - length + 1):
            block = seq[start : start + length]
            rest = seq[:start] + seq[start + length :]
            for dest in range(0, len(rest) + 1):
                if dest == start:
                    continue
                yield rest[:dest] + block + rest[dest:]


def ter_exhaustive(hyp, ref) -> float:
    """Minimum of (#shifts + edit distance) over all unrestricted block-shift
    sequences, found by breadth-first search over arrangements."""
    hyp = tuple(hyp)
    ref = tuple(ref)
    best = levenshtein(hyp, ref)
    seen = {hyp}
    frontier = [hyp]
    k = 0
    while frontier and k + 1 < best:
        k += 1
        nxt = []
        for seq in frontier:
            for shifted in _all_shifts(seq):
                if shifted in seen:
                    continue
                seen.add(shifted)
                total = k + levenshtein(shifted, ref)
                if total < best:
                    best = total
                nxt.append(shifted)
        frontier = nxt
    return best / len(ref)


def bleu_direct(hyps, refs) -> float:
    """Corpus BLEU evaluated directly from the defining formula."""
    log_sum = 0.0
    for n in range(1, 5):
        match = total = 0
        for hyp, ref in zip(hyps, refs):
            hyp_grams = Counter(tuple(hyp[i : i + n]) for i in range(len(hyp) - n + 1))
            ref_grams = Counter(tuple(ref[i : i + n]) for i in range(len(ref) - n + 1))
            total += sum(hyp_grams.values())
            match += sum(min(c, ref_grams[g]) for g, c in hyp_grams.items())
        if match == 0 or total == 0:
            return 0.0
        log_sum += 0.25 * math.log(match / total)
    c = sum(len(h) for h in hyps)
    r = sum(len(r_) for r_ in refs)
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(log_sum)


def consistent_phrase_pairs(f_len, e_len, links, max_len):
    """All alignment-consistent phrase pairs by direct enumeration of spans."""
    out = set()
    links = set(links)
    for i1 in range(f_len):
        for i2 in range(i1, min(f_len, i1 + max_len)):
            for j1 in range(e_len):
                for j2 in range(j1, min(e_len, j1 + max_len)):
                    inside = [(i, j) for (i, j) in links if i1 <= i <= i2 and j1 <= j <= j2]
                    if not inside:
                        continue
                    if any(i1 <= i <= i2 and not (j1 <= j <= j2) for (i, j) in links):
                        continue
                    if any(j1 <= j <= j2 and not (i1 <= i <= i2) for (i, j) in links):
                        continue
                    out.add((i1, i2, j1, j2))
    return out


def enumerate_derivations(n_tokens, options, distortion_limit):
    """All complete derivations: sequences of non-overlapping span options in
    emission order, honoring the distortion limit. Yields lists of options."""

    def extend(covered, prev_end, chosen):
        if len(covered) == n_tokens:
            yield list(chosen)
            return
        for opt in options:
            start, end = opt.start, opt.end
            if any(p in covered for p in range(start, end)):
                continue
            if abs(start - prev_end) > distortion_limit:
                continue
            chosen.append(opt)
            yield from extend(covered | set(range(start, end)), end, chosen)
            chosen.pop()

    yield from extend(frozenset(), 0, [])
