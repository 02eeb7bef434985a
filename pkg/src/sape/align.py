"""Word alignment: lexical translation model trained with EM, per-sentence
argmax alignment, bidirectional symmetrization heuristics, and monolingual
edit-distance alignment for (mt, pe) pairs.

The lexicon has no empty source word; unaligned target tokens are handled by
the probability floor at alignment time.
"""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator

from .validation import Sentence

PROB_FLOOR = 1e-9

WordAlignment = frozenset  # of (src_index, tgt_index) pairs

INTERSECTION = "intersection"
UNION = "union"
GROW_DIAG_FINAL_AND = "grow-diag-final-and"


class AlignmentError(ValueError):
    pass


class LexiconModel:
    """Word translation probabilities t(target | source), rows summing to 1."""

    def __init__(self, table: dict[str, dict[str, float]], epsilon: float = 1.0):
        self.table = table
        self.epsilon = epsilon  # likelihood normalization constant only
        self.source_vocab = set(table)
        self.target_vocab = set()
        for row in table.values():
            self.target_vocab.update(row)

    def prob(self, target: str, source: str) -> float:
        return max(self.table.get(source, {}).get(target, 0.0), PROB_FLOOR)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for src in sorted(self.table):
                for tgt, p in sorted(self.table[src].items()):
                    fh.write(f"{src}\t{tgt}\t{p:.10g}\n")

    @classmethod
    def load(cls, path) -> "LexiconModel":
        table: dict[str, dict[str, float]] = defaultdict(dict)
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                src, tgt, p = line.rstrip("\n").split("\t")
                table[src][tgt] = float(p)
        return cls(dict(table))


def ibm1_train(pairs: Sequence[tuple[Sentence, Sentence]], iterations: int = 5) -> LexiconModel:
    """EM estimation of t(e|f) from sentence pairs (f, e), uniform start.

    Expected counts c(e|f) = t(e|f) / sum_i t(e|f_i) per co-occurrence, then
    row renormalization. No empty source word.
    """
    if not pairs:
        raise AlignmentError("empty training corpus")
    if iterations < 1:
        raise AlignmentError("iterations must be >= 1")
    for f, e in pairs:
        if not f or not e:
            raise AlignmentError("sentences must be non-empty")

    target_vocab = set()
    for _, e in pairs:
        target_vocab.update(e)
    uniform = 1.0 / len(target_vocab)
    t: dict[str, dict[str, float]] = defaultdict(dict)
    for f, e in pairs:
        for fw in f:
            row = t[fw]
            for ew in e:
                row.setdefault(ew, uniform)

    for _ in range(iterations):
        counts: dict[str, dict[str, float]] = defaultdict(lambda: defaultdict(float))
        for f, e in pairs:
            for ew in e:
                denom = sum(t[fw][ew] for fw in f)
                for fw in f:
                    counts[fw][ew] += t[fw][ew] / denom
        for fw, row in counts.items():
            total = sum(row.values())
            t[fw] = {ew: c / total for ew, c in row.items()}
    return LexiconModel({fw: dict(row) for fw, row in t.items()})


def corpus_log_likelihood(model: LexiconModel, pairs: Sequence[tuple[Sentence, Sentence]]) -> float:
    """Log p(e|f) summed over pairs, product-of-sums form, epsilon included."""
    ll = 0.0
    for f, e in pairs:
        ll += math.log(model.epsilon) - len(e) * math.log(len(f))
        for ew in e:
            ll += math.log(sum(model.prob(ew, fw) for fw in f))
    return ll


def viterbi_align(model: LexiconModel, f: Sentence, e: Sentence) -> WordAlignment:
    """Link each target position to its argmax source position (ties: smallest)."""
    links = set()
    for j, ew in enumerate(e):
        best_i = 0
        best_p = -1.0
        for i, fw in enumerate(f):
            p = model.prob(ew, fw)
            if p > best_p:
                best_p = p
                best_i = i
        links.add((best_i, j))
    return frozenset(links)


def _neighbors(point):
    i, j = point
    return (
        (i - 1, j - 1), (i - 1, j), (i - 1, j + 1),
        (i, j - 1), (i, j + 1),
        (i + 1, j - 1), (i + 1, j), (i + 1, j + 1),
    )


def symmetrize(fwd: WordAlignment, rev: WordAlignment,
               heuristic: str = GROW_DIAG_FINAL_AND) -> WordAlignment:
    """Combine two directional alignments over the same sentence pair."""
    fwd = frozenset(fwd)
    rev = frozenset(rev)
    if heuristic == INTERSECTION:
        return fwd & rev
    if heuristic == UNION:
        return fwd | rev
    if heuristic != GROW_DIAG_FINAL_AND:
        raise AlignmentError(f"unknown symmetrization heuristic {heuristic!r}")

    union = fwd | rev
    links = set(fwd & rev)
    src_covered = {i for i, _ in links}
    tgt_covered = {j for _, j in links}

    # grow-diag: absorb union links adjacent to current links while either
    # endpoint is uncovered
    changed = True
    while changed:
        changed = False
        for point in sorted(links):
            for cand in _neighbors(point):
                if cand not in union or cand in links:
                    continue
                i, j = cand
                if i not in src_covered or j not in tgt_covered:
                    links.add(cand)
                    src_covered.add(i)
                    tgt_covered.add(j)
                    changed = True

    # final-and: union links with both endpoints still uncovered
    for cand in sorted(union - links):
        i, j = cand
        if i not in src_covered and j not in tgt_covered:
            links.add(cand)
            src_covered.add(i)
            tgt_covered.add(j)
    return frozenset(links)


# Per-token outcome labels for the monolingual aligner.
KEPT = "match"
REPLACED = "substitution"
DROPPED = "deletion"
ADDED = "insertion"


def levenshtein_align(mt: Sentence, pe: Sentence):
    """Word-level edit-distance alignment of an MT segment with its post-edit.

    Returns (links, mt_labels, pe_labels): matches and substitutions produce
    links, deleted mt tokens and inserted pe tokens stay unlinked. Backtrace
    preference: match > substitution > deletion > insertion.
    """
    n, m = len(mt), len(pe)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        dist[i][0] = i
    for j in range(m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        row, prev = dist[i], dist[i - 1]
        tok = mt[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + (tok != pe[j - 1]), prev[j] + 1, row[j - 1] + 1)

    links = set()
    mt_labels = [DROPPED] * n
    pe_labels = [ADDED] * m
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and mt[i - 1] == pe[j - 1] and dist[i][j] == dist[i - 1][j - 1]:
            links.add((i - 1, j - 1))
            mt_labels[i - 1] = pe_labels[j - 1] = KEPT
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + 1:
            links.add((i - 1, j - 1))
            mt_labels[i - 1] = pe_labels[j - 1] = REPLACED
            i, j = i - 1, j - 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            i -= 1
        else:
            j -= 1
    return frozenset(links), tuple(mt_labels), tuple(pe_labels)


def format_alignment(alignment: WordAlignment) -> str:
    """Serialize links as space-separated "i-j" pairs, sorted."""
    return " ".join(f"{i}-{j}" for i, j in sorted(alignment))


def parse_alignment(line: str) -> WordAlignment:
    links = set()
    for pair in line.split():
        i, j = pair.split("-")
        links.add((int(i), int(j)))
    return frozenset(links)


class WordAligner(BaseEstimator):
    """Bidirectional lexical aligner with a fit/align interface.

    fit(X, y) trains source-to-target and target-to-source lexicons with EM;
    align(f, e) returns the symmetrized word alignment.
    """

    def __init__(self, iterations: int = 5, heuristic: str = GROW_DIAG_FINAL_AND):
        self.iterations = iterations
        self.heuristic = heuristic

    def fit(self, X: Sequence[Sentence], y: Sequence[Sentence]):
        pairs = list(zip(X, y))
        self.lexicon_fwd_ = ibm1_train(pairs, self.iterations)
        self.lexicon_rev_ = ibm1_train([(e, f) for f, e in pairs], self.iterations)
        return self

    def align(self, f: Sentence, e: Sentence) -> WordAlignment:
        fwd = viterbi_align(self.lexicon_fwd_, f, e)
        rev = viterbi_align(self.lexicon_rev_, e, f)
        rev_flipped = frozenset((i, j) for j, i in rev)
        return symmetrize(fwd, rev_flipped, self.heuristic)

    def transform(self, X: Sequence[tuple[Sentence, Sentence]]) -> list[WordAlignment]:
        return [self.align(f, e) for f, e in X]
