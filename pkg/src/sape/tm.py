"""Translation model: alignment-consistent phrase pair extraction, maximum
likelihood translation and lexicalized reordering estimation, task-specific
dense features measuring similarity/reliability/usefulness of correction
rules, and harm-ratio pruning.

Phrase table text format, one entry per line:
  src ||| tgt ||| p(t|s) p(s|t) lex(t|s) lex(s|t) sim med stdev pos neg ||| joint src tgt
"""

from __future__ import annotations

import math
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from . import metrics
from .align import PROB_FLOOR, LexiconModel, WordAlignment
from .validation import Sentence

MONOTONE = "monotone"
SWAP = "swap"
DISCONTINUOUS = "discontinuous"
ORIENTATIONS = (MONOTONE, SWAP, DISCONTINUOUS)

DEFAULT_MAX_PHRASE_LEN = 7
DEFAULT_REORDERING_SMOOTHING = 0.5


class TranslationModelError(ValueError):
    pass


@dataclass(frozen=True)
class PhraseObservation:
    """One extracted phrase pair occurrence with its orientations and the
    phrase-internal alignment links (offsets relative to the spans)."""

    src: Sentence
    tgt: Sentence
    orient_fwd: str
    orient_bwd: str
    links: frozenset


def extract_phrases(f: Sentence, e: Sentence, alignment: WordAlignment,
                    max_len: int = DEFAULT_MAX_PHRASE_LEN) -> list[PhraseObservation]:
    """All alignment-consistent phrase pairs up to max_len on both sides.

    A pair of spans is consistent when no link crosses the block boundary and
    at least one link falls inside; unaligned target boundary tokens extend
    the target span. Orientation is word-based: monotone when the previous
    alignment point touches the top-left corner, swap at the top-right.
    """
    if max_len < 1:
        raise TranslationModelError("max_len must be >= 1")
    links = sorted(alignment)
    for i, j in links:
        if not (0 <= i < len(f)) or not (0 <= j < len(e)):
            raise TranslationModelError(f"alignment link ({i},{j}) out of bounds")
    if not links:
        return []
    src_linked = [False] * len(f)
    tgt_linked = [False] * len(e)
    for i, j in links:
        src_linked[i] = True
        tgt_linked[j] = True
    link_set = set(links)

    def orientation(i1, i2, j1, j2):
        fwd = DISCONTINUOUS
        if (i1 - 1, j1 - 1) in link_set or (i1 == 0 and j1 == 0):
            fwd = MONOTONE
        elif (i2 + 1, j1 - 1) in link_set:
            fwd = SWAP
        bwd = DISCONTINUOUS
        if (i2 + 1, j2 + 1) in link_set or (i2 == len(f) - 1 and j2 == len(e) - 1):
            bwd = MONOTONE
        elif (i1 - 1, j2 + 1) in link_set:
            bwd = SWAP
        return fwd, bwd

    out = []
    for i1 in range(len(f)):
        for i2 in range(i1, min(len(f), i1 + max_len)):
            # target projection of the source span
            tgt_pos = [j for i, j in links if i1 <= i <= i2]
            if not tgt_pos:
                continue
            j1, j2 = min(tgt_pos), max(tgt_pos)
            # consistency: links inside the target span must stay inside the block
            if any(not (i1 <= i <= i2) for i, j in links if j1 <= j <= j2):
                continue
            # extend over unaligned target boundary tokens
            lo = j1
            while True:
                hi = j2
                while True:
                    if hi - lo < max_len:
                        src_phrase = tuple(f[i1 : i2 + 1])
                        tgt_phrase = tuple(e[lo : hi + 1])
                        fwd, bwd = orientation(i1, i2, lo, hi)
                        internal = frozenset(
                            (i - i1, j - lo) for i, j in links if i1 <= i <= i2 and lo <= j <= hi
                        )
                        out.append(PhraseObservation(src_phrase, tgt_phrase, fwd, bwd, internal))
                    hi += 1
                    if hi >= len(e) or tgt_linked[hi]:
                        break
                lo -= 1
                if lo < 0 or tgt_linked[lo]:
                    break
    return out


@dataclass
class PhraseEntry:
    """One correction rule with translation scores, dense features and counts."""

    src: Sentence
    tgt: Sentence
    p_tgt_src: float
    p_src_tgt: float
    lex_tgt_src: float
    lex_src_tgt: float
    similarity: float = 0.0      # e^(1 - edit rate between the two sides)
    hter_median: float = 0.0     # median edit rate of the segments the rule came from
    hter_stdev: float = 0.0
    pos_impact: float = 0.0      # share of retrieved segments the rule improves
    neg_impact: float = 0.0      # share of retrieved segments the rule damages
    joint_count: int = 1
    src_count: int = 1
    tgt_count: int = 1
    links: frozenset = field(default_factory=frozenset)
    neg_applied: float = 0.0     # post-edited-after-applied ratio (online feedback)
    neg_offered: float = 0.0     # contradicted-while-offered ratio (online feedback)


@dataclass(frozen=True)
class ReorderingEntry:
    """Orientation distributions for one phrase pair, both directions."""

    fwd: tuple[float, float, float]  # monotone, swap, discontinuous
    bwd: tuple[float, float, float]


class ReorderingModel:
    def __init__(self, table: dict, sigma: float = DEFAULT_REORDERING_SMOOTHING):
        self.table = table
        self.sigma = sigma

    def get(self, src: Sentence, tgt: Sentence) -> ReorderingEntry | None:
        return self.table.get((src, tgt))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"sigma\t{self.sigma!r}\n")
            for (src, tgt), entry in sorted(self.table.items()):
                probs = " ".join(f"{p:.6g}" for p in entry.fwd + entry.bwd)
                fh.write(f"{' '.join(src)} ||| {' '.join(tgt)} ||| {probs}\n")

    @classmethod
    def load(cls, path) -> "ReorderingModel":
        table = {}
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split("\t")
            sigma = float(header[1])
            for line in fh:
                src_text, tgt_text, prob_text = line.rstrip("\n").split(" ||| ")
                probs = [float(x) for x in prob_text.split()]
                table[(tuple(src_text.split()), tuple(tgt_text.split()))] = ReorderingEntry(
                    tuple(probs[:3]), tuple(probs[3:])
                )
        return cls(table, sigma)


class PhraseTable:
    """Correction rules indexed by source phrase."""

    def __init__(self, entries: Iterable[PhraseEntry],
                 max_phrase_len: int = DEFAULT_MAX_PHRASE_LEN,
                 tag: str = "monolingual"):
        self.by_src: dict[Sentence, list[PhraseEntry]] = defaultdict(list)
        for entry in entries:
            self.by_src[entry.src].append(entry)
        self.by_src = dict(self.by_src)
        self.max_phrase_len = max_phrase_len
        self.tag = tag

    def __len__(self) -> int:
        return sum(len(v) for v in self.by_src.values())

    def entries(self) -> list[PhraseEntry]:
        out = []
        for src in sorted(self.by_src):
            out.extend(self.by_src[src])
        return out

    def lookup(self, src: Sentence) -> list[PhraseEntry]:
        return self.by_src.get(tuple(src), [])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"max_phrase_len\t{self.max_phrase_len}\ttag\t{self.tag}\n")
            for entry in self.entries():
                floats = " ".join(
                    f"{v:.6g}" for v in (
                        entry.p_tgt_src, entry.p_src_tgt, entry.lex_tgt_src,
                        entry.lex_src_tgt, entry.similarity, entry.hter_median,
                        entry.hter_stdev, entry.pos_impact, entry.neg_impact,
                    )
                )
                fh.write(
                    f"{' '.join(entry.src)} ||| {' '.join(entry.tgt)} ||| {floats} "
                    f"||| {entry.joint_count} {entry.src_count} {entry.tgt_count}\n"
                )

    @classmethod
    def load(cls, path) -> "PhraseTable":
        entries = []
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split("\t")
            max_len = int(header[1])
            tag = header[3]
            for lineno, line in enumerate(fh, start=2):
                parts = line.rstrip("\n").split(" ||| ")
                if len(parts) != 4:
                    raise TranslationModelError(f"{path}: line {lineno}: malformed entry")
                floats = [float(x) for x in parts[2].split()]
                counts = [int(x) for x in parts[3].split()]
                entries.append(PhraseEntry(
                    tuple(parts[0].split()), tuple(parts[1].split()),
                    *floats, *counts,
                ))
        return cls(entries, max_phrase_len=max_len, tag=tag)


def _lexical_weight(tgt: Sentence, src: Sentence, links: frozenset,
                    lexicon: LexiconModel | None) -> float:
    """Product over target words of the averaged lexicon probability of their
    aligned source words; unaligned target words contribute the floor."""
    if lexicon is None:
        return 1.0
    weight = 1.0
    by_tgt = defaultdict(list)
    for i, j in links:
        by_tgt[j].append(i)
    for j, tgt_tok in enumerate(tgt):
        if j in by_tgt:
            probs = [lexicon.prob(tgt_tok, src[i]) for i in by_tgt[j]]
            weight *= sum(probs) / len(probs)
        else:
            weight *= PROB_FLOOR
    return weight


def phrase_similarity(src: Sentence, tgt: Sentence) -> float:
    """e^(1 - edit rate) between the two sides, capped into [1, e]."""
    rate = min(metrics.ter(src, tgt)[0], 1.0)
    return math.exp(1.0 - rate)


def estimate_translation(observations: Sequence[PhraseObservation],
                         lexicon_fwd: LexiconModel | None = None,
                         lexicon_rev: LexiconModel | None = None,
                         max_phrase_len: int = DEFAULT_MAX_PHRASE_LEN,
                         tag: str = "monolingual") -> PhraseTable:
    """Maximum likelihood phrase probabilities from extracted observations.

    Lexical weights use the most frequent phrase-internal alignment (ties
    resolved to the smallest link set, sorted order).
    """
    if not observations:
        raise TranslationModelError("no phrase observations to estimate from")
    joint = Counter()
    src_totals = Counter()
    tgt_totals = Counter()
    link_votes: dict = defaultdict(Counter)
    for obs in observations:
        key = (obs.src, obs.tgt)
        joint[key] += 1
        src_totals[obs.src] += 1
        tgt_totals[obs.tgt] += 1
        link_votes[key][obs.links] += 1
    entries = []
    for (src, tgt), count in joint.items():
        votes = link_votes[(src, tgt)]
        links = min(votes, key=lambda l: (-votes[l], sorted(l)))
        entries.append(PhraseEntry(
            src=src, tgt=tgt,
            p_tgt_src=count / src_totals[src],
            p_src_tgt=count / tgt_totals[tgt],
            lex_tgt_src=_lexical_weight(tgt, src, links, lexicon_fwd),
            lex_src_tgt=_lexical_weight(src, tgt, frozenset((j, i) for i, j in links),
                                        lexicon_rev),
            similarity=phrase_similarity(src, tgt),
            joint_count=count,
            src_count=src_totals[src],
            tgt_count=tgt_totals[tgt],
            links=links,
        ))
    return PhraseTable(entries, max_phrase_len=max_phrase_len, tag=tag)


def estimate_reordering(observations: Sequence[PhraseObservation],
                        sigma: float = DEFAULT_REORDERING_SMOOTHING) -> ReorderingModel:
    """Smoothed orientation distributions: (sigma*prior + count) / (sigma + total)."""
    if sigma <= 0:
        raise TranslationModelError("sigma must be > 0")
    fwd_counts: dict = defaultdict(Counter)
    bwd_counts: dict = defaultdict(Counter)
    fwd_global = Counter()
    bwd_global = Counter()
    for obs in observations:
        key = (obs.src, obs.tgt)
        fwd_counts[key][obs.orient_fwd] += 1
        bwd_counts[key][obs.orient_bwd] += 1
        fwd_global[obs.orient_fwd] += 1
        bwd_global[obs.orient_bwd] += 1

    def smooth(counts: Counter, global_counts: Counter) -> tuple[float, float, float]:
        g_total = sum(global_counts.values())
        total = sum(counts.values())
        probs = []
        for o in ORIENTATIONS:
            prior = global_counts[o] / g_total if g_total else 1.0 / len(ORIENTATIONS)
            probs.append((sigma * prior + counts[o]) / (sigma + total))
        return tuple(probs)

    table = {}
    for key in fwd_counts:
        table[key] = ReorderingEntry(
            smooth(fwd_counts[key], fwd_global), smooth(bwd_counts[key], bwd_global)
        )
    return ReorderingModel(table, sigma)


def _contains(haystack: Sentence, needle: Sentence) -> bool:
    n = len(needle)
    return any(haystack[i : i + n] == needle for i in range(len(haystack) - n + 1))


def _substitute_first(sentence: Sentence, old: Sentence, new: Sentence) -> Sentence:
    n = len(old)
    for i in range(len(sentence) - n + 1):
        if sentence[i : i + n] == old:
            return sentence[:i] + tuple(new) + sentence[i + n :]
    return sentence


_DENSE_STATE: dict = {}


def _dense_init(segments, base_rates):
    _DENSE_STATE["segments"] = segments
    _DENSE_STATE["base_rates"] = base_rates


def _impact_counts(args):
    """pos/neg counts of one rule over its retrieved segments (worker-safe)."""
    src, tgt, retrieved = args
    segments = _DENSE_STATE["segments"]
    base_rates = _DENSE_STATE["base_rates"]
    pos = neg = 0
    for seg_id in retrieved:
        inp, pe, _ = segments[seg_id]
        rate = metrics.edit_rate(_substitute_first(inp, src, tgt), pe)
        if rate < base_rates[seg_id]:
            pos += 1
        elif rate > base_rates[seg_id]:
            neg += 1
    return pos, neg


def compute_dense_features(table: PhraseTable,
                           segments: Sequence[tuple[Sentence, Sentence, float]],
                           jobs: int = 1) -> PhraseTable:
    """Fill reliability and usefulness features from the training segments.

    `segments` holds (input_side, post_edit, input_edit_rate) per training
    segment; an entry's statistics come from every segment whose input side
    contains the entry's source phrase as a contiguous token sequence. The
    usefulness test substitutes the target phrase for the first occurrence and
    compares the edit rate against the unmodified input. `jobs` bounds worker
    parallelism; results are identical for any value.
    """
    segments = [(tuple(inp), tuple(pe), rate) for inp, pe, rate in segments]
    token_index: dict[str, set[int]] = defaultdict(set)
    for seg_id, (inp, _, _) in enumerate(segments):
        for tok in set(inp):
            token_index[tok].add(seg_id)

    def retrieve(src: Sentence) -> list[int]:
        candidates = None
        for tok in set(src):
            ids = token_index.get(tok)
            if ids is None:
                return []
            candidates = ids if candidates is None else candidates & ids
            if not candidates:
                return []
        return sorted(s for s in candidates if _contains(segments[s][0], src))

    entries = table.entries()
    retrieved_by_entry = [retrieve(e.src) for e in entries]
    needed = sorted({s for e, r in zip(entries, retrieved_by_entry)
                     for s in r if e.tgt != e.src})
    base_rates = {s: metrics.edit_rate(segments[s][0], segments[s][1]) for s in needed}

    tasks = [(i, (e.src, e.tgt, retrieved_by_entry[i]))
             for i, e in enumerate(entries)
             if retrieved_by_entry[i] and e.tgt != e.src]
    impacts: dict[int, tuple[int, int]] = {}
    if jobs > 1 and len(tasks) > 1:
        import multiprocessing

        with multiprocessing.get_context("fork").Pool(
                jobs, initializer=_dense_init, initargs=(segments, base_rates)) as pool:
            results = pool.map(_impact_counts, [t[1] for t in tasks], chunksize=64)
        for (idx, _), counts in zip(tasks, results):
            impacts[idx] = counts
    else:
        _dense_init(segments, base_rates)
        for idx, args in tasks:
            impacts[idx] = _impact_counts(args)

    new_entries = []
    for idx, entry in enumerate(entries):
        retrieved = retrieved_by_entry[idx]
        if not retrieved:
            new_entries.append(replace(
                entry, hter_median=0.0, hter_stdev=0.0, pos_impact=0.0, neg_impact=0.0))
            continue
        rates = [segments[s][2] for s in retrieved]
        pos, neg = impacts.get(idx, (0, 0))
        new_entries.append(replace(
            entry,
            hter_median=statistics.median(rates),
            hter_stdev=statistics.pstdev(rates),
            pos_impact=pos / len(retrieved),
            neg_impact=neg / len(retrieved),
        ))
    return PhraseTable(new_entries, max_phrase_len=table.max_phrase_len, tag=table.tag)


def prune(table: PhraseTable, threshold: float) -> PhraseTable:
    """Drop entries whose harm ratio reaches the threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise TranslationModelError("threshold must lie in [0, 1]")
    kept = [e for e in table.entries() if e.neg_impact < threshold]
    return PhraseTable(kept, max_phrase_len=table.max_phrase_len, tag=table.tag)


def merge_counts(a: PhraseTable, b: PhraseTable) -> PhraseTable:
    """Sum counts per (src, tgt) and re-derive probabilities from the merged
    counts. Float features are joint-count-weighted averages."""
    if a.max_phrase_len != b.max_phrase_len:
        raise TranslationModelError("cannot merge tables with different max_phrase_len")
    joint = Counter()
    src_totals = Counter()
    tgt_totals = Counter()
    weighted: dict = {}
    for table in (a, b):
        for entry in table.entries():
            key = (entry.src, entry.tgt)
            joint[key] += entry.joint_count
            src_totals[entry.src] += entry.joint_count
            tgt_totals[entry.tgt] += entry.joint_count
            if key not in weighted:
                weighted[key] = (entry, entry.joint_count)
            else:
                old, w_old = weighted[key]
                w_new = entry.joint_count

                def avg(x, y):
                    return (x * w_old + y * w_new) / (w_old + w_new)

                merged = replace(
                    old,
                    lex_tgt_src=avg(old.lex_tgt_src, entry.lex_tgt_src),
                    lex_src_tgt=avg(old.lex_src_tgt, entry.lex_src_tgt),
                    hter_median=avg(old.hter_median, entry.hter_median),
                    hter_stdev=avg(old.hter_stdev, entry.hter_stdev),
                    pos_impact=avg(old.pos_impact, entry.pos_impact),
                    neg_impact=avg(old.neg_impact, entry.neg_impact),
                )
                weighted[key] = (merged, w_old + w_new)
    entries = []
    for (src, tgt), count in joint.items():
        base, _ = weighted[(src, tgt)]
        entries.append(replace(
            base,
            p_tgt_src=count / src_totals[src],
            p_src_tgt=count / tgt_totals[tgt],
            similarity=phrase_similarity(src, tgt),
            joint_count=count,
            src_count=src_totals[src],
            tgt_count=tgt_totals[tgt],
        ))
    return PhraseTable(entries, max_phrase_len=a.max_phrase_len, tag=a.tag)
