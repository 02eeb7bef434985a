"""Online post-editing: tf-idf instance selection over the processed history,
on-the-fly local model construction, parallel split tuning with weight
averaging, a dynamic knowledge base with global correction-option statistics,
and negative feedback from the post-editor's behavior.

The loop is strictly sequential per segment: step(src, mt) produces the
corrected output, feedback(pe) must follow before the next step.
"""

from __future__ import annotations

import math
import random
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Sequence

from . import optimize, tm
from .align import PROB_FLOOR, LexiconModel, levenshtein_align
from .corpus import Triplet
from .decoder import DEFAULT_DISTORTION_LIMIT, FeatureWeights, decode
from .lm import KNESER_NEY, NGramLanguageModel
from .tm import (DEFAULT_MAX_PHRASE_LEN, DEFAULT_REORDERING_SMOOTHING, ORIENTATIONS,
                 PhraseEntry, PhraseTable, ReorderingEntry, ReorderingModel,
                 phrase_similarity)
from .validation import Sentence

DEFAULT_CUTOFF = 0.8
MIN_TUNE_INSTANCES = 25
TUNE_SPLITS = 3
DEV_FRACTION = 0.2

QUERY_MT = "mt"
QUERY_MT_AND_SRC = "mt+src"


class OnlineError(RuntimeError):
    pass


class SimilarityIndex:
    """Inverted index over processed segments with tf-idf cosine scoring.

    tf is the raw term count; idf(t) = ln((1 + D) / (1 + df(t))) + 1 with D
    the number of stored documents.
    """

    def __init__(self):
        self.docs: dict[int, tuple[Counter, Triplet]] = {}
        self.postings: dict[str, dict[int, int]] = defaultdict(dict)

    def __len__(self) -> int:
        return len(self.docs)

    def add(self, doc_id: int, tokens: Sequence[str], payload: Triplet):
        if doc_id in self.docs:
            raise OnlineError(f"document {doc_id} already indexed")
        counts = Counter(tokens)
        self.docs[doc_id] = (counts, payload)
        for tok, tf in counts.items():
            self.postings[tok][doc_id] = tf

    def remove(self, doc_id: int):
        counts, _ = self.docs.pop(doc_id)
        for tok in counts:
            del self.postings[tok][doc_id]
            if not self.postings[tok]:
                del self.postings[tok]

    def _idf(self, token: str) -> float:
        df = len(self.postings.get(token, ()))
        return math.log((1 + len(self.docs)) / (1 + df)) + 1.0

    def search(self, query: Sequence[str], cutoff: float = 0.0):
        """(payload, similarity) of documents scoring >= cutoff, descending;
        ties ranked by smaller document id."""
        q_counts = Counter(query)
        if not q_counts or not self.docs:
            return []
        idf = {tok: self._idf(tok) for tok in q_counts}
        q_weights = {tok: tf * idf[tok] for tok, tf in q_counts.items()}
        q_norm = math.sqrt(sum(w * w for w in q_weights.values()))
        scores: dict[int, float] = defaultdict(float)
        for tok, wq in q_weights.items():
            for doc_id, tf in self.postings.get(tok, {}).items():
                scores[doc_id] += wq * tf * idf[tok]
        results = []
        for doc_id, dot in scores.items():
            counts, payload = self.docs[doc_id]
            d_norm = math.sqrt(sum((tf * self._idf(tok)) ** 2
                                   for tok, tf in counts.items()))
            sim = dot / (q_norm * d_norm) if q_norm and d_norm else 0.0
            if sim >= cutoff:
                results.append((doc_id, sim, payload))
        results.sort(key=lambda item: (-item[1], item[0]))
        return [(payload, sim) for _, sim, payload in results]


@dataclass
class KBCell:
    """Global statistics of one correction option."""

    joint_count: int = 0
    orient_fwd: Counter = field(default_factory=Counter)
    orient_bwd: Counter = field(default_factory=Counter)
    links: frozenset = frozenset()
    applied_count: int = 0
    post_edited_count: int = 0   # applied but then changed by the post-editor
    offered_count: int = 0
    absent_count: int = 0        # offered and contradicted by the post-edit

    @property
    def rejection_rate(self) -> float:
        return self.post_edited_count / self.applied_count if self.applied_count else 0.0

    @property
    def contradiction_rate(self) -> float:
        return self.absent_count / self.offered_count if self.offered_count else 0.0


class DynamicKB:
    """Continuously updated store of every observed correction option, with
    counts good enough to re-derive translation and reordering scores on
    demand."""

    def __init__(self, max_phrase_len: int = DEFAULT_MAX_PHRASE_LEN,
                 sigma: float = DEFAULT_REORDERING_SMOOTHING):
        self.max_phrase_len = max_phrase_len
        self.sigma = sigma
        self.cells: dict[tuple[Sentence, Sentence], KBCell] = {}
        self.src_totals: Counter = Counter()
        self.tgt_totals: Counter = Counter()
        self.by_src: dict[Sentence, set] = defaultdict(set)
        self.orient_fwd_global: Counter = Counter()
        self.orient_bwd_global: Counter = Counter()
        self.lex_counts: dict[str, Counter] = defaultdict(Counter)
        self.lex_src_totals: Counter = Counter()
        self.lex_rev_counts: dict[str, Counter] = defaultdict(Counter)
        self.lex_tgt_totals: Counter = Counter()

    def cell(self, src: Sentence, tgt: Sentence) -> KBCell:
        key = (tuple(src), tuple(tgt))
        found = self.cells.get(key)
        if found is None:
            found = self.cells[key] = KBCell()
            self.by_src[key[0]].add(key[1])
        return found

    def update(self, mt: Sentence, pe: Sentence):
        """Align the pair, split it into phrases, fold the counts in."""
        links, _, _ = levenshtein_align(mt, pe)
        for i, j in links:
            self.lex_counts[mt[i]][pe[j]] += 1
            self.lex_src_totals[mt[i]] += 1
            self.lex_rev_counts[pe[j]][mt[i]] += 1
            self.lex_tgt_totals[pe[j]] += 1
        for obs in tm.extract_phrases(mt, pe, links, self.max_phrase_len):
            cell = self.cell(obs.src, obs.tgt)
            if cell.joint_count == 0:
                cell.links = obs.links
            cell.joint_count += 1
            cell.orient_fwd[obs.orient_fwd] += 1
            cell.orient_bwd[obs.orient_bwd] += 1
            self.src_totals[obs.src] += 1
            self.tgt_totals[obs.tgt] += 1
            self.orient_fwd_global[obs.orient_fwd] += 1
            self.orient_bwd_global[obs.orient_bwd] += 1

    def _lex_weight(self, tgt: Sentence, src: Sentence, links, counts, totals) -> float:
        by_tgt = defaultdict(list)
        for i, j in links:
            by_tgt[j].append(i)
        weight = 1.0
        for j, tok in enumerate(tgt):
            if j in by_tgt:
                probs = []
                for i in by_tgt[j]:
                    total = totals.get(src[i], 0)
                    p = counts[src[i]][tok] / total if total else 0.0
                    probs.append(max(p, PROB_FLOOR))
                weight *= sum(probs) / len(probs)
            else:
                weight *= PROB_FLOOR
        return weight

    def _smooth(self, counts: Counter, global_counts: Counter):
        g_total = sum(global_counts.values())
        total = sum(counts.values())
        probs = []
        for o in ORIENTATIONS:
            prior = global_counts[o] / g_total if g_total else 1.0 / len(ORIENTATIONS)
            probs.append((self.sigma * prior + counts[o]) / (self.sigma + total))
        return tuple(probs)

    def query(self, src_phrases: Sequence[Sentence]):
        """Phrase table fragment plus reordering model for the requested
        source phrases, scored from the global counts."""
        entries = []
        reo_table = {}
        for src in src_phrases:
            src = tuple(src)
            for tgt in sorted(self.by_src.get(src, ())):
                cell = self.cells[(src, tgt)]
                if cell.joint_count == 0:
                    continue
                rev_links = frozenset((j, i) for i, j in cell.links)
                entries.append(PhraseEntry(
                    src=src, tgt=tgt,
                    p_tgt_src=cell.joint_count / self.src_totals[src],
                    p_src_tgt=cell.joint_count / self.tgt_totals[tgt],
                    lex_tgt_src=self._lex_weight(tgt, src, cell.links,
                                                 self.lex_counts, self.lex_src_totals),
                    lex_src_tgt=self._lex_weight(src, tgt, rev_links,
                                                 self.lex_rev_counts, self.lex_tgt_totals),
                    similarity=phrase_similarity(src, tgt),
                    joint_count=cell.joint_count,
                    src_count=self.src_totals[src],
                    tgt_count=self.tgt_totals[tgt],
                    links=cell.links,
                    neg_applied=cell.rejection_rate,
                    neg_offered=cell.contradiction_rate,
                ))
                reo_table[(src, tgt)] = ReorderingEntry(
                    self._smooth(cell.orient_fwd, self.orient_fwd_global),
                    self._smooth(cell.orient_bwd, self.orient_bwd_global),
                )
        table = PhraseTable(entries, max_phrase_len=self.max_phrase_len, tag="dynamic")
        return table, ReorderingModel(reo_table, self.sigma)

    def record_applied(self, src: Sentence, tgt: Sentence, kept_in_pe: bool):
        cell = self.cell(src, tgt)
        cell.applied_count += 1
        if not kept_in_pe:
            cell.post_edited_count += 1

    def record_offered(self, src: Sentence, tgt: Sentence, present_in_pe: bool):
        cell = self.cell(src, tgt)
        cell.offered_count += 1
        if not present_in_pe:
            cell.absent_count += 1


def _contains(haystack: Sentence, needle: Sentence) -> bool:
    n = len(needle)
    return any(tuple(haystack[i : i + n]) == tuple(needle)
               for i in range(len(haystack) - n + 1))


def build_local_models(instances: Sequence[tuple[Triplet, float]],
                       max_phrase_len: int = DEFAULT_MAX_PHRASE_LEN,
                       lm_order: int = 3,
                       sigma: float = DEFAULT_REORDERING_SMOOTHING):
    """Segment-specific models from the selected instances: edit-distance
    alignment, phrase extraction/estimation, and a local language model over
    the post-edits."""
    if not instances:
        raise OnlineError("cannot build local models from zero instances")
    observations = []
    lex_fwd: dict[str, dict[str, float]] = defaultdict(Counter)
    lex_rev: dict[str, dict[str, float]] = defaultdict(Counter)
    pe_corpus = []
    for triplet, _sim in instances:
        links, _, _ = levenshtein_align(triplet.mt, triplet.pe)
        observations.extend(tm.extract_phrases(triplet.mt, triplet.pe, links,
                                               max_phrase_len))
        for i, j in links:
            lex_fwd[triplet.mt[i]][triplet.pe[j]] += 1
            lex_rev[triplet.pe[j]][triplet.mt[i]] += 1
        pe_corpus.append(triplet.pe)

    def normalize(counts):
        table = {}
        for src, row in counts.items():
            total = sum(row.values())
            table[src] = {tgt: c / total for tgt, c in row.items()}
        return LexiconModel(table)

    lexicon_fwd = normalize(lex_fwd)
    lexicon_rev = normalize(lex_rev)
    table = tm.estimate_translation(observations, lexicon_fwd, lexicon_rev,
                                    max_phrase_len=max_phrase_len)
    reordering = tm.estimate_reordering(observations, sigma)
    local_lm = NGramLanguageModel(order=lm_order, smoothing=KNESER_NEY).fit(pe_corpus)
    return table, reordering, local_lm


def online_tune(instances, decode_nbest_factory, previous: FeatureWeights,
                seed: int, min_instances: int = MIN_TUNE_INSTANCES,
                splits: int = TUNE_SPLITS, cycles: int = 1) -> tuple[FeatureWeights, bool]:
    """Average the tuned weights of several random train/dev splits.

    Below `min_instances` tuning is skipped and the previous weights returned.
    """
    if len(instances) < min_instances:
        return previous, False
    rng = random.Random(seed)
    tuned = []
    for split_no in range(splits):
        shuffled = list(instances)
        rng.shuffle(shuffled)
        dev_size = max(5, int(len(shuffled) * DEV_FRACTION))
        dev_part = shuffled[:dev_size]
        train_part = shuffled[dev_size:]
        if not train_part:
            train_part = dev_part
        decode_nbest = decode_nbest_factory(train_part)
        dev_pairs = [(t.mt, t.pe) for t, _ in dev_part]
        weights, _ = optimize.tune(dev_pairs, decode_nbest, previous,
                                   objective=optimize.TER, cycles=cycles,
                                   restarts=1, seed=rng.randrange(1 << 30))
        tuned.append(weights)
    return FeatureWeights.mean(tuned), True


@dataclass
class StepResult:
    segment_id: int
    tokens: Sentence
    trace: list
    selected_count: int
    top_similarity: float
    tuned: bool
    cycle_seconds: float
    offered: list = field(default_factory=list)

    def log_line(self) -> str:
        return (f"{self.segment_id}\t{self.selected_count}\t"
                f"{self.top_similarity:.4f}\t{str(self.tuned).lower()}\t"
                f"{self.cycle_seconds:.4f}")


class OnlineEngine:
    """Sequential online loop holding the mutable state: similarity index,
    dynamic knowledge base, global language model, and current weights."""

    def __init__(self, cutoff: float = DEFAULT_CUTOFF,
                 max_phrase_len: int = DEFAULT_MAX_PHRASE_LEN,
                 local_lm_order: int = 3, global_lm_order: int = 3,
                 beam_size: int = 20,
                 distortion_limit: int = DEFAULT_DISTORTION_LIMIT,
                 min_tune_instances: int = MIN_TUNE_INSTANCES,
                 tune_nbest: int = 10,
                 query: str = QUERY_MT,
                 seed: int = 0,
                 weights: FeatureWeights | None = None):
        if not 0.0 <= cutoff <= 1.0:
            raise OnlineError("cutoff must lie in [0, 1]")
        if query not in (QUERY_MT, QUERY_MT_AND_SRC):
            raise OnlineError(f"unknown query representation {query!r}")
        self.cutoff = cutoff
        self.max_phrase_len = max_phrase_len
        self.local_lm_order = local_lm_order
        self.beam_size = beam_size
        self.distortion_limit = distortion_limit
        self.min_tune_instances = min_tune_instances
        self.tune_nbest = tune_nbest
        self.query = query
        self.seed = seed
        self.index = SimilarityIndex()
        self.kb = DynamicKB(max_phrase_len)
        self.global_lm = NGramLanguageModel(order=global_lm_order,
                                            smoothing=KNESER_NEY).fit([])
        self.weights = (weights or FeatureWeights()).copy()
        self.segment_count = 0
        self._pending = None

    def _query_tokens(self, src: Sentence, mt: Sentence) -> Sentence:
        if self.query == QUERY_MT_AND_SRC:
            return tuple(mt) + tuple(src)
        return tuple(mt)

    def _decode(self, mt: Sentence, tables, reorderings, local_lm, weights,
                nbest_size=1):
        return decode(
            mt, tables, [("lm", local_lm), ("lm_global", self.global_lm)],
            reorderings, weights, beam_size=self.beam_size,
            distortion_limit=self.distortion_limit, nbest_size=nbest_size,
        )

    def step(self, src, mt) -> StepResult:
        """Correct one segment; feedback(pe) must be called before the next."""
        if self._pending is not None:
            raise OnlineError("feedback missing for the previous segment")
        t0 = time.perf_counter()
        src = tuple(src)
        mt = tuple(mt)
        seg_id = self.segment_count
        instances = self.index.search(self._query_tokens(src, mt), self.cutoff)
        top_sim = instances[0][1] if instances else 0.0
        if not instances:
            result = StepResult(seg_id, mt, [], 0, top_sim, False,
                                time.perf_counter() - t0)
            self._pending = (src, mt, result)
            return result

        local_table, local_reo, local_lm = build_local_models(
            instances, self.max_phrase_len, self.local_lm_order)
        src_phrases = [mt[i:j] for i in range(len(mt))
                       for j in range(i + 1, min(len(mt), i + self.max_phrase_len) + 1)]
        kb_table, kb_reo = self.kb.query(src_phrases)
        tables = [local_table, kb_table]
        reorderings = [local_reo, kb_reo]

        def decode_nbest_factory(train_part):
            try:
                t_table, t_reo, t_lm = build_local_models(
                    train_part, self.max_phrase_len, self.local_lm_order)
            except OnlineError:
                t_table, t_reo, t_lm = local_table, local_reo, local_lm

            def decode_nbest(weights, inp):
                res = self._decode(inp, [t_table, kb_table], [t_reo, kb_reo],
                                   t_lm, weights, nbest_size=self.tune_nbest)
                return [(e.tokens, e.features) for e in res.nbest]

            return decode_nbest

        self.weights, tuned = online_tune(
            instances, decode_nbest_factory, self.weights,
            seed=self.seed + seg_id, min_instances=self.min_tune_instances)

        res = self._decode(mt, tables, reorderings, local_lm, self.weights)
        offered = sorted(
            {(e.src, e.tgt) for e in local_table.entries()} |
            {(e.src, e.tgt) for e in kb_table.entries()}
        )
        result = StepResult(seg_id, res.tokens, res.trace, len(instances),
                            top_sim, tuned, time.perf_counter() - t0, offered)
        self._pending = (src, mt, result)
        return result

    def feedback(self, pe) -> None:
        """Fold the post-edit back into every model, in order."""
        if self._pending is None:
            raise OnlineError("feedback without a preceding step")
        src, mt, result = self._pending
        pe = tuple(pe)
        seg_id = result.segment_id

        # negative feedback first: applied rules, then offered options
        for step_ in result.trace:
            if step_.table_id is None:
                continue  # identity fallback, not a learned correction
            src_phrase = mt[step_.start : step_.end]
            self.kb.record_applied(src_phrase, step_.target,
                                   _contains(pe, step_.target))
        for src_phrase, tgt_phrase in result.offered:
            self.kb.record_offered(src_phrase, tgt_phrase, _contains(pe, tgt_phrase))

        self.index.add(seg_id, self._query_tokens(src, mt), Triplet(src or ("-",), mt, pe, seg_id))
        self.kb.update(mt, pe)
        self.global_lm.update(pe)
        self.segment_count += 1
        self._pending = None
