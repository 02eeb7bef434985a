"""Log-linear phrase-based stack decoding with distortion-limited reordering,
multiple competing phrase tables, n-best extraction from the recombined
search graph, and constrained decoding driven by per-token suggestions.

Constrained input uses the markup `<n translation="TGT">TOKEN</n>`; in forced
mode annotated positions may only be covered by synthetic options that emit
exactly the concatenated suggestions, in inclusive mode those options merely
compete with the learned ones.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .align import PROB_FLOOR
from .lm import BOS, EOS, NGramLanguageModel
from .tm import MONOTONE, SWAP, DISCONTINUOUS, PhraseEntry, PhraseTable, ReorderingModel
from .validation import Sentence

FORCED = "forced"
INCLUSIVE = "inclusive"

DEFAULT_BEAM_SIZE = 100
DEFAULT_DISTORTION_LIMIT = 6
DEFAULT_NBEST = 50

_LOG_FLOOR = math.log10(PROB_FLOOR)


class DecoderError(ValueError):
    pass


# -- feature weights --------------------------------------------------------

_CANONICAL_WEIGHTS = {
    "phrase_fwd": 0.30,
    "phrase_rev": 0.20,
    "lex_fwd": 0.20,
    "lex_rev": 0.10,
    "lm": 0.50,
    "lm_global": 0.15,
    "reo_fwd_mono": 0.08,
    "reo_fwd_swap": 0.08,
    "reo_fwd_disc": 0.08,
    "reo_bwd_mono": 0.08,
    "reo_bwd_swap": 0.08,
    "reo_bwd_disc": 0.08,
    "word_penalty": 0.0,
    "phrase_penalty": 0.0,
    "distortion": -0.30,
    "similarity": 0.0,
    "hter_median": 0.0,
    "hter_stdev": 0.0,
    "pos_impact": 0.0,
    "neg_applied": -0.50,
    "neg_offered": -0.50,
}

_BIAS_RE = re.compile(r"^bias_\d+$")


class FeatureWeights:
    """Named log-linear weights; per-table bias weights follow `bias_<k>`."""

    def __init__(self, values: dict[str, float] | None = None):
        self._values = dict(_CANONICAL_WEIGHTS)
        if values:
            for name, value in values.items():
                self[name] = value

    @staticmethod
    def valid_name(name: str) -> bool:
        return name in _CANONICAL_WEIGHTS or bool(_BIAS_RE.match(name))

    def __getitem__(self, name: str) -> float:
        if name in self._values:
            return self._values[name]
        if _BIAS_RE.match(name):
            return 0.0
        raise KeyError(name)

    def __setitem__(self, name: str, value: float):
        if not self.valid_name(name):
            raise DecoderError(f"unknown feature weight {name!r}")
        if not math.isfinite(value):
            raise DecoderError(f"weight {name} must be finite, got {value}")
        self._values[name] = float(value)

    def names(self) -> list[str]:
        return sorted(self._values)

    def copy(self) -> "FeatureWeights":
        return FeatureWeights(dict(self._values))

    def as_dict(self) -> dict[str, float]:
        return dict(self._values)

    def score(self, features: dict[str, float]) -> float:
        return sum(self[name] * value for name, value in features.items())

    def __eq__(self, other) -> bool:
        return isinstance(other, FeatureWeights) and self._values == other._values

    def __repr__(self) -> str:
        return f"FeatureWeights({self._values!r})"

    @staticmethod
    def mean(items: Sequence["FeatureWeights"]) -> "FeatureWeights":
        names = set()
        for w in items:
            names.update(w._values)
        out = {}
        for name in names:
            out[name] = sum(w[name] for w in items) / len(items)
        return FeatureWeights(out)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for name in self.names():
                fh.write(f"{name}={self._values[name]!r}\n")

    @classmethod
    def load(cls, path) -> "FeatureWeights":
        values = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise DecoderError(f"{path}: line {lineno}: expected name=value")
                name, _, raw = line.partition("=")
                name = name.strip()
                if not cls.valid_name(name):
                    raise DecoderError(f"{path}: line {lineno}: unknown weight name {name!r}")
                values[name] = float(raw)
        return cls(values)


# -- annotated input ---------------------------------------------------------

@dataclass(frozen=True)
class AnnotatedInput:
    """Input tokens plus forced target suggestions for some positions."""

    tokens: Sentence
    suggestions: dict[int, Sentence] = field(default_factory=dict)

    def __post_init__(self):
        for pos, sugg in self.suggestions.items():
            if not (0 <= pos < len(self.tokens)):
                raise DecoderError(f"suggestion position {pos} out of bounds")
            if not sugg:
                raise DecoderError(f"suggestion at position {pos} must be non-empty")


_MARKUP_RE = re.compile(r'<n translation="([^"]*)">(.*?)</n>')


def parse_markup(line: str) -> AnnotatedInput:
    """Parse `<n translation="TGT">TOKEN</n>` markup into an annotated input."""
    tokens: list[str] = []
    suggestions: dict[int, Sentence] = {}
    pos = 0
    for m in _MARKUP_RE.finditer(line):
        tokens.extend(line[pos : m.start()].split())
        inner = m.group(2).split()
        if len(inner) != 1:
            raise DecoderError(f"markup tag must wrap exactly one token: {m.group(0)!r}")
        sugg = tuple(m.group(1).split())
        if not sugg:
            raise DecoderError(f"empty translation attribute: {m.group(0)!r}")
        suggestions[len(tokens)] = sugg
        tokens.append(inner[0])
        pos = m.end()
    tokens.extend(line[pos:].split())
    return AnnotatedInput(tuple(tokens), suggestions)


def format_markup(annotated: AnnotatedInput) -> str:
    parts = []
    for i, tok in enumerate(annotated.tokens):
        if i in annotated.suggestions:
            tgt = " ".join(annotated.suggestions[i])
            parts.append(f'<n translation="{tgt}">{tok}</n>')
        else:
            parts.append(tok)
    return " ".join(parts)


# -- search ------------------------------------------------------------------

@dataclass
class SpanOption:
    start: int
    end: int
    target: Sentence
    features: dict[str, float]
    table_id: int | None
    reordering: object | None = None
    entry: PhraseEntry | None = None
    is_constraint: bool = False


@dataclass(frozen=True)
class TraceStep:
    start: int
    end: int
    target: Sentence
    table_id: int | None


@dataclass
class NBestEntry:
    tokens: Sentence
    score: float
    features: dict[str, float]


@dataclass
class DecodeResult:
    tokens: Sentence
    score: float
    features: dict[str, float]
    trace: list[TraceStep]
    nbest: list[NBestEntry]


def _entry_features(entry: PhraseEntry, table_id: int | None) -> dict[str, float]:
    feats = {
        "phrase_fwd": math.log10(max(entry.p_tgt_src, PROB_FLOOR)),
        "phrase_rev": math.log10(max(entry.p_src_tgt, PROB_FLOOR)),
        "lex_fwd": math.log10(max(entry.lex_tgt_src, PROB_FLOOR)),
        "lex_rev": math.log10(max(entry.lex_src_tgt, PROB_FLOOR)),
        "phrase_penalty": 1.0,
        "word_penalty": float(len(entry.tgt)),
        "similarity": entry.similarity,
        "hter_median": entry.hter_median,
        "hter_stdev": entry.hter_stdev,
        "pos_impact": entry.pos_impact,
        "neg_applied": entry.neg_applied,
        "neg_offered": entry.neg_offered,
    }
    if table_id is not None:
        feats[f"bias_{table_id}"] = 1.0
    return feats


def _fallback_features() -> dict[str, float]:
    return {
        "phrase_fwd": _LOG_FLOOR,
        "phrase_rev": _LOG_FLOOR,
        "lex_fwd": _LOG_FLOOR,
        "lex_rev": _LOG_FLOOR,
        "phrase_penalty": 1.0,
        "word_penalty": 1.0,
    }


def _constraint_features(target: Sentence) -> dict[str, float]:
    return {"phrase_penalty": 1.0, "word_penalty": float(len(target))}


def collect_options(
    tokens: Sentence,
    tables: Sequence[PhraseTable],
    reorderings: Sequence[ReorderingModel | None],
    suggestions: dict[int, Sentence] | None = None,
    mode: str = FORCED,
    fallback_surface: Callable[[str], Sentence] | None = None,
) -> list[SpanOption]:
    """Translation options per source span: learned entries from every table,
    identity fallbacks guaranteeing coverage, and constraint options.

    In forced mode, spans touching an annotated position only admit the
    constraint options built from runs of adjacent annotated positions.
    """
    n = len(tokens)
    suggestions = suggestions or {}
    annotated = set(suggestions)
    forced = mode == FORCED and bool(annotated)
    options: list[SpanOption] = []

    for table_id, table in enumerate(tables):
        reo_model = reorderings[table_id] if table_id < len(reorderings) else None
        for start in range(n):
            for end in range(start + 1, min(n, start + table.max_phrase_len) + 1):
                if forced and any(p in annotated for p in range(start, end)):
                    continue
                src = tokens[start:end]
                for entry in table.lookup(src):
                    reo = reo_model.get(entry.src, entry.tgt) if reo_model else None
                    options.append(SpanOption(
                        start, end, entry.tgt, _entry_features(entry, table_id),
                        table_id, reo, entry,
                    ))

    # identity pass-through for tokens with no single-token option in any table
    single_covered = {opt.start for opt in options if opt.end - opt.start == 1}
    for pos, tok in enumerate(tokens):
        if pos in single_covered or (forced and pos in annotated):
            continue
        surface = fallback_surface(tok) if fallback_surface else (tok,)
        options.append(SpanOption(pos, pos + 1, tuple(surface), _fallback_features(), None))

    # constraint options over runs of adjacent annotated positions
    if annotated:
        run: list[int] = []
        runs = []
        for pos in sorted(annotated):
            if run and pos == run[-1] + 1:
                run.append(pos)
            else:
                if run:
                    runs.append(run)
                run = [pos]
        if run:
            runs.append(run)
        for run in runs:
            for a_idx in range(len(run)):
                for b_idx in range(a_idx, len(run)):
                    span = run[a_idx : b_idx + 1]
                    target = tuple(t for pos in span for t in suggestions[pos])
                    options.append(SpanOption(
                        span[0], span[-1] + 1, target,
                        _constraint_features(target), None, is_constraint=True,
                    ))
    return options


class _Node:
    __slots__ = ("coverage", "lm_states", "prev_span", "score", "arcs", "best_arc")

    def __init__(self, coverage, lm_states, prev_span, score, best_arc):
        self.coverage = coverage
        self.lm_states = lm_states
        self.prev_span = prev_span
        self.score = score
        self.best_arc = best_arc  # (prev_node, option, delta, feats) or None
        self.arcs = []


def _future_costs(n: int, options: Sequence[SpanOption], lms, weights: FeatureWeights):
    unigram_cache: dict[str, float] = {}

    def unigram_estimate(target: Sentence) -> float:
        total = 0.0
        for name, lm in lms:
            lam = weights[name]
            for tok in target:
                key = f"{name}\x00{tok}"
                if key not in unigram_cache:
                    unigram_cache[key] = lm.logprob(tok, ())
                total += lam * unigram_cache[key]
        return total

    best_direct = [[-math.inf] * (n + 1) for _ in range(n + 1)]
    for opt in options:
        est = weights.score(opt.features) + unigram_estimate(opt.target)
        if est > best_direct[opt.start][opt.end]:
            best_direct[opt.start][opt.end] = est
    fc = [[-math.inf] * (n + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        fc[i][i] = 0.0
    for length in range(1, n + 1):
        for i in range(0, n - length + 1):
            j = i + length
            best = best_direct[i][j]
            for k in range(i + 1, j):
                cand = fc[i][k] + fc[k][j]
                if cand > best:
                    best = cand
            fc[i][j] = best
    return fc


def _uncovered_future(coverage: int, n: int, fc) -> float:
    total = 0.0
    pos = 0
    while pos < n:
        if coverage >> pos & 1:
            pos += 1
            continue
        start = pos
        while pos < n and not (coverage >> pos & 1):
            pos += 1
        total += fc[start][pos]
    return total


def _orientation(prev_span: tuple[int, int], start: int, end: int) -> str:
    if start == prev_span[1]:
        return MONOTONE
    if end == prev_span[0]:
        return SWAP
    return DISCONTINUOUS


_ORIENT_IDX = {MONOTONE: 0, SWAP: 1, DISCONTINUOUS: 2}
_ORIENT_TAG = {MONOTONE: "mono", SWAP: "swap", DISCONTINUOUS: "disc"}


def decode(
    tokens: Sequence[str],
    tables: PhraseTable | Sequence[PhraseTable],
    lms,
    reorderings=None,
    weights: FeatureWeights | None = None,
    *,
    beam_size: int = DEFAULT_BEAM_SIZE,
    distortion_limit: int = DEFAULT_DISTORTION_LIMIT,
    nbest_size: int = 1,
    suggestions: dict[int, Sentence] | None = None,
    mode: str = FORCED,
    fallback_surface: Callable[[str], Sentence] | None = None,
) -> DecodeResult:
    """Beam search over coverage stacks; returns the best derivation plus an
    n-best list deduplicated on surface strings."""
    if beam_size < 1:
        raise DecoderError("beam size must be >= 1")
    if nbest_size < 1:
        raise DecoderError("nbest size must be >= 1")
    tokens = tuple(tokens)
    if isinstance(tables, PhraseTable):
        tables = [tables]
    if isinstance(lms, NGramLanguageModel):
        lms = [("lm", lms)]
    if reorderings is None:
        reorderings = [None] * len(tables)
    elif isinstance(reorderings, ReorderingModel):
        reorderings = [reorderings]
    weights = weights or FeatureWeights()
    if mode not in (FORCED, INCLUSIVE):
        raise DecoderError(f"unknown constraint mode {mode!r}")

    n = len(tokens)
    if n == 0:
        return DecodeResult((), 0.0, {}, [], [NBestEntry((), 0.0, {})])
    options = collect_options(tokens, tables, reorderings, suggestions, mode,
                              fallback_surface)
    by_start: list[list[SpanOption]] = [[] for _ in range(n)]
    for opt in options:
        by_start[opt.start].append(opt)
    fc = _future_costs(n, options, lms, weights)

    init_states = tuple((BOS,) * (lm.order - 1) for _, lm in lms)
    root = _Node(0, init_states, (0, 0), 0.0, None)
    stacks: list[dict] = [dict() for _ in range(n + 1)]
    stacks[0][(0, init_states, (0, 0))] = root

    full = (1 << n) - 1
    for count in range(n):
        stack = stacks[count]
        if not stack:
            continue
        ranked = sorted(
            stack.values(),
            key=lambda nd: (-(nd.score + _uncovered_future(nd.coverage, n, fc)),
                            nd.coverage, nd.lm_states, nd.prev_span),
        )[:beam_size]
        for node in ranked:
            prev_end = node.prev_span[1]
            for start in range(n):
                if node.coverage >> start & 1:
                    continue
                if abs(start - prev_end) > distortion_limit:
                    continue
                for opt in by_start[start]:
                    span_bits = ((1 << (opt.end - opt.start)) - 1) << opt.start
                    if node.coverage & span_bits:
                        continue
                    feats = dict(opt.features)
                    delta = weights.score(opt.features)
                    # language models
                    new_states = []
                    for (name, lm), state in zip(lms, node.lm_states):
                        lam = weights[name]
                        lm_h = 0.0
                        ctx = state
                        for tok in opt.target:
                            lm_h += lm.logprob(tok, ctx)
                            ctx = (ctx + (tok,))[max(0, len(ctx) + 1 - (lm.order - 1)):] \
                                if lm.order > 1 else ()
                        new_states.append(ctx)
                        if lm_h:
                            feats[name] = feats.get(name, 0.0) + lm_h
                            delta += lam * lm_h
                    # lexicalized reordering, both direction models of the
                    # entered phrase, on the observed orientation
                    orient = _orientation(node.prev_span, opt.start, opt.end)
                    if opt.reordering is not None:
                        idx = _ORIENT_IDX[orient]
                        tag = _ORIENT_TAG[orient]
                        fwd_h = math.log10(max(opt.reordering.fwd[idx], PROB_FLOOR))
                        bwd_h = math.log10(max(opt.reordering.bwd[idx], PROB_FLOOR))
                        feats[f"reo_fwd_{tag}"] = feats.get(f"reo_fwd_{tag}", 0.0) + fwd_h
                        feats[f"reo_bwd_{tag}"] = feats.get(f"reo_bwd_{tag}", 0.0) + bwd_h
                        delta += weights[f"reo_fwd_{tag}"] * fwd_h
                        delta += weights[f"reo_bwd_{tag}"] * bwd_h
                    jump = abs(opt.start - prev_end)
                    if jump:
                        feats["distortion"] = feats.get("distortion", 0.0) + jump
                        delta += weights["distortion"] * jump

                    new_cov = node.coverage | span_bits
                    key = (new_cov, tuple(new_states), (opt.start, opt.end))
                    score = node.score + delta
                    target_stack = stacks[count + (opt.end - opt.start)]
                    existing = target_stack.get(key)
                    arc = (node, opt, delta, feats)
                    if existing is None:
                        child = _Node(new_cov, tuple(new_states), (opt.start, opt.end),
                                      score, arc)
                        child.arcs.append(arc)
                        target_stack[key] = child
                    else:
                        existing.arcs.append(arc)
                        if score > existing.score:
                            existing.score = score
                            existing.best_arc = arc

    completed = stacks[n]
    if not completed:
        raise DecoderError("search space exhausted before full coverage "
                           f"(distortion limit {distortion_limit})")

    # completion: end-of-sentence LM terms; the goal merges all complete nodes
    goal_arcs = []
    for node in completed.values():
        feats: dict[str, float] = {}
        delta = 0.0
        for (name, lm), state in zip(lms, node.lm_states):
            lm_h = lm.logprob(EOS, state)
            feats[name] = feats.get(name, 0.0) + lm_h
            delta += weights[name] * lm_h
        goal_arcs.append((node, None, delta, feats))

    # n-best paths over the recombined graph
    want = max(nbest_size, 1)
    memo: dict[int, list] = {}

    def best_paths(node: _Node, limit: int):
        if node.best_arc is None:
            return [(0.0, ())]
        cached = memo.get(id(node))
        if cached is not None and len(cached) >= limit:
            return cached[:limit]
        merged: list = []
        for arc in node.arcs:
            prev, opt, delta, feats = arc
            for sub_score, sub_path in best_paths(prev, limit):
                merged.append((sub_score + delta, sub_path + (arc,)))
        merged.sort(key=lambda item: -item[0])
        merged = merged[: max(limit, 1)]
        memo[id(node)] = merged
        return merged

    # oversample before surface deduplication
    per_node = want * 2 + 2
    candidates = []
    for node, _, delta, feats in goal_arcs:
        for sub_score, sub_path in best_paths(node, per_node):
            candidates.append((sub_score + delta, sub_path, feats))
    candidates.sort(key=lambda item: -item[0])

    seen_surfaces = set()
    nbest: list[NBestEntry] = []
    best_trace: list[TraceStep] | None = None
    best_feats: dict[str, float] = {}
    for score, path, goal_feats in candidates:
        out: list[str] = []
        feats = dict(goal_feats)
        trace = []
        for _, opt, _, arc_feats in path:
            out.extend(opt.target)
            trace.append(TraceStep(opt.start, opt.end, opt.target, opt.table_id))
            for name, value in arc_feats.items():
                feats[name] = feats.get(name, 0.0) + value
        surface = tuple(out)
        if surface in seen_surfaces:
            continue
        seen_surfaces.add(surface)
        if best_trace is None:
            best_trace = trace
            best_feats = feats
        nbest.append(NBestEntry(surface, score, feats))
        if len(nbest) >= want:
            break

    best = nbest[0]
    return DecodeResult(best.tokens, best.score, best_feats, best_trace or [], nbest)


def decode_constrained(annotated: AnnotatedInput, tables, lms, reorderings=None,
                       weights=None, mode: str = FORCED, **kwargs) -> DecodeResult:
    """Decode an annotated input; see module docstring for the two modes."""
    return decode(annotated.tokens, tables, lms, reorderings, weights,
                  suggestions=annotated.suggestions, mode=mode, **kwargs)


def format_nbest(segment_id: int, result: DecodeResult) -> str:
    """n-best listing: `id ||| hypothesis ||| per-feature scores ||| total`."""
    lines = []
    for entry in result.nbest:
        feats = " ".join(f"{k}={entry.features[k]:.6g}" for k in sorted(entry.features))
        lines.append(f"{segment_id} ||| {' '.join(entry.tokens)} ||| {feats} ||| "
                     f"{entry.score:.6g}")
    return "\n".join(lines)
