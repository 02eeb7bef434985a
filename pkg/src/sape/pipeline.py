"""End-to-end estimators: a batch post-editor with the familiar fit/predict
surface and an online post-editor wrapping the sequential learning loop.

The batch estimator learns correction rules from (source, MT, post-edit)
triplets and applies them to new MT output. Three variants are supported:
`monolingual` learns from (mt, pe) pairs alone, `context-aware` learns from
MT tokens annotated with their aligned source tokens, and `combined` decodes
with both rule tables competing.
"""

from __future__ import annotations

from typing import Sequence

from sklearn.base import BaseEstimator

from . import corpus, metrics, optimize, tm
from .align import WordAligner, ibm1_train, symmetrize, viterbi_align
from .corpus import Triplet, augment_identity, build_joint, joint_surface
from .decoder import (DEFAULT_BEAM_SIZE, DEFAULT_DISTORTION_LIMIT, DEFAULT_NBEST,
                      AnnotatedInput, DecodeResult, FeatureWeights, decode)
from .lm import KNESER_NEY, NGramLanguageModel
from .online import OnlineEngine, StepResult
from .validation import Sentence, as_corpus, as_sentence, check_equal_lengths, check_in

MONOLINGUAL = "monolingual"
CONTEXT_AWARE = "context-aware"
COMBINED = "combined"
VARIANTS = (MONOLINGUAL, CONTEXT_AWARE, COMBINED)


def _as_triplets(X, y=None) -> list[Triplet]:
    """Accept triplets, (src, mt) pairs with y=pe, or mt sentences with y=pe."""
    if y is None:
        out = []
        for i, item in enumerate(X):
            if isinstance(item, Triplet):
                out.append(item)
            else:
                src, mt, pe = item
                out.append(Triplet(as_sentence(src), as_sentence(mt),
                                   as_sentence(pe), i))
        return out
    X = list(X)
    y = as_corpus(y, allow_empty=False)
    check_equal_lengths(X=X, y=y)
    out = []
    for i, (item, pe) in enumerate(zip(X, y)):
        if isinstance(item, (str,)) or (item and isinstance(item[0], str)):
            mt = as_sentence(item, allow_empty=False)
            src = mt
        else:
            src, mt = item
            src = as_sentence(src, allow_empty=False)
            mt = as_sentence(mt, allow_empty=False)
        out.append(Triplet(src, mt, pe, i))
    return out


class _StrippedSourceView:
    """Presents a plain-token table under a joint-token input: lookups strip
    the source annotations before consulting the wrapped table."""

    def __init__(self, table: tm.PhraseTable):
        self._table = table
        self.max_phrase_len = table.max_phrase_len
        self.tag = table.tag

    def lookup(self, src: Sentence):
        return self._table.lookup(tuple(joint_surface(tok) for tok in src))


class ApePostEditor(BaseEstimator):
    """Statistical automatic post-editor with a fit/tune/predict lifecycle.

    fit() trains word alignment, the phrase and reordering tables, the target
    language model and the task-specific dense features; tune() optimizes the
    log-linear weights on a development set; predict() decodes new segments.
    """

    def __init__(self, variant: str = MONOLINGUAL, lm_order: int = 5,
                 lm_smoothing: str = KNESER_NEY,
                 max_phrase_len: int = tm.DEFAULT_MAX_PHRASE_LEN,
                 align_iterations: int = 5,
                 reordering_sigma: float = tm.DEFAULT_REORDERING_SMOOTHING,
                 beam_size: int = DEFAULT_BEAM_SIZE,
                 distortion_limit: int = DEFAULT_DISTORTION_LIMIT,
                 nbest_size: int = DEFAULT_NBEST,
                 prune_threshold: float | None = None,
                 augment: bool = False,
                 dense_features: bool = True,
                 jobs: int = 1,
                 seed: int = 0):
        self.variant = variant
        self.lm_order = lm_order
        self.lm_smoothing = lm_smoothing
        self.max_phrase_len = max_phrase_len
        self.align_iterations = align_iterations
        self.reordering_sigma = reordering_sigma
        self.beam_size = beam_size
        self.distortion_limit = distortion_limit
        self.nbest_size = nbest_size
        self.prune_threshold = prune_threshold
        self.augment = augment
        self.dense_features = dense_features
        self.jobs = jobs
        self.seed = seed

    # -- training ----------------------------------------------------------

    def _train_side(self, pairs: list[tuple[Sentence, Sentence]],
                    hters: list[float], tag: str):
        """One rule table from (input, pe) pairs: EM lexicons, symmetrized
        alignment, extraction, estimation, dense features, pruning."""
        lex_fwd = ibm1_train(pairs, self.align_iterations)
        lex_rev = ibm1_train([(pe, inp) for inp, pe in pairs], self.align_iterations)
        observations = []
        for inp, pe in pairs:
            fwd = viterbi_align(lex_fwd, inp, pe)
            rev = frozenset((i, j) for j, i in viterbi_align(lex_rev, pe, inp))
            alignment = symmetrize(fwd, rev)
            observations.extend(tm.extract_phrases(inp, pe, alignment,
                                                   self.max_phrase_len))
        table = tm.estimate_translation(observations, lex_fwd, lex_rev,
                                        max_phrase_len=self.max_phrase_len, tag=tag)
        reordering = tm.estimate_reordering(observations, self.reordering_sigma)
        if self.dense_features:
            segments = [(inp, pe, h) for (inp, pe), h in zip(pairs, hters)]
            table = tm.compute_dense_features(table, segments, jobs=self.jobs)
        if self.prune_threshold is not None:
            table = tm.prune(table, self.prune_threshold)
        return table, reordering, lex_fwd, lex_rev

    def fit(self, X, y=None):
        check_in(self.variant, VARIANTS, "variant")
        triplets = _as_triplets(X, y)
        if not triplets:
            raise ValueError("training corpus must be non-empty")
        self.tables_ = []
        self.reorderings_ = []
        hter_raw = [metrics.hter(t.mt, t.pe) for t in triplets]

        if self.variant in (CONTEXT_AWARE, COMBINED):
            self.src_mt_aligner_ = WordAligner(self.align_iterations)
            self.src_mt_aligner_.fit([t.src for t in triplets],
                                     [t.mt for t in triplets])
            joints = [self._joint_tokens(t.src, t.mt) for t in triplets]

        if self.variant in (MONOLINGUAL, COMBINED):
            pairs = [(t.mt, t.pe) for t in triplets]
            hters = list(hter_raw)
            if self.augment:
                pairs = augment_identity(pairs)
                hters = hters + [0.0] * len(triplets)
            table, reo, lex_fwd, lex_rev = self._train_side(pairs, hters, MONOLINGUAL)
            self.tables_.append(table)
            self.reorderings_.append(reo)
            self.lexicon_fwd_, self.lexicon_rev_ = lex_fwd, lex_rev

        if self.variant in (CONTEXT_AWARE, COMBINED):
            pairs = [(joint, t.pe) for joint, t in zip(joints, triplets)]
            hters = list(hter_raw)
            if self.augment:
                pairs = augment_identity(pairs)
                hters = hters + [0.0] * len(triplets)
            table, reo, lex_fwd, lex_rev = self._train_side(pairs, hters, CONTEXT_AWARE)
            self.tables_.append(table)
            self.reorderings_.append(reo)
            if self.variant == CONTEXT_AWARE:
                self.lexicon_fwd_, self.lexicon_rev_ = lex_fwd, lex_rev

        self.lm_ = NGramLanguageModel(order=self.lm_order,
                                      smoothing=self.lm_smoothing)
        self.lm_.fit([t.pe for t in triplets])
        self.weights_ = FeatureWeights()
        return self

    def _joint_tokens(self, src: Sentence, mt: Sentence) -> Sentence:
        alignment = self.src_mt_aligner_.align(src, mt)
        return build_joint(src, mt, alignment).tokens()

    # -- decoding ----------------------------------------------------------

    def _decode_setup(self):
        if self.variant == MONOLINGUAL:
            return list(self.tables_), list(self.reorderings_), None
        if self.variant == CONTEXT_AWARE:
            return list(self.tables_), list(self.reorderings_), joint_surface
        tables = [_StrippedSourceView(self.tables_[0]), self.tables_[1]]
        return tables, list(self.reorderings_), joint_surface

    def prepare_input(self, src: Sentence | None, mt: Sentence) -> Sentence:
        """Decoder input for one segment: raw MT tokens, or annotated joint
        tokens for the source-aware variants."""
        mt = as_sentence(mt, allow_empty=False)
        if self.variant == MONOLINGUAL:
            return mt
        if src is None:
            raise ValueError(f"variant {self.variant!r} needs the source sentence")
        return self._joint_tokens(as_sentence(src, allow_empty=False), mt)

    def decode_segment(self, src: Sentence | None, mt: Sentence,
                       suggestions: dict[int, Sentence] | None = None,
                       mode: str = "forced",
                       weights: FeatureWeights | None = None,
                       nbest_size: int | None = None) -> DecodeResult:
        tokens = self.prepare_input(src, mt)
        tables, reorderings, fallback = self._decode_setup()
        return decode(
            tokens, tables, self.lm_, reorderings,
            weights or self.weights_,
            beam_size=self.beam_size,
            distortion_limit=self.distortion_limit,
            nbest_size=nbest_size or 1,
            suggestions=suggestions,
            mode=mode,
            fallback_surface=fallback,
        )

    def predict(self, X) -> list[Sentence]:
        """Correct a corpus: X holds triplets, (src, mt) pairs, or bare MT
        sentences (monolingual variant only)."""
        out = []
        for item in X:
            src, mt = self._split_item(item)
            out.append(self.decode_segment(src, mt).tokens)
        return out

    def _split_item(self, item):
        if isinstance(item, Triplet):
            return item.src, item.mt
        if isinstance(item, str) or (item and isinstance(item[0], str)):
            return None, as_sentence(item, allow_empty=False)
        src, mt = item
        return as_sentence(src, allow_empty=False), as_sentence(mt, allow_empty=False)

    # -- tuning and scoring --------------------------------------------------

    def tune(self, X, y=None, objective: str = optimize.TER, cycles: int = 2,
             restarts: int = 2) -> "ApePostEditor":
        """Optimize the log-linear weights on a development set."""
        triplets = _as_triplets(X, y)
        dev = [(self.prepare_input(t.src, t.mt), t.pe) for t in triplets]
        tables, reorderings, fallback = self._decode_setup()

        def decode_nbest(weights, tokens):
            result = decode(tokens, tables, self.lm_, reorderings, weights,
                            beam_size=self.beam_size,
                            distortion_limit=self.distortion_limit,
                            nbest_size=self.nbest_size,
                            fallback_surface=fallback)
            return [(e.tokens, e.features) for e in result.nbest]

        self.weights_, self.tune_run_ = optimize.tune(
            dev, decode_nbest, self.weights_, objective=objective,
            cycles=cycles, seed=self.seed)
        return self

    def score(self, X, y=None) -> float:
        """Negative corpus edit rate of the corrections (higher is better)."""
        triplets = _as_triplets(X, y)
        hyps = self.predict(triplets)
        return -metrics.corpus_ter(hyps, [t.pe for t in triplets])


class OnlineApePostEditor(BaseEstimator):
    """Online post-editor: each segment is corrected with models built
    on-the-fly from the most similar processed segments, then the human
    post-edit is folded back in."""

    def __init__(self, cutoff: float = 0.8,
                 max_phrase_len: int = tm.DEFAULT_MAX_PHRASE_LEN,
                 local_lm_order: int = 3, global_lm_order: int = 3,
                 beam_size: int = 20,
                 distortion_limit: int = DEFAULT_DISTORTION_LIMIT,
                 min_tune_instances: int = 25,
                 query: str = "mt",
                 seed: int = 0):
        self.cutoff = cutoff
        self.max_phrase_len = max_phrase_len
        self.local_lm_order = local_lm_order
        self.global_lm_order = global_lm_order
        self.beam_size = beam_size
        self.distortion_limit = distortion_limit
        self.min_tune_instances = min_tune_instances
        self.query = query
        self.seed = seed

    def fit(self, X=None, y=None):
        """Reset the engine; an optional corpus is replayed as a warm start."""
        self.engine_ = OnlineEngine(
            cutoff=self.cutoff, max_phrase_len=self.max_phrase_len,
            local_lm_order=self.local_lm_order,
            global_lm_order=self.global_lm_order, beam_size=self.beam_size,
            distortion_limit=self.distortion_limit,
            min_tune_instances=self.min_tune_instances, query=self.query,
            seed=self.seed)
        if X is not None:
            for t in _as_triplets(X, y):
                self.engine_.step(t.src, t.mt)
                self.engine_.feedback(t.pe)
        return self

    def _require_engine(self) -> OnlineEngine:
        if not hasattr(self, "engine_"):
            self.fit()
        return self.engine_

    def step(self, src, mt) -> StepResult:
        return self._require_engine().step(as_sentence(src), as_sentence(mt, allow_empty=False))

    def feedback(self, pe) -> None:
        self._require_engine().feedback(as_sentence(pe, allow_empty=False))

    def process(self, X, y=None) -> list[StepResult]:
        """Run the full step/feedback cycle over an ordered stream."""
        results = []
        for t in _as_triplets(X, y):
            results.append(self.step(t.src, t.mt))
            self.feedback(t.pe)
        return results

    def predict(self, X, y=None) -> list[Sentence]:
        return [r.tokens for r in self.process(X, y)]
