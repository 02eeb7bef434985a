"""N-gram language models with add-one or interpolated Kneser-Ney smoothing,
incremental count updates, and a plain-text serialization.

Sentences are padded with boundary markers; unknown words map to a reserved
token that always receives probability mass, so scores are never -inf.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator

from .validation import Sentence

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

ADD_ONE = "add1"
KNESER_NEY = "kneser-ney"


class LanguageModelError(ValueError):
    pass


class NGramLanguageModel(BaseEstimator):
    """Count-based n-gram model.

    Kneser-Ney uses one discount D = n1/(n1 + 2*n2) from the bigram
    count-of-counts, raw counts at the top order, continuation counts below,
    and a uniform bottom layer so unknown events keep nonzero mass. Unigram
    continuation statistics are taken over word-word bigrams only (no
    boundary markers on either side).

    `update` adds counts without re-estimating the discount.
    """

    def __init__(self, order: int = 3, smoothing: str = KNESER_NEY):
        self.order = order
        self.smoothing = smoothing

    # -- training ---------------------------------------------------------

    def fit(self, X: Iterable[Sentence], y=None):
        if self.order < 1:
            raise LanguageModelError("order must be >= 1")
        if self.smoothing not in (ADD_ONE, KNESER_NEY):
            raise LanguageModelError(f"unknown smoothing {self.smoothing!r}")
        n = self.order
        self.vocab_: set[str] = set()
        self._counts: list[dict] = [dict() for _ in range(n + 1)]       # [k]
        self._ctx_total: list[dict] = [dict() for _ in range(n + 1)]
        self._cc: list[dict] = [dict() for _ in range(n)]               # [k] for k < n
        self._cc_total: list[dict] = [dict() for _ in range(n)]
        self._cc_distinct: list[dict] = [dict() for _ in range(n)]
        sentences = list(X)
        for sent in sentences:
            self._add_sentence(tuple(sent))
        self.discount_ = self._estimate_discount()
        return self

    def _estimate_discount(self) -> float:
        if self.order < 2:
            return 0.5
        cofc = Counter(self._counts[2].values())
        n1, n2 = cofc.get(1, 0), cofc.get(2, 0)
        if n1 == 0:
            return 0.5
        return n1 / (n1 + 2.0 * n2)

    def update(self, sentence: Sequence[str]):
        """Add one sentence's counts; the discount stays frozen."""
        self._add_sentence(tuple(sentence))

    def _add_sentence(self, sent: Sentence):
        n = self.order
        self.vocab_.update(sent)
        padded = (BOS,) * (n - 1) + sent + (EOS,)
        for k in range(1, n + 1):
            for i in range(len(padded) - k + 1):
                self._add_gram(k, padded[i : i + k])

    def _add_gram(self, k: int, gram: tuple):
        counts = self._counts[k]
        prev = counts.get(gram, 0)
        counts[gram] = prev + 1
        if gram[-1] != BOS:
            ctx = gram[:-1]
            self._ctx_total[k][ctx] = self._ctx_total[k].get(ctx, 0) + 1
        if prev == 0 and k >= 2:
            self._add_continuation(k - 1, gram)

    def _add_continuation(self, k: int, gram: tuple):
        # new (k+1)-gram type `gram`; its suffix gains one predecessor type
        suffix = gram[1:]
        word = suffix[-1]
        if k == 1:
            if gram[0] == BOS or word in (BOS, EOS):
                return
        elif word == BOS:
            return
        cc = self._cc[k]
        prev = cc.get(suffix, 0)
        cc[suffix] = prev + 1
        ctx = suffix[:-1]
        self._cc_total[k][ctx] = self._cc_total[k].get(ctx, 0) + 1
        if prev == 0:
            self._cc_distinct[k][ctx] = self._cc_distinct[k].get(ctx, 0) + 1

    # -- probabilities ----------------------------------------------------

    @property
    def _outcomes(self) -> int:
        # predictable events: word types plus EOS and UNK (never BOS)
        return len(self.vocab_) + 2

    def _map(self, token: str) -> str:
        if token in (BOS, EOS):
            return token
        return token if token in self.vocab_ else UNK

    def continuation_prob(self, word: str) -> float:
        """Share of word-word bigram types that end in `word`."""
        total = self._cc_total[1].get((), 0)
        if total == 0:
            return 0.0
        return self._cc[1].get((word,), 0) / total

    def prob(self, word: str, context: Sequence[str] = ()) -> float:
        """p(word | context), using the last order-1 context tokens."""
        word = self._map(word)
        ctx = tuple(self._map(t) for t in context)[max(0, len(context) - self.order + 1):]
        if self.smoothing == ADD_ONE:
            return self._prob_add1(word, ctx)
        return self._prob_kn(word, ctx)

    def _prob_add1(self, word: str, ctx: tuple) -> float:
        k = len(ctx) + 1
        count = self._counts[k].get(ctx + (word,), 0)
        total = self._ctx_total[k].get(ctx, 0)
        return (count + 1) / (total + self._outcomes)

    def _prob_kn(self, word: str, ctx: tuple) -> float:
        k = len(ctx) + 1
        D = self.discount_
        if k == 1:
            total = self._cc_total[1].get((), 0) if self.order >= 2 else \
                self._ctx_total[1].get((), 0)
            if self.order >= 2:
                c = self._cc[1].get((word,), 0)
                distinct = self._cc_distinct[1].get((), 0)
            else:
                c = self._counts[1].get((word,), 0)
                distinct = sum(1 for g in self._counts[1] if g[0] != BOS)
            if total == 0:
                return 1.0 / self._outcomes
            return (max(c - D, 0.0) + D * distinct / self._outcomes) / total
        if k == self.order:
            c = self._counts[k].get(ctx + (word,), 0)
            total = self._ctx_total[k].get(ctx, 0)
            distinct = self._distinct_raw(k, ctx)
        else:
            c = self._cc[k].get(ctx + (word,), 0)
            total = self._cc_total[k].get(ctx, 0)
            distinct = self._cc_distinct[k].get(ctx, 0)
        lower = self._prob_kn(word, ctx[1:])
        if total == 0:
            return lower
        return (max(c - D, 0.0) + D * distinct * lower) / total

    def _distinct_raw(self, k: int, ctx: tuple) -> int:
        cache = getattr(self, "_distinct_cache", None)
        if cache is None:
            cache = self._distinct_cache = {}
        key = (k, ctx)
        hit = cache.get(key)
        total = self._ctx_total[k].get(ctx, 0)
        if hit is not None and hit[0] == total:
            return hit[1]
        distinct = sum(
            1 for g, c in self._counts[k].items()
            if c > 0 and g[:-1] == ctx and g[-1] != BOS
        )
        cache[key] = (total, distinct)
        return distinct

    def logprob(self, word: str, context: Sequence[str] = ()) -> float:
        return math.log10(self.prob(word, context))

    def score(self, sentence: Sequence[str]) -> float:
        """Total log10 probability of the sentence including the end marker."""
        n = self.order
        tokens = tuple(self._map(t) for t in sentence)
        padded = (BOS,) * (n - 1) + tokens + (EOS,)
        total = 0.0
        for i in range(n - 1, len(padded)):
            total += math.log10(self.prob(padded[i], padded[max(0, i - n + 1) : i]))
        return total

    # -- serialization ----------------------------------------------------

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"order\t{self.order}\n")
            fh.write(f"smoothing\t{self.smoothing}\n")
            fh.write(f"discount\t{self.discount_!r}\n")
            for k in range(1, self.order + 1):
                fh.write(f"ngrams\t{k}\t{len(self._counts[k])}\n")
                for gram in sorted(self._counts[k]):
                    count = self._counts[k][gram]
                    lp = math.log10(self.prob(gram[-1], gram[:-1])) if gram[-1] != BOS else 0.0
                    fh.write(f"{' '.join(gram)}\t{count}\t{lp:.6g}\n")

    @classmethod
    def load(cls, path) -> "NGramLanguageModel":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if len(lines) < 3:
            raise LanguageModelError(f"{path}: truncated model file")
        order = int(lines[0].split("\t")[1])
        smoothing = lines[1].split("\t")[1]
        discount = float(lines[2].split("\t")[1])
        model = cls(order=order, smoothing=smoothing)
        model.fit([])
        pos = 3
        for k in range(1, order + 1):
            header = lines[pos].split("\t")
            if header[0] != "ngrams" or int(header[1]) != k:
                raise LanguageModelError(f"{path}: malformed section header at line {pos + 1}")
            n_entries = int(header[2])
            pos += 1
            for _ in range(n_entries):
                text, count, _lp = lines[pos].split("\t")
                gram = tuple(text.split(" "))
                for _ in range(int(count)):
                    model._add_gram(k, gram)
                model.vocab_.update(t for t in gram if t not in (BOS, EOS))
                pos += 1
        model.discount_ = discount
        return model
