"""Combining quality estimation with automatic post-editing: oracle word
labels from the edit-rate alignment, correction triggered by sentence scores,
guidance annotations for constrained decoding, and sentence- or word-level
output selection.

External predictions are consumed from files: one float per line for sentence
scores, space-separated GOOD/BAD tags per line for word labels.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Sequence

from . import metrics
from .align import levenshtein_align
from .decoder import AnnotatedInput
from .validation import Sentence, check_equal_lengths

GOOD = "good"
BAD = "bad"


class QeError(ValueError):
    pass


def oracle_word_labels(mt: Sentence, pe: Sentence) -> tuple[str, ...]:
    """Per-token good/bad labels: good iff the edit-rate alignment matches the
    token with an identical post-edit token."""
    _, _, alignment = metrics.ter(mt, pe)
    return tuple(GOOD if label == metrics.MATCH else BAD
                 for label in alignment.hyp_labels)


def activate(mt: Sentence, predicted_ter: float, threshold: float,
             decode_fn: Callable[[Sentence], Sentence]) -> Sentence:
    """Run the corrector only when the predicted edit rate reaches the
    threshold; below it the MT output is good enough to keep."""
    if predicted_ter < threshold:
        return tuple(mt)
    return tuple(decode_fn(tuple(mt)))


def guidance_annotate(mt: Sentence, labels: Sequence[str]) -> AnnotatedInput:
    """Self-suggestions on good tokens; bad tokens decode freely."""
    mt = tuple(mt)
    if len(labels) != len(mt):
        raise QeError(f"labels/tokens length mismatch: {len(labels)} vs {len(mt)}")
    suggestions = {i: (tok,) for i, (tok, label) in enumerate(zip(mt, labels))
                   if label == GOOD}
    return AnnotatedInput(mt, suggestions)


def select_sentence(mt: Sentence, ape: Sentence, qe_mt: float, qe_ape: float,
                    tau: float) -> Sentence:
    """Keep the corrected output only when its predicted edit rate is better
    by more than tau; tau = -inf always selects the corrected output."""
    return tuple(ape) if qe_mt - qe_ape > tau else tuple(mt)


def select_word(mt: Sentence, ape: Sentence, labels_mt: Sequence[str],
                labels_ape: Sequence[str]) -> Sentence:
    """Word-level merge with the MT output as the backbone.

    Good MT tokens stay; bad MT tokens aligned to good corrected tokens are
    replaced; on agreement (both good or both bad) the MT token wins; unaligned
    good corrected tokens are inserted after the last linked MT position;
    unaligned MT tokens are kept iff labeled good.
    """
    mt, ape = tuple(mt), tuple(ape)
    if len(labels_mt) != len(mt):
        raise QeError(f"mt labels length mismatch: {len(labels_mt)} vs {len(mt)}")
    if len(labels_ape) != len(ape):
        raise QeError(f"ape labels length mismatch: {len(labels_ape)} vs {len(ape)}")
    links, _, _ = levenshtein_align(mt, ape)
    ape_for_mt = {i: j for i, j in links}
    mt_for_ape = {j: i for i, j in links}

    # unaligned corrected tokens attach after the last linked MT index before them
    insertions: dict[int, list[str]] = {}
    for j, tok in enumerate(ape):
        if j in mt_for_ape or labels_ape[j] != GOOD:
            continue
        anchor = -1
        for j2 in range(j - 1, -1, -1):
            if j2 in mt_for_ape:
                anchor = mt_for_ape[j2]
                break
        insertions.setdefault(anchor, []).append(tok)

    out: list[str] = []
    out.extend(insertions.get(-1, ()))
    for i, tok in enumerate(mt):
        j = ape_for_mt.get(i)
        if labels_mt[i] == GOOD:
            out.append(tok)
        elif j is not None and labels_ape[j] == GOOD:
            out.append(ape[j])
        elif j is not None:
            out.append(tok)  # both bad: keep the backbone token
        # bad and unaligned: dropped
        out.extend(insertions.get(i, ()))
    return tuple(out)


def load_sentence_scores(path) -> list[float]:
    """One predicted score per line."""
    scores = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(),
                                  start=1):
        line = line.strip()
        if not line:
            raise QeError(f"{path}: line {lineno}: empty line")
        try:
            scores.append(float(line))
        except ValueError as exc:
            raise QeError(f"{path}: line {lineno}: not a number: {line!r}") from exc
    return scores


def load_word_labels(path) -> list[tuple[str, ...]]:
    """Space-separated GOOD/BAD tags, one segment per line."""
    labels = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(),
                                  start=1):
        tags = []
        for tag in line.split():
            low = tag.lower()
            if low not in (GOOD, BAD):
                raise QeError(f"{path}: line {lineno}: invalid tag {tag!r}")
            tags.append(low)
        labels.append(tuple(tags))
    return labels
