"""Corpus handling: tokenized sentences, training triplets, the annotated joint
representation that glues each translated token to its aligned source tokens,
and identity augmentation of training pairs.

Text files are UTF-8, one sentence per line, tokens separated by single spaces.
A triplet corpus is three parallel files (.src/.mt/.pe).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .validation import Sentence, as_sentence


class CorpusError(ValueError):
    """Raised for malformed corpus files or inconsistent parallel data."""


@dataclass(frozen=True)
class Triplet:
    """One training/evaluation unit: source, raw MT output, human post-edit."""

    src: Sentence
    mt: Sentence
    pe: Sentence
    id: int

    def __post_init__(self):
        if not self.src or not self.mt or not self.pe:
            raise CorpusError(f"triplet {self.id}: all three sentences must be non-empty")


# "#" separates an MT token from its annotation, "_" joins multiple aligned
# source tokens; raw tokens containing either character are escaped.
_ANNOTATION_SEP = "#"
_SOURCE_JOIN = "_"


def escape_token(token: str) -> str:
    return token.replace("\\", "\\\\").replace("#", "\\#").replace("_", "\\_")


def unescape_token(token: str) -> str:
    out = []
    i = 0
    while i < len(token):
        if token[i] == "\\" and i + 1 < len(token):
            out.append(token[i + 1])
            i += 2
        else:
            out.append(token[i])
            i += 1
    return "".join(out)


def _split_unescaped(text: str, sep: str) -> list[str]:
    parts = []
    cur = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            cur.append(ch)
            cur.append(text[i + 1])
            i += 2
            continue
        if ch == sep:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
        i += 1
    parts.append("".join(cur))
    return parts


@dataclass(frozen=True)
class JointSentence:
    """An MT sentence whose tokens carry optional source-side annotations.

    Annotation is absent exactly for MT tokens with no alignment link; present
    annotations are the underscore-joined source tokens in source order.
    """

    pairs: tuple[tuple[str, tuple[str, ...] | None], ...]

    def __len__(self) -> int:
        return len(self.pairs)

    def tokens(self) -> Sentence:
        """Serialized joint tokens, one per MT token."""
        out = []
        for mt_tok, anno in self.pairs:
            tok = escape_token(mt_tok)
            if anno is not None:
                tok += _ANNOTATION_SEP + _SOURCE_JOIN.join(escape_token(s) for s in anno)
            out.append(tok)
        return tuple(out)

    def mt_tokens(self) -> Sentence:
        return tuple(mt for mt, _ in self.pairs)


def joint_surface(token: str) -> str:
    """Strip the annotation from a serialized joint token."""
    return unescape_token(_split_unescaped(token, _ANNOTATION_SEP)[0])


def parse_joint(line: str) -> JointSentence:
    pairs = []
    for tok in line.split():
        fields = _split_unescaped(tok, _ANNOTATION_SEP)
        if len(fields) == 1:
            pairs.append((unescape_token(fields[0]), None))
        elif len(fields) == 2:
            srcs = tuple(unescape_token(s) for s in _split_unescaped(fields[1], _SOURCE_JOIN))
            pairs.append((unescape_token(fields[0]), srcs))
        else:
            raise CorpusError(f"malformed joint token {tok!r}")
    return JointSentence(tuple(pairs))


def serialize_joint(joint: JointSentence) -> str:
    return " ".join(joint.tokens())


def build_joint(src: Sentence, mt: Sentence, alignment) -> JointSentence:
    """Annotate each MT token with its aligned source tokens, in source order.

    `alignment` is a set of (src_index, mt_index) links; unlinked MT tokens are
    left unannotated.
    """
    by_mt: dict[int, list[int]] = {}
    for i, j in alignment:
        if not (0 <= i < len(src)) or not (0 <= j < len(mt)):
            raise CorpusError(f"alignment link ({i},{j}) out of bounds "
                              f"for lengths {len(src)}/{len(mt)}")
        by_mt.setdefault(j, []).append(i)
    pairs = []
    for j, tok in enumerate(mt):
        if j in by_mt:
            srcs = tuple(src[i] for i in sorted(by_mt[j]))
            pairs.append((tok, srcs))
        else:
            pairs.append((tok, None))
    return JointSentence(tuple(pairs))


def read_sentences(path) -> list[Sentence]:
    """Read one tokenized sentence per line; reject empty lines and bad bytes."""
    path = Path(path)
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        lineno = raw[: exc.start].count(b"\n") + 1
        raise CorpusError(f"{path}: line {lineno}: undecodable bytes") from exc
    sentences = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = tuple(line.split())
        if not tokens:
            raise CorpusError(f"{path}: line {lineno}: empty line")
        sentences.append(tokens)
    return sentences


def write_sentences(path, sentences: Iterable[Sentence]):
    Path(path).write_text(
        "".join(" ".join(s) + "\n" for s in sentences), encoding="utf-8"
    )


def load_corpus(src_path, mt_path, pe_path) -> list[Triplet]:
    """Load a triplet corpus from three parallel files; ids are 0-based line numbers."""
    src = read_sentences(src_path)
    mt = read_sentences(mt_path)
    pe = read_sentences(pe_path)
    if not (len(src) == len(mt) == len(pe)):
        raise CorpusError(
            f"line count mismatch: {src_path}={len(src)} {mt_path}={len(mt)} "
            f"{pe_path}={len(pe)}"
        )
    return [Triplet(s, m, p, i) for i, (s, m, p) in enumerate(zip(src, mt, pe))]


def augment_identity(pairs: Sequence[tuple[Sentence, Sentence]]) -> list[tuple[Sentence, Sentence]]:
    """Append one (pe, pe) identity pair per original (input, pe) pair.

    Doubles the corpus; the identity half teaches the model to keep correct
    tokens untouched.
    """
    out = list(pairs)
    out.extend((pe, pe) for _, pe in pairs)
    return out
