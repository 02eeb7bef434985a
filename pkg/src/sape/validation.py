"""Input validation helpers shared by the estimator API and the CLI."""

from __future__ import annotations

from typing import Iterable, Sequence

Sentence = tuple[str, ...]


def as_sentence(value, *, allow_empty: bool = True) -> Sentence:
    """Coerce a string or an iterable of tokens into a token tuple.

    Strings are whitespace-split (input is assumed pre-tokenized). Tokens must
    be non-empty and free of internal whitespace.
    """
    if isinstance(value, str):
        tokens = tuple(value.split())
    else:
        tokens = tuple(value)
    for tok in tokens:
        if not isinstance(tok, str) or not tok:
            raise ValueError(f"invalid token {tok!r}: tokens must be non-empty strings")
        if any(ch.isspace() for ch in tok):
            raise ValueError(f"invalid token {tok!r}: tokens must not contain whitespace")
    if not allow_empty and not tokens:
        raise ValueError("sentence must not be empty")
    return tokens


def as_corpus(values: Iterable, *, allow_empty: bool = True) -> list[Sentence]:
    return [as_sentence(v, allow_empty=allow_empty) for v in values]


def check_equal_lengths(**named: Sequence) -> int:
    """Check that all named sequences have the same length; return it."""
    items = list(named.items())
    first_name, first = items[0]
    n = len(first)
    for name, seq in items[1:]:
        if len(seq) != n:
            raise ValueError(
                f"length mismatch: {first_name} has {n} items, {name} has {len(seq)}"
            )
    return n


def check_in(value, allowed: Sequence, name: str):
    if value not in allowed:
        raise ValueError(f"{name} must be one of {sorted(allowed)}, got {value!r}")
    return value


def check_fraction(value: float, name: str) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_positive(value, name: str):
    if value is None or value <= 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value
