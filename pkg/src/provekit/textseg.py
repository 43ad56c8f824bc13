"""Sentence segmentation and tokenization.

The splitter is deliberately uniform across documents, references, and
model outputs so that sentence counts agree everywhere. A boundary is a
terminal punctuation mark (./!/?) followed by whitespace and a capital
letter, or end-of-text. A short abbreviation list guards common false
positives, and provenance tags are never split internally; a tag that
trails a sentence stays attached to that sentence unit.
"""

from __future__ import annotations

import re

TAG_OPEN = "[PROVE:"

DEFAULT_ABBREVIATIONS = ("dr.", "u.s.", "e.g.", "i.e.", "mr.", "mrs.", "vs.")

_TERMINALS = ".!?"
_CLOSE_QUOTES = "\"'”’)"
_OPEN_QUOTES = "\"'“‘("

# Lowercase word tokens; keeps intra-word apostrophes and hyphens,
# drops standalone punctuation.
_WORD_RE = re.compile(r"\w+(?:['’\-]\w+)*", re.UNICODE)


def tokenize(sentence: str) -> list[str]:
    """Lowercase word tokens of ``sentence``."""
    return _WORD_RE.findall(sentence.lower())


def _trailing_word(text: str, dot: int) -> str:
    """The whitespace-delimited token ending at text[dot] (inclusive)."""
    j = dot
    while j > 0 and not text[j - 1].isspace():
        j -= 1
    return text[j : dot + 1].lower()


def _skip_ws(text: str, i: int) -> int:
    n = len(text)
    while i < n and text[i].isspace():
        i += 1
    return i


def split_sentences_spans(
    text: str, abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS
) -> list[tuple[str, int, int]]:
    """Split into sentence units with (text, start, end) character spans.

    Spans index the original string and cover the trimmed sentence text;
    trailing provenance tags are included in the unit that owns them.
    """
    n = len(text)
    pieces: list[tuple[str, int, int]] = []
    start = 0
    i = 0

    def flush(end: int) -> None:
        nonlocal start
        raw = text[start:end]
        stripped = raw.strip()
        if stripped:
            a = start + (len(raw) - len(raw.lstrip()))
            pieces.append((stripped, a, a + len(stripped)))
        start = end

    while i < n:
        if text.startswith(TAG_OPEN, i):
            close = text.find("]", i)
            i = n if close < 0 else close + 1
            continue
        ch = text[i]
        if ch not in _TERMINALS:
            i += 1
            continue
        if ch == "." and _trailing_word(text, i) in abbreviations:
            i += 1
            continue
        end = i + 1
        while end < n and text[end] in _CLOSE_QUOTES:
            end += 1
        j = _skip_ws(text, end)
        ws_seen = j > end
        absorbed_tag = False
        while j < n and text.startswith(TAG_OPEN, j):
            close = text.find("]", j)
            if close < 0:
                end = n
                j = n
                absorbed_tag = True
                break
            end = close + 1
            absorbed_tag = True
            j = _skip_ws(text, end)
        if j >= n:
            flush(n)
            return pieces
        if absorbed_tag:
            flush(end)
            i = end
            continue
        k = j
        while k < n and text[k] in _OPEN_QUOTES:
            k += 1
        if ws_seen and k < n and text[k].isupper():
            flush(end)
            i = end
            continue
        i += 1

    flush(n)
    return pieces


def split_sentences(
    text: str, abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS
) -> list[str]:
    """Sentence units of ``text``; joining them back preserves content
    up to whitespace normalization."""
    return [s for s, _, _ in split_sentences_spans(text, abbreviations)]
