"""Word-level tokenization and alignment between an original prompt and
its edited variant.

Alignment is a longest-common-subsequence match over words (compared
case-insensitively, punctuation stripped).  Edited words that have no
counterpart in the original prompt, plus in-place substitutions, form
the key-word set that drives the editing schedule.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .errors import PromptError

MAX_TOKENS = 77

VocabFn = Callable[[str], Sequence[int]]


@dataclass(frozen=True)
class TokenizedPrompt:
    """A prompt split into words, each word owning a contiguous token span."""

    text: str
    words: tuple[str, ...]
    token_ids: tuple[int, ...]
    word_spans: tuple[tuple[int, int], ...]  # half-open [start, end) per word

    @property
    def length(self) -> int:
        return len(self.token_ids)

    def span_positions(self, word_index: int) -> range:
        start, end = self.word_spans[word_index]
        return range(start, end)


@dataclass(frozen=True)
class AlignmentMap:
    """Word correspondence from an edited prompt back to the original.

    ``pairs[i]`` is the original word index matched to edited word ``i``,
    or None for an insertion.  ``key_set`` holds the edited word indices
    that differ from the original (insertions and substitutions).
    ``dropped`` lists original word indices with no edited counterpart.
    """

    pairs: tuple[Optional[int], ...]
    key_set: frozenset[int]
    dropped: tuple[int, ...] = field(default=())

    @property
    def is_noop(self) -> bool:
        return not self.key_set


def _clean(word: str) -> str:
    return word.strip(string.punctuation)


def default_vocab(word: str) -> list[int]:
    """Fallback vocabulary: one token per word, id from a stable hash."""
    import hashlib

    digest = hashlib.blake2b(word.lower().encode("utf-8"), digest_size=4)
    return [int.from_bytes(digest.digest(), "little") % 49408]


def tokenize(prompt: str, vocab: VocabFn = default_vocab) -> TokenizedPrompt:
    """Split ``prompt`` into words and assign backend token ids.

    Words are whitespace-separated with surrounding punctuation stripped;
    ``vocab`` maps each word to one or more backend token ids.  Raises
    PromptError for an empty prompt or one longer than 77 tokens.
    """
    raw_words = prompt.split()
    words = [w for w in (_clean(rw) for rw in raw_words) if w]
    if not words:
        raise PromptError("prompt is empty after trimming")

    token_ids: list[int] = []
    spans: list[tuple[int, int]] = []
    for word in words:
        ids = list(vocab(word))
        if not ids:
            raise PromptError(f"vocabulary produced no tokens for {word!r}")
        start = len(token_ids)
        token_ids.extend(int(i) for i in ids)
        spans.append((start, len(token_ids)))
    if len(token_ids) > MAX_TOKENS:
        raise PromptError(
            f"prompt needs {len(token_ids)} tokens, limit is {MAX_TOKENS}"
        )
    return TokenizedPrompt(
        text=prompt.strip(),
        words=tuple(words),
        token_ids=tuple(token_ids),
        word_spans=tuple(spans),
    )


def _lcs_pairs(src: Sequence[str], dst: Sequence[str]) -> list[tuple[int, int]]:
    """Index pairs of a longest common subsequence (case-insensitive).

    Ambiguous ties between equally long subsequences resolve by word
    content rather than by argument side, so the chosen matching is
    identical (transposed) when the arguments swap.
    """
    n, m = len(src), len(dst)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, nxt = table[i], table[i + 1]
        for j in range(m - 1, -1, -1):
            if src[i] == dst[j]:
                row[j] = nxt[j + 1] + 1
            else:
                row[j] = max(nxt[j], row[j + 1])
    pairs: list[tuple[int, int]] = []
    i = j = 0
    while i < n and j < m:
        if src[i] == dst[j]:
            pairs.append((i, j))
            i += 1
            j += 1
        elif table[i + 1][j] > table[i][j + 1]:
            i += 1
        elif table[i + 1][j] < table[i][j + 1]:
            j += 1
        elif src[i] < dst[j]:
            i += 1
        else:
            j += 1
    return pairs


def align(original: TokenizedPrompt, edited: TokenizedPrompt) -> AlignmentMap:
    """Match edited words to original words.

    LCS anchors matched words; within each gap between anchors, an equal
    number of leftover words on both sides pairs up positionally as
    substitutions.  Remaining edited words are insertions, remaining
    original words are deletions.  key_set = insertions + substitutions.
    """
    src = [w.lower() for w in original.words]
    dst = [w.lower() for w in edited.words]
    anchors = _lcs_pairs(src, dst)

    pairs: list[Optional[int]] = [None] * len(dst)
    key: set[int] = set()
    dropped: list[int] = []

    prev_i = prev_j = -1
    for a_i, a_j in anchors + [(len(src), len(dst))]:
        gap_src = list(range(prev_i + 1, a_i))
        gap_dst = list(range(prev_j + 1, a_j))
        if gap_src and len(gap_src) == len(gap_dst):
            # in-place substitution of an equal-length stretch
            for s_idx, d_idx in zip(gap_src, gap_dst):
                pairs[d_idx] = s_idx
                key.add(d_idx)
        else:
            key.update(gap_dst)
            dropped.extend(gap_src)
        if a_i < len(src):
            pairs[a_j] = a_i
        prev_i, prev_j = a_i, a_j

    return AlignmentMap(
        pairs=tuple(pairs), key_set=frozenset(key), dropped=tuple(dropped)
    )


def key_word_token_positions(
    alignment: AlignmentMap, edited: TokenizedPrompt
) -> frozenset[int]:
    """Token positions covered by the key words; empty if nothing changed."""
    positions: set[int] = set()
    for word_index in alignment.key_set:
        positions.update(edited.span_positions(word_index))
    return frozenset(positions)
