"""Byte-level BPE compatible with the published GPT-2 vocabulary files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import regex

from .errors import FormatError, RangeError

# GPT-2's pre-tokenisation pattern, verbatim.
GPT2_PATTERN = regex.compile(
    r"""'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"""
)


@lru_cache(maxsize=1)
def bytes_to_unicode() -> dict[int, str]:
    """Map every byte to a printable unicode character (GPT-2's remapping).

    Printable latin-1 bytes map to themselves; the remaining 68 bytes are
    shifted to code points starting at 256, in byte order.
    """
    keep = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("¡"), ord("¬") + 1))
        + list(range(ord("®"), ord("ÿ") + 1))
    )
    mapping = {b: chr(b) for b in keep}
    n = 0
    for b in range(256):
        if b not in mapping:
            mapping[b] = chr(256 + n)
            n += 1
    return mapping


@lru_cache(maxsize=1)
def unicode_to_bytes() -> dict[str, int]:
    return {c: b for b, c in bytes_to_unicode().items()}


@dataclass(eq=False)
class Vocab:
    token_to_id: dict[str, int]
    id_to_token: list[str]
    merges: list[tuple[str, str]]
    ranks: dict[tuple[str, str], int] = field(init=False, repr=False)

    def __post_init__(self):
        self.ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._cache: dict[str, tuple[int, ...]] = {}

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def _bpe(self, piece: str) -> tuple[int, ...]:
        cached = self._cache.get(piece)
        if cached is not None:
            return cached
        word = list(piece)
        ranks = self.ranks
        while len(word) > 1:
            best = None
            best_rank = None
            for pair in zip(word, word[1:]):
                r = ranks.get(pair)
                if r is not None and (best_rank is None or r < best_rank):
                    best, best_rank = pair, r
            if best is None:
                break
            first, second = best
            merged = []
            i = 0
            while i < len(word):
                if i < len(word) - 1 and word[i] == first and word[i + 1] == second:
                    merged.append(first + second)
                    i += 2
                else:
                    merged.append(word[i])
                    i += 1
            word = merged
        try:
            ids = tuple(self.token_to_id[sym] for sym in word)
        except KeyError as exc:
            raise FormatError(f"vocabulary has no entry for symbol {exc.args[0]!r}") from None
        if len(self._cache) < 100_000:
            self._cache[piece] = ids
        return ids


def load_vocab(vocab_file, merges_file) -> Vocab:
    """Read a JSON token->id map and a ranked merges file."""
    vocab_file = Path(vocab_file)
    merges_file = Path(merges_file)
    try:
        raw = json.loads(vocab_file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{vocab_file}: malformed JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise FormatError(f"{vocab_file}: expected a JSON object of token -> id")

    m = len(raw)
    id_to_token: list[str | None] = [None] * m
    for tok, idx in raw.items():
        if not isinstance(idx, int) or isinstance(idx, bool):
            raise FormatError(f"{vocab_file}: token {tok!r} has non-integer id {idx!r}")
        if not 0 <= idx < m:
            raise FormatError(f"{vocab_file}: token {tok!r} has id {idx} outside [0, {m})")
        if id_to_token[idx] is not None:
            raise FormatError(
                f"{vocab_file}: duplicate id {idx} for tokens {id_to_token[idx]!r} and {tok!r}"
            )
        id_to_token[idx] = tok

    merges: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    text = merges_file.read_text(encoding="utf-8")
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if lineno == 1 and line.startswith("#"):
            continue
        if not line:
            continue
        parts = line.split(" ")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise FormatError(f"{merges_file}:{lineno}: expected 'left right', got {line!r}")
        pair = (parts[0], parts[1])
        if pair in seen:
            raise FormatError(f"{merges_file}:{lineno}: duplicate merge {line!r}")
        seen.add(pair)
        merges.append(pair)

    return Vocab(token_to_id=dict(raw), id_to_token=id_to_token, merges=merges)


def encode(v: Vocab, text: str) -> list[int]:
    b2u = bytes_to_unicode()
    ids: list[int] = []
    for piece in GPT2_PATTERN.findall(text):
        mapped = "".join(b2u[b] for b in piece.encode("utf-8"))
        ids.extend(v._bpe(mapped))
    return ids


def decode(v: Vocab, ids) -> str:
    u2b = unicode_to_bytes()
    m = v.size
    out = bytearray()
    for i in ids:
        i = int(i)
        if not 0 <= i < m:
            raise RangeError(f"token id {i} outside [0, {m})")
        out.extend(u2b[c] for c in v.id_to_token[i])
    return out.decode("utf-8", errors="replace")
