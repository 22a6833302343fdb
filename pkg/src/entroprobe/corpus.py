"""Sentence ingestion: seeded sampling, tokenisation, length filter, truncation."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyCorpusError, FormatError, InvalidInputError
from .tokenizer import Vocab, encode

log = logging.getLogger(__name__)

FORMATS = ("lines", "jsonl")


@dataclass(frozen=True)
class CorpusSpec:
    path: Path
    format: str = "lines"
    sample_size: int = 30_000
    seed: int = 0
    seq_len: int = 40
    text_field: str = "text"

    def __post_init__(self):
        if self.format not in FORMATS:
            raise InvalidInputError(f"unknown corpus format {self.format!r}; expected one of {FORMATS}")
        if self.sample_size < 1:
            raise InvalidInputError("sample_size must be at least 1")
        if self.seq_len < 2:
            raise InvalidInputError("seq_len must be at least 2")

    @property
    def min_tokens(self) -> int:
        return self.seq_len


@dataclass(frozen=True)
class SequenceRecord:
    source_index: int
    tokens: tuple[int, ...]
    continuation: int | None


@dataclass
class CorpusResult:
    records: list[SequenceRecord]
    read: int
    sampled: int

    @property
    def kept(self) -> int:
        return len(self.records)


def read_sentences(spec: CorpusSpec) -> list[str]:
    """One sentence per non-blank line, or per JSONL record's text field."""
    path = Path(spec.path)
    text = path.read_text(encoding="utf-8")
    sentences = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        if spec.format == "jsonl":
            try:
                obj = json.loads(line)
                line = obj[spec.text_field]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(
                    f"{path}:{lineno}: expected a JSON object with a {spec.text_field!r} string field"
                ) from exc
            if not isinstance(line, str):
                raise FormatError(f"{path}:{lineno}: field {spec.text_field!r} is not a string")
        sentences.append(line)
    return sentences


def select_and_truncate(sentences, vocab: Vocab, spec: CorpusSpec) -> CorpusResult:
    read = len(sentences)
    rng = np.random.default_rng(spec.seed)
    chosen = np.sort(rng.permutation(read)[: spec.sample_size])
    n = spec.seq_len
    records = []
    for idx in chosen:
        ids = encode(vocab, sentences[idx])
        if len(ids) < n:
            continue
        records.append(
            SequenceRecord(
                source_index=int(idx),
                tokens=tuple(ids[:n]),
                continuation=ids[n] if len(ids) > n else None,
            )
        )
    return CorpusResult(records=records, read=read, sampled=len(chosen))


def ingest(spec: CorpusSpec, vocab: Vocab) -> CorpusResult:
    result = select_and_truncate(read_sentences(spec), vocab, spec)
    log.info("corpus %s: read=%d sampled=%d kept=%d", spec.path, result.read, result.sampled, result.kept)
    if not result.records:
        raise EmptyCorpusError(
            f"{spec.path}: no sentence reached {spec.seq_len} tokens "
            f"(read {result.read}, sampled {result.sampled})"
        )
    return result
