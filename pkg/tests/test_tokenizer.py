import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GPT2_MERGES, GPT2_VOCAB, SENTENCES, random_strings
from entroprobe.errors import FormatError, RangeError
from entroprobe.tokenizer import bytes_to_unicode, decode, encode, load_vocab


def test_byte_map_is_bijective():
    m = bytes_to_unicode()
    assert sorted(m) == list(range(256))
    assert len(set(m.values())) == 256
    assert m[ord("A")] == "A" and m[ord(" ")] == "Ġ"


def test_published_vocab_size(gpt2_vocab):
    assert gpt2_vocab.size == 50257
    assert len(gpt2_vocab.merges) == 50000


def test_empty(gpt2_vocab):
    assert encode(gpt2_vocab, "") == []
    assert decode(gpt2_vocab, []) == ""


def test_hello_world(gpt2_vocab):
    # ids produced by transformers' GPT2Tokenizer on the same vocabulary files
    assert encode(gpt2_vocab, "Hello world") == [15496, 995]


def test_roundtrip_accented(gpt2_vocab):
    assert decode(gpt2_vocab, encode(gpt2_vocab, "caffè latte")) == "caffè latte"


def test_out_of_range(gpt2_vocab):
    with pytest.raises(RangeError):
        decode(gpt2_vocab, [gpt2_vocab.size])
    with pytest.raises(RangeError):
        decode(gpt2_vocab, [-1])


def test_deterministic(gpt2_vocab):
    text = SENTENCES.read_text()
    assert encode(gpt2_vocab, text) == encode(gpt2_vocab, text)


def test_matches_reference_implementation(gpt2_vocab):
    transformers = pytest.importorskip("transformers")
    ref = transformers.GPT2Tokenizer(str(GPT2_VOCAB), str(GPT2_MERGES))
    samples = SENTENCES.read_text().splitlines() + random_strings(300, seed=99)
    for s in samples:
        assert encode(gpt2_vocab, s) == ref.encode(s), s


@settings(max_examples=300, deadline=None)
@given(st.text())
def test_roundtrip_property(gpt2_vocab, s):
    try:
        s.encode("utf-8")
    except UnicodeEncodeError:  # lone surrogates are not valid UTF-8
        return
    ids = encode(gpt2_vocab, s)
    assert all(0 <= i < gpt2_vocab.size for i in ids)
    assert decode(gpt2_vocab, ids) == s


def _write(tmp_path, vocab, merges):
    v, m = tmp_path / "vocab.json", tmp_path / "merges.txt"
    v.write_text(json.dumps(vocab), encoding="utf-8")
    m.write_text(merges, encoding="utf-8")
    return v, m


def byte_vocab():
    return {c: i for i, c in enumerate(bytes_to_unicode()[b] for b in range(256))}


def test_no_merges_degenerates_to_bytes(tmp_path):
    v = load_vocab(*_write(tmp_path, byte_vocab(), "#version: 0.2\n"))
    text = "héllo"
    assert encode(v, text) == list(text.encode("utf-8"))
    assert decode(v, encode(v, text)) == text


def test_merges_applied_in_rank_order(tmp_path):
    vocab = byte_vocab()
    for tok in ("ab", "bc", "abc"):
        vocab[tok] = len(vocab)
    # "b c" outranks "a b", so "abc" -> a + bc; there is no "a bc" rule
    v = load_vocab(*_write(tmp_path, vocab, "#version: 0.2\nb c\na b\n"))
    assert encode(v, "abc") == [vocab["a"], vocab["bc"]]
    v2 = load_vocab(*_write(tmp_path, vocab, "a b\nb c\nab c\n"))
    assert encode(v2, "abc") == [vocab["abc"]]


def test_crlf_merges(tmp_path):
    vocab = byte_vocab()
    vocab["ab"] = 256
    v = load_vocab(*_write(tmp_path, vocab, "#version: 0.2\r\na b\r\n"))
    assert v.merges == [("a", "b")]


def test_duplicate_id_rejected(tmp_path):
    with pytest.raises(FormatError, match="duplicate id 0"):
        load_vocab(*_write(tmp_path, {"a": 0, "b": 0}, ""))


def test_id_gap_rejected(tmp_path):
    with pytest.raises(FormatError, match="'b'"):
        load_vocab(*_write(tmp_path, {"a": 0, "b": 5}, ""))


def test_malformed_json(tmp_path):
    v, m = _write(tmp_path, {}, "")
    v.write_text("{not json", encoding="utf-8")
    with pytest.raises(FormatError, match="malformed JSON"):
        load_vocab(v, m)


def test_bad_merge_line(tmp_path):
    with pytest.raises(FormatError, match=":2:"):
        load_vocab(*_write(tmp_path, byte_vocab(), "#version: 0.2\na b c\n"))


def test_duplicate_merge(tmp_path):
    with pytest.raises(FormatError, match="duplicate merge"):
        load_vocab(*_write(tmp_path, byte_vocab(), "a b\na b\n"))
