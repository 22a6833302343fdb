from pathlib import Path

import numpy as np
import pytest

from entroprobe.checkpoint import load_checkpoint, save_toy_checkpoint
from entroprobe.model import ModelConfig
from entroprobe.tokenizer import load_vocab

FIXTURES = Path(__file__).parent / "fixtures"
GPT2_VOCAB = FIXTURES / "gpt2" / "vocab.json"
GPT2_MERGES = FIXTURES / "gpt2" / "merges.txt"
SENTENCES = FIXTURES / "sentences.txt"

TOY = ModelConfig(n_layers=2, d_model=16, n_heads=2, vocab_size=32, n_ctx=64)
# same architecture, but with the published vocabulary so real text can be analysed
TOY_FULL_VOCAB = ModelConfig(n_layers=2, d_model=16, n_heads=2, vocab_size=50257, n_ctx=64)


def random_strings(n, seed):
    """Seeded strings mixing ASCII, accented Latin, CJK, emoji and whitespace."""
    rng = np.random.default_rng(seed)
    pools = [
        list("abcdefghijklmnopqrstuvwxyz ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789.,;:!?'\"-()"),
        list("àéèçüöñßøåÆœ"),
        list("日本語中文한국어"),
        ["🙂", "🚀", "👍🏽", "∑", "≈", "€"],
        [" ", "  ", "\n", "\t", "\r\n"],
    ]
    out = []
    for _ in range(n):
        length = int(rng.integers(0, 40))
        chars = []
        for _ in range(length):
            pool = pools[int(rng.choice(5, p=[0.6, 0.1, 0.1, 0.1, 0.1]))]
            chars.append(pool[int(rng.integers(len(pool)))])
        out.append("".join(chars))
    return out


@pytest.fixture(scope="session")
def toy_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "toy.safetensors"
    save_toy_checkpoint(TOY, 7, path)
    return path


@pytest.fixture(scope="session")
def toy(toy_path):
    return load_checkpoint(toy_path)


@pytest.fixture(scope="session")
def toy_full_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "toy-gpt2vocab.safetensors"
    save_toy_checkpoint(TOY_FULL_VOCAB, 7, path)
    return path


@pytest.fixture(scope="session")
def toy_full(toy_full_path):
    return load_checkpoint(toy_full_path)


@pytest.fixture(scope="session")
def gpt2_vocab():
    return load_vocab(GPT2_VOCAB, GPT2_MERGES)


@pytest.fixture(scope="session")
def orthogonal_ckpt(toy):
    """Toy model whose 16 embedding rows are orthonormal (M = D = 16)."""
    import copy

    rng = np.random.default_rng(11)
    q, _ = np.linalg.qr(rng.normal(size=(16, 16)))
    ck = copy.deepcopy(toy)
    ck.config = ModelConfig(n_layers=2, d_model=16, n_heads=2, vocab_size=16, n_ctx=64)
    ck.wte = np.ascontiguousarray(q.astype(np.float32))
    return ck


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
