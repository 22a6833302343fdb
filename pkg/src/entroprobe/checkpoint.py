"""Tensor archive (safetensors byte layout) reading/writing and GPT-2 weight mapping.

Archive layout: an 8-byte little-endian header length ``n``, ``n`` bytes of
UTF-8 JSON mapping tensor names to ``{"dtype", "shape", "data_offsets"}``
(offsets relative to the payload start), then the raw little-endian payload.
An optional ``"__metadata__"`` entry holds string key/value pairs.

GPT-2 tensor names (an optional ``transformer.`` prefix is accepted)::

    wte.weight                  (vocab, d)        token embedding
    wpe.weight                  (ctx, d)          position embedding
    h.{i}.ln_1.weight / .bias   (d,)
    h.{i}.attn.c_attn.weight    (d, 3d)           bias (3d,)
    h.{i}.attn.c_proj.weight    (d, d)            bias (d,)
    h.{i}.ln_2.weight / .bias   (d,)
    h.{i}.mlp.c_fc.weight       (d, 4d)           bias (4d,)
    h.{i}.mlp.c_proj.weight     (4d, d)           bias (d,)
    ln_f.weight / .bias         (d,)
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, MissingTensorError
from .model import ModelConfig

_DTYPES = {
    "F64": np.dtype("<f8"),
    "F32": np.dtype("<f4"),
    "F16": np.dtype("<f2"),
    "BF16": np.dtype("<u2"),  # widened to float32 on load
    "I64": np.dtype("<i8"),
    "I32": np.dtype("<i4"),
    "I16": np.dtype("<i2"),
    "I8": np.dtype("i1"),
    "U8": np.dtype("u1"),
    "BOOL": np.dtype("?"),
}
_DTYPE_NAMES = {np.dtype("<f8"): "F64", np.dtype("<f4"): "F32", np.dtype("<f2"): "F16",
                np.dtype("<i8"): "I64", np.dtype("<i4"): "I32"}

# Head counts of the published GPT-2 family, keyed by width. The archive
# shapes do not determine the head count, so this is the fallback when the
# archive metadata lacks "n_head".
GPT2_HEADS_BY_WIDTH = {768: 12, 1024: 16, 1280: 20, 1600: 25}


@dataclass(frozen=True)
class TensorEntry:
    dtype: str
    shape: tuple[int, ...]
    begin: int
    end: int


@dataclass
class TensorArchive:
    entries: dict[str, TensorEntry]
    payload: bytes
    metadata: dict[str, str]

    def tensor(self, name: str) -> np.ndarray:
        try:
            e = self.entries[name]
        except KeyError:
            raise MissingTensorError(name) from None
        arr = np.frombuffer(self.payload, dtype=_DTYPES[e.dtype], count=int(np.prod(e.shape, dtype=np.int64)), offset=e.begin)
        if e.dtype == "BF16":
            arr = (arr.astype(np.uint32) << 16).view(np.float32)
        return arr.reshape(e.shape)


def read_archive(path) -> TensorArchive:
    data = Path(path).read_bytes()
    return parse_archive(data, source=str(path))


def parse_archive(data: bytes, source: str = "<bytes>") -> TensorArchive:
    if len(data) < 8:
        raise FormatError(f"{source}: truncated file ({len(data)} bytes, no header length)")
    (n,) = struct.unpack("<Q", data[:8])
    if 8 + n > len(data):
        raise FormatError(f"{source}: header length {n} exceeds file size {len(data)}")
    try:
        header = json.loads(data[8 : 8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{source}: header is not valid JSON ({exc})") from exc
    if not isinstance(header, dict):
        raise FormatError(f"{source}: header must be a JSON object")

    payload = data[8 + n :]
    metadata = header.pop("__metadata__", None) or {}
    if not isinstance(metadata, dict):
        raise FormatError(f"{source}: __metadata__ must be an object")

    entries: dict[str, TensorEntry] = {}
    for name, info in header.items():
        try:
            dtype = info["dtype"]
            shape = tuple(int(s) for s in info["shape"])
            begin, end = (int(o) for o in info["data_offsets"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{source}: tensor {name!r} has a malformed entry ({exc})") from exc
        if dtype not in _DTYPES:
            raise FormatError(f"{source}: tensor {name!r} has unknown dtype {dtype!r}")
        if any(s < 0 for s in shape):
            raise FormatError(f"{source}: tensor {name!r} has a negative dimension")
        if not 0 <= begin <= end <= len(payload):
            raise FormatError(
                f"{source}: tensor {name!r} byte range [{begin}, {end}) is outside the "
                f"{len(payload)}-byte payload"
            )
        expected = int(np.prod(shape, dtype=np.int64)) * _DTYPES[dtype].itemsize
        if end - begin != expected:
            raise FormatError(
                f"{source}: tensor {name!r} spans {end - begin} bytes but shape {list(shape)} "
                f"of {dtype} needs {expected}"
            )
        entries[name] = TensorEntry(dtype, shape, begin, end)

    ordered = sorted(entries.items(), key=lambda kv: (kv[1].begin, kv[1].end))
    for (name_a, a), (name_b, b) in zip(ordered, ordered[1:]):
        if b.begin < a.end:
            raise FormatError(f"{source}: tensors {name_a!r} and {name_b!r} overlap")
    return TensorArchive(entries=entries, payload=payload, metadata={str(k): str(v) for k, v in metadata.items()})


def write_archive(path, tensors: dict[str, np.ndarray], metadata: dict[str, str] | None = None) -> None:
    """Write tensors in name order; output bytes depend only on the inputs."""
    header: dict[str, object] = {}
    if metadata:
        header["__metadata__"] = {str(k): str(v) for k, v in sorted(metadata.items())}
    chunks = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        if arr.dtype not in _DTYPE_NAMES:
            raise FormatError(f"cannot store tensor {name!r} of dtype {arr.dtype}")
        raw = arr.tobytes()
        header[name] = {
            "dtype": _DTYPE_NAMES[arr.dtype],
            "shape": list(arr.shape),
            "data_offsets": [offset, offset + len(raw)],
        }
        chunks.append(raw)
        offset += len(raw)
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    blob += b" " * (-len(blob) % 8)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for raw in chunks:
            fh.write(raw)


@dataclass
class BlockWeights:
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    attn_w: np.ndarray
    attn_b: np.ndarray
    proj_w: np.ndarray
    proj_b: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    fc_w: np.ndarray
    fc_b: np.ndarray
    mlp_proj_w: np.ndarray
    mlp_proj_b: np.ndarray


# attribute -> (archive suffix, shape as a function of d)
_BLOCK_LAYOUT = {
    "ln1_g": ("ln_1.weight", lambda d: (d,)),
    "ln1_b": ("ln_1.bias", lambda d: (d,)),
    "attn_w": ("attn.c_attn.weight", lambda d: (d, 3 * d)),
    "attn_b": ("attn.c_attn.bias", lambda d: (3 * d,)),
    "proj_w": ("attn.c_proj.weight", lambda d: (d, d)),
    "proj_b": ("attn.c_proj.bias", lambda d: (d,)),
    "ln2_g": ("ln_2.weight", lambda d: (d,)),
    "ln2_b": ("ln_2.bias", lambda d: (d,)),
    "fc_w": ("mlp.c_fc.weight", lambda d: (d, 4 * d)),
    "fc_b": ("mlp.c_fc.bias", lambda d: (4 * d,)),
    "mlp_proj_w": ("mlp.c_proj.weight", lambda d: (4 * d, d)),
    "mlp_proj_b": ("mlp.c_proj.bias", lambda d: (d,)),
}


@dataclass
class Checkpoint:
    """GPT-2 weights with a tied unembedding (logits = x @ wte.T, no bias).

    Projection matrices are stored ``(in, out)`` so every affine map is
    ``x @ w + b``.
    """

    config: ModelConfig
    wte: np.ndarray
    wpe: np.ndarray
    blocks: list[BlockWeights]
    lnf_g: np.ndarray
    lnf_b: np.ndarray

    def tensors(self) -> dict[str, np.ndarray]:
        out = {"wte.weight": self.wte, "wpe.weight": self.wpe,
               "ln_f.weight": self.lnf_g, "ln_f.bias": self.lnf_b}
        for i, blk in enumerate(self.blocks):
            for attr, (suffix, _) in _BLOCK_LAYOUT.items():
                out[f"h.{i}.{suffix}"] = getattr(blk, attr)
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, Checkpoint) or self.config != other.config:
            return False
        a, b = self.tensors(), other.tensors()
        return a.keys() == b.keys() and all(
            a[k].dtype == b[k].dtype and np.array_equal(a[k], b[k]) for k in a
        )


def _as_f32(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=np.float32)


def load_gpt2_checkpoint(archive: TensorArchive, n_heads: int | None = None) -> Checkpoint:
    names = set(archive.entries)
    prefix = "transformer." if "transformer.wte.weight" in names and "wte.weight" not in names else ""

    def get(name: str) -> np.ndarray:
        return archive.tensor(prefix + name)

    wte = get("wte.weight")
    wpe = get("wpe.weight")
    if wte.ndim != 2 or wpe.ndim != 2:
        raise FormatError("embedding tensors must be 2-D")
    m, d = wte.shape
    c, d_pos = wpe.shape
    if d_pos != d:
        raise FormatError(f"wpe.weight width {d_pos} differs from wte.weight width {d}")

    layer_ids = set()
    for name in names:
        rest = name[len(prefix):] if name.startswith(prefix) else name
        if rest.startswith("h."):
            idx = rest.split(".")[1]
            if idx.isdigit():
                layer_ids.add(int(idx))
    n_layers = len(layer_ids)
    if n_layers == 0:
        raise MissingTensorError(prefix + "h.0.ln_1.weight")
    if layer_ids != set(range(n_layers)):
        missing = min(set(range(max(layer_ids) + 1)) - layer_ids)
        raise MissingTensorError(f"{prefix}h.{missing}.ln_1.weight")

    if n_heads is None:
        if "n_head" in archive.metadata:
            n_heads = int(archive.metadata["n_head"])
        else:
            n_heads = GPT2_HEADS_BY_WIDTH.get(d, max(1, d // 64))
    config = ModelConfig(n_layers=n_layers, d_model=d, n_heads=n_heads, vocab_size=m, n_ctx=c)

    for head_name in ("lm_head.weight",):
        if head_name in names or prefix + head_name in names:
            head = archive.tensor(head_name if head_name in names else prefix + head_name)
            if head.shape != wte.shape or not np.array_equal(head, wte):
                raise FormatError("untied checkpoint: lm_head.weight differs from wte.weight")

    blocks = []
    for i in range(n_layers):
        kwargs = {}
        for attr, (suffix, shape_fn) in _BLOCK_LAYOUT.items():
            name = f"h.{i}.{suffix}"
            arr = get(name)
            if arr.shape != shape_fn(d):
                raise FormatError(
                    f"tensor {prefix + name!r} has shape {list(arr.shape)}, expected {list(shape_fn(d))}"
                )
            kwargs[attr] = _as_f32(arr)
        blocks.append(BlockWeights(**kwargs))

    lnf_g, lnf_b = get("ln_f.weight"), get("ln_f.bias")
    for name, arr in (("ln_f.weight", lnf_g), ("ln_f.bias", lnf_b)):
        if arr.shape != (d,):
            raise FormatError(f"tensor {prefix + name!r} has shape {list(arr.shape)}, expected [{d}]")

    return Checkpoint(
        config=config,
        wte=_as_f32(wte),
        wpe=_as_f32(wpe),
        blocks=blocks,
        lnf_g=_as_f32(lnf_g),
        lnf_b=_as_f32(lnf_b),
    )


def load_checkpoint(path, n_heads: int | None = None) -> Checkpoint:
    return load_gpt2_checkpoint(read_archive(path), n_heads=n_heads)


def toy_tensors(config: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Seeded GPT-2-shaped weights: N(0, 0.02) matrices/biases, unit norms."""
    rng = np.random.default_rng(seed)
    d = config.d_model

    def normal(*shape):
        return rng.normal(0.0, 0.02, size=shape).astype(np.float32)

    out = {"wte.weight": normal(config.vocab_size, d), "wpe.weight": normal(config.n_ctx, d)}
    for i in range(config.n_layers):
        for suffix, shape_fn in _BLOCK_LAYOUT.values():
            shape = shape_fn(d)
            if suffix.startswith("ln_"):
                fill = 1.0 if suffix.endswith("weight") else 0.0
                out[f"h.{i}.{suffix}"] = np.full(shape, fill, dtype=np.float32)
            else:
                out[f"h.{i}.{suffix}"] = normal(*shape)
    out["ln_f.weight"] = np.ones(d, dtype=np.float32)
    out["ln_f.bias"] = np.zeros(d, dtype=np.float32)
    return out


def save_toy_checkpoint(config: ModelConfig, seed: int, path) -> None:
    write_archive(path, toy_tensors(config, seed), metadata={"n_head": str(config.n_heads)})


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    write_archive(path, ckpt.tensors(), metadata={"n_head": str(ckpt.config.n_heads)})
