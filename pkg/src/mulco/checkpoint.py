"""Binary model checkpoints.

Layout, all integers little endian:

    magic   4 bytes  b"MULC"
    version u32      format version, currently 1
    hlen    u32      byte length of the metadata block
    meta    hlen     UTF-8 JSON: model kind, categories, vocab, dims,
                     and an ordered tensor manifest of [name, shape]
    tensors          raw float32 values, one block per manifest entry
    crc     u32      CRC-32 of every preceding byte

Tensors are stored in the manifest's order and converted to float64 on
load.  Loading fails loudly on a bad magic, an unsupported version, or a
checksum mismatch (truncation, corruption).
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .model import LinearHead, LSTMDir, ModelParams, Vocab, named_params

MAGIC = b"MULC"
VERSION = 1


class CheckpointError(ValueError):
    """Raised when a checkpoint cannot be read back."""


def save_params(path: str | Path, params: ModelParams) -> None:
    tensors = named_params(params)
    meta = {
        "kind": params.kind,
        "categories": list(params.categories),
        "max_len": params.max_len,
        "use_recurrent_encoder": params.use_recurrent_encoder,
        "variant": params.variant,
        "scope_names": list(params.scope_names),
        "vocab": list(params.vocab.chars),
        "tensors": [[name, list(arr.shape)] for name, arr in tensors],
    }
    blob = json.dumps(meta, ensure_ascii=False, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob]
    parts.extend(
        np.ascontiguousarray(arr, dtype="<f4").tobytes() for _, arr in tensors
    )
    payload = b"".join(parts)
    payload += struct.pack("<I", zlib.crc32(payload))
    Path(path).write_bytes(payload)


def load_params(path: str | Path) -> ModelParams:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint (bad magic)")
    (stored_crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) != stored_crc:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version} (expected {VERSION})"
        )
    try:
        meta = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable metadata: {exc}") from exc
    offset = 12 + hlen
    arrays: dict[str, np.ndarray] = {}
    for name, shape in meta["tensors"]:
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = offset + 4 * size
        if end > len(raw) - 4:
            raise CheckpointError(f"{path}: tensor {name} extends past end of file")
        flat = np.frombuffer(raw[offset:end], dtype="<f4")
        arrays[name] = flat.astype(np.float64).reshape(shape)
        offset = end
    if offset != len(raw) - 4:
        raise CheckpointError(f"{path}: trailing bytes after tensor data")
    return _assemble(meta, arrays)


def _assemble(meta: dict, arrays: dict[str, np.ndarray]) -> ModelParams:
    layers: list[tuple[LSTMDir, LSTMDir]] = []
    i = 0
    while f"layers.{i}.fwd.w" in arrays:
        dirs = tuple(
            LSTMDir(
                w=arrays[f"layers.{i}.{tag}.w"],
                u=arrays[f"layers.{i}.{tag}.u"],
                b=arrays[f"layers.{i}.{tag}.b"],
            )
            for tag in ("fwd", "bwd")
        )
        layers.append((dirs[0], dirs[1]))
        i += 1
    heads = {}
    for name, _ in meta["tensors"]:
        if name.startswith("heads.") and name.endswith(".w"):
            base = name[len("heads.") : -len(".w")]
            heads[base] = LinearHead(w=arrays[name], b=arrays[f"heads.{base}.b"])
    return ModelParams(
        kind=meta["kind"],
        categories=tuple(meta["categories"]),
        max_len=meta["max_len"],
        use_recurrent_encoder=meta["use_recurrent_encoder"],
        variant=meta["variant"],
        scope_names=tuple(meta["scope_names"]),
        vocab=Vocab(tuple(meta["vocab"])),
        embeddings=arrays["embeddings"],
        layers=layers,
        heads=heads,
    )
