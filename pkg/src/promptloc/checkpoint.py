"""Self-describing binary checkpoint.

Layout::

    magic      b"PLCKPT\\n"
    version    uint32 LE
    hlen       uint64 LE
    header     hlen bytes of UTF-8 JSON (architecture, vocab, stage, tensor index)
    payload    concatenated little-endian float32 tensors
    crc32      uint32 LE over header + payload
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .diffusion import UNet, make_schedule
from .pipeline import Pipeline
from .text import DualEncoder, ImageEncoder, TextEncoder, Vocab

MAGIC = b"PLCKPT\n"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<IQ")


class CheckpointError(RuntimeError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    """The file is shorter/longer than its index says or its checksum fails."""


def _tensors(p: Pipeline):
    out = {"vocab.embeddings": p.vocab.embeddings, "dual.log_scale": p.dual.log_scale.data}
    for prefix, module in (("text.", p.text), ("image.", p.dual.image), ("unet.", p.unet)):
        for k, v in module.state_dict().items():
            out[prefix + k] = v
    return out


def to_bytes(p: Pipeline, meta=None) -> bytes:
    tensors = _tensors(p)
    index, chunks, offset = [], [], 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "stage": p.stage,
        "history": list(p.history),
        "categories": list(p.categories),
        "schedule": p.schedule.to_dict(),
        "text": p.text.config(),
        "image": p.dual.image.config(),
        "unet": p.unet.arch,
        "vocab": p.vocab.to_dict(),
        "trained": bool(p.dual.trained),
        "meta": meta or {},
        "tensors": index,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = hbytes + b"".join(chunks)
    return MAGIC + _PREFIX.pack(FORMAT_VERSION, len(hbytes)) + body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(p: Pipeline, path, meta=None):
    data = to_bytes(p, meta)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def _parse(raw: bytes):
    if len(raw) < len(MAGIC) and MAGIC.startswith(raw):
        raise CheckpointTruncatedError("checkpoint truncated inside the magic")
    if not raw.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = len(MAGIC)
    if len(raw) < pos + _PREFIX.size:
        raise CheckpointTruncatedError("checkpoint truncated inside the prefix")
    version, hlen = _PREFIX.unpack_from(raw, pos)
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})")
    pos += _PREFIX.size
    if len(raw) < pos + hlen:
        raise CheckpointTruncatedError("checkpoint truncated inside the header")
    try:
        header = json.loads(raw[pos : pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointTruncatedError("checkpoint header is corrupted") from None
    payload_len = sum(4 * int(np.prod(t["shape"], dtype=np.int64)) for t in header["tensors"])
    expected = pos + hlen + payload_len + 4
    if len(raw) != expected:
        raise CheckpointTruncatedError(f"checkpoint has {len(raw)} bytes, index implies {expected}")
    body = raw[pos:-4]
    (crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointTruncatedError("checkpoint checksum mismatch (corrupted bytes)")
    payload = raw[pos + hlen : -4]
    tensors = {}
    for t in header["tensors"]:
        n = int(np.prod(t["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f4", count=n, offset=t["offset"])
        tensors[t["name"]] = arr.reshape(t["shape"]).astype(np.float32)
    return header, tensors


def from_bytes(raw: bytes):
    """Returns (Pipeline, meta). Nothing is built unless the whole file verifies."""
    header, tensors = _parse(raw)
    vocab = Vocab.from_dict(header["vocab"], tensors["vocab.embeddings"])
    text = TextEncoder(**header["text"])
    image = ImageEncoder(widths=tuple(header["image"]["widths"]), embed_dim=header["image"]["embed_dim"])
    arch = dict(header["unet"])
    arch["channels"] = tuple(arch["channels"])
    unet = UNet(**arch)
    for prefix, module in (("text.", text), ("image.", image), ("unet.", unet)):
        module.load_state_dict({k[len(prefix) :]: v for k, v in tensors.items() if k.startswith(prefix)})
        module.freeze()
    dual = DualEncoder(vocab, text, image, log_scale=tensors["dual.log_scale"])
    dual.log_scale.requires_grad = False
    dual.trained = header["trained"]
    s = header["schedule"]
    pipeline = Pipeline(
        dual=dual,
        unet=unet,
        categories=list(header["categories"]),
        schedule=make_schedule(s["T"], s["beta_start"], s["beta_end"]),
        stage=header["stage"],
        history=list(header["history"]),
    )
    return pipeline, header["meta"]


def load_checkpoint(path):
    return from_bytes(Path(path).read_bytes())
