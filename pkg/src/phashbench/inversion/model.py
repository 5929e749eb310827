"""The hash-to-image decoder and its checkpoint format.

Stack: dense (N -> 8*8*F), reshape to 8x8xF, two upsampling stages (nearest
2x upsample, 3x3 conv, residual block), then a 3x3 conv to one channel and a
logistic squash.  Output is 32x32x1 for any supported hash length.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..hash_core import BitHash
from ..rng import substream
from .layers import Conv3x3, Dense, NearestUpsample2x, Param, ResidualBlock, Sigmoid

SUPPORTED_BITS = (64, 256, 1024)
BASE_SIDE = 8
OUT_SIDE = 32
_MAGIC = b"PHBDEC01"


class CorruptCheckpointError(ValueError):
    """Checkpoint bytes do not match the documented format."""


def bits_to_pm1(h: BitHash) -> np.ndarray:
    """Hash bits as a float vector of +-1 (zero-centered network input)."""
    return h.bits().astype(np.float64) * 2.0 - 1.0


class DecoderModel:
    """Decoder network; construction is deterministic given ``init_seed``."""

    def __init__(self, n_bits: int, features: int = 32, init_seed: int = 0) -> None:
        if n_bits not in SUPPORTED_BITS:
            raise ValueError(f"n_bits must be one of {SUPPORTED_BITS}, got {n_bits}")
        if features < 1:
            raise ValueError("features must be positive")
        self.n_bits = n_bits
        self.features = features
        rng = substream(init_seed, "decoder-init")
        f = features
        self.dense = Dense("dense", n_bits, BASE_SIDE * BASE_SIDE * f, rng)
        self.up1 = NearestUpsample2x()
        self.conv1 = Conv3x3("stage1.conv", f, f, rng)
        self.res1 = ResidualBlock("stage1.res", f, rng)
        self.up2 = NearestUpsample2x()
        self.conv2 = Conv3x3("stage2.conv", f, f, rng)
        self.res2 = ResidualBlock("stage2.res", f, rng)
        self.conv_out = Conv3x3("out.conv", f, 1, rng)
        self.squash = Sigmoid()
        self._layers = [
            self.dense,
            self.up1,
            self.conv1,
            self.res1,
            self.up2,
            self.conv2,
            self.res2,
            self.conv_out,
            self.squash,
        ]

    @property
    def params(self) -> list[Param]:
        return [p for layer in self._layers for p in layer.params]

    def num_params(self) -> int:
        return int(sum(p.value.size for p in self.params))

    def zero_grads(self) -> None:
        for p in self.params:
            p.grad[...] = 0.0

    def forward_batch(self, x: np.ndarray) -> np.ndarray:
        """(B, n_bits) +-1 inputs -> (B, 32, 32, 1) outputs in (0, 1)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_bits:
            raise ValueError(f"expected (B, {self.n_bits}), got {x.shape}")
        b = x.shape[0]
        y = self.dense.forward(x).reshape(b, BASE_SIDE, BASE_SIDE, self.features)
        y = self.res1.forward(self.conv1.forward(self.up1.forward(y)))
        y = self.res2.forward(self.conv2.forward(self.up2.forward(y)))
        return self.squash.forward(self.conv_out.forward(y))

    def backward_batch(self, dout: np.ndarray) -> None:
        """Backpropagate d(loss)/d(output), accumulating parameter grads."""
        d = self.squash.backward(dout)
        d = self.conv_out.backward(d)
        d = self.up2.backward(self.conv2.backward(self.res2.backward(d)))
        d = self.up1.backward(self.conv1.backward(self.res1.backward(d)))
        b = d.shape[0]
        self.dense.backward(d.reshape(b, BASE_SIDE * BASE_SIDE * self.features))


def forward(model: DecoderModel, h: BitHash) -> np.ndarray:
    """Reconstruct one hash into a 32x32x1 image."""
    if h.n_bits != model.n_bits:
        raise ValueError(f"hash has {h.n_bits} bits, model expects {model.n_bits}")
    return model.forward_batch(bits_to_pm1(h)[np.newaxis, :])[0]


def backward(
    model: DecoderModel, h: BitHash, target: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """MSE loss against ``target`` plus exact gradients for every parameter."""
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (OUT_SIDE, OUT_SIDE, 1):
        raise ValueError(f"target must be (32, 32, 1), got {target.shape}")
    model.zero_grads()
    out = model.forward_batch(bits_to_pm1(h)[np.newaxis, :])
    diff = out - target[np.newaxis]
    loss = float(np.mean(diff**2))
    model.backward_batch(2.0 * diff / diff.size)
    return loss, {p.name: p.grad.copy() for p in model.params}


def save_checkpoint(path: str | Path, model: DecoderModel) -> None:
    """Binary checkpoint: magic, dims, then named little-endian float32 arrays."""
    chunks = [_MAGIC, struct.pack("<III", model.n_bits, model.features, len(model.params))]
    for p in model.params:
        name = p.name.encode("ascii")
        chunks.append(struct.pack("<H", len(name)))
        chunks.append(name)
        chunks.append(struct.pack("<B", p.value.ndim))
        chunks.append(struct.pack(f"<{p.value.ndim}I", *p.value.shape))
        chunks.append(p.value.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> DecoderModel:
    raw = Path(path).read_bytes()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise CorruptCheckpointError("bad magic")
    off = len(_MAGIC)

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(raw):
            raise CorruptCheckpointError("truncated checkpoint")
        out = raw[off : off + n]
        off += n
        return out

    n_bits, features, n_params = struct.unpack("<III", take(12))
    try:
        model = DecoderModel(n_bits, features)
    except ValueError as exc:
        raise CorruptCheckpointError(str(exc)) from exc
    by_name = {p.name: p for p in model.params}
    if n_params != len(by_name):
        raise CorruptCheckpointError(
            f"checkpoint has {n_params} arrays, model needs {len(by_name)}"
        )
    seen = set()
    for _ in range(n_params):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("ascii")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape)
        param = by_name.get(name)
        if param is None or name in seen:
            raise CorruptCheckpointError(f"unexpected array {name!r}")
        if param.value.shape != shape:
            raise CorruptCheckpointError(
                f"{name}: shape {shape} != expected {param.value.shape}"
            )
        param.value[...] = data.astype(np.float64)
        seen.add(name)
    if off != len(raw):
        raise CorruptCheckpointError("trailing bytes after last array")
    return model
