"""Parameter storage, initialization, the Adam update, and checkpointing."""

from __future__ import annotations

import json
import math
import struct

import numpy as np

from .autodiff import Tensor
from .errors import ArgumentError, CheckpointError, NoCheckpointError, NumericError

CHECKPOINT_MAGIC = b"PLNK0001"

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def as_seed_sequence(seed) -> np.random.SeedSequence:
    """Accept a raw entropy int (or tuple) as well as a spawned sequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def glorot_init(fan_in: int, fan_out: int, seed, dtype=np.float64) -> Tensor:
    """Uniform init on [-b, b] with b = sqrt(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise ArgumentError(f"glorot_init fans must be >= 1, got ({fan_in}, {fan_out})")
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    rng = np.random.default_rng(seed)
    values = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)
    return Tensor(values, requires_grad=True)


class ParamStore:
    """Named trainable tensors with Adam moment state and a shared step counter.

    Insertion order is preserved and is the canonical parameter order for
    checkpoints and gradient checks.
    """

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._params:
            raise ArgumentError(f"parameter {name!r} already registered")
        if tensor.values.dtype != self.dtype:
            tensor = Tensor(tensor.values.astype(self.dtype), requires_grad=True)
        if not tensor.requires_grad:
            tensor = Tensor(tensor.values, requires_grad=True)
        self._params[name] = tensor
        self._m[name] = np.zeros_like(tensor.values)
        self._v[name] = np.zeros_like(tensor.values)
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def snapshot(self) -> dict:
        """Deep copy of values and step, for best-epoch bookkeeping."""
        return {
            "step": self.step,
            "values": {name: t.values.copy() for name, t in self._params.items()},
        }

    def restore(self, snap: dict) -> None:
        for name, values in snap["values"].items():
            t = self._params[name]
            if t.values.shape != values.shape:
                raise CheckpointError(f"snapshot shape mismatch for {name!r}")
            t.values[...] = values
        self.step = snap["step"]


def adam_step(store: ParamStore, lr: float = 0.001, beta1: float = ADAM_BETA1,
              beta2: float = ADAM_BETA2, eps: float = ADAM_EPS) -> None:
    """Bias-corrected Adam update over every parameter; zeroes gradients.

    The step aborts before mutating anything if any gradient is non-finite.
    """
    for name, t in store._params.items():
        if t.grad is not None and not np.all(np.isfinite(t.grad)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    store.step += 1
    t_step = store.step
    corr1 = 1.0 - beta1 ** t_step
    corr2 = 1.0 - beta2 ** t_step
    for name, t in store._params.items():
        g = t.grad
        m = store._m[name]
        v = store._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        t.values -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
        t.zero_grad()


def save_checkpoint(path, store: ParamStore, model: str | None = None) -> None:
    """Single-file format: magic, manifest length, JSON manifest, then
    row-major float64 little-endian values per parameter in manifest order.

    ``model`` stamps the producing model's name into the manifest so a
    checkpoint cannot silently be loaded under the wrong model."""
    manifest = {
        "step": store.step,
        "params": [{"name": n, "shape": list(t.values.shape)} for n, t in store._params.items()],
    }
    if model is not None:
        manifest["model"] = str(model)
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for t in store._params.values():
            fh.write(np.ascontiguousarray(t.values, dtype="<f8").tobytes())


def load_checkpoint(path, dtype=np.float64, expect_model: str | None = None) -> ParamStore:
    try:
        fh = open(path, "rb")
    except FileNotFoundError as exc:
        raise NoCheckpointError(f"checkpoint not found: {path}") from exc
    with fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"not a checkpoint file: {path}")
        (mlen,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(mlen).decode("utf-8"))
        saved_model = manifest.get("model")
        if (expect_model is not None and saved_model is not None
                and saved_model != expect_model):
            raise CheckpointError(
                f"checkpoint was trained as {saved_model!r}, not {expect_model!r}")
        store = ParamStore(dtype=dtype)
        for entry in manifest["params"]:
            rows, cols = entry["shape"]
            raw = fh.read(rows * cols * 8)
            if len(raw) != rows * cols * 8:
                raise CheckpointError(f"truncated checkpoint: {path}")
            values = np.frombuffer(raw, dtype="<f8").reshape(rows, cols).astype(dtype)
            store.add(entry["name"], Tensor(values, requires_grad=True))
        store.step = int(manifest["step"])
    return store
