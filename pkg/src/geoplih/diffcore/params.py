"""Parameter storage, initialisation, Adam, and checkpoint files."""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from ..errors import CheckpointError, ContractError

FORMAT_VERSION = 1
_MAGIC = b"GEOPLIH-CKPT\n"


def _name_rng(seed: int, name: str) -> np.random.Generator:
    # one stream per parameter name, so adding parameters never perturbs others
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])


@dataclass
class ParamStore:
    entries: dict[str, np.ndarray] = field(default_factory=dict)
    rng_seed: int = 0
    moments: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    step: int = 0
    meta: dict = field(default_factory=dict)

    def __contains__(self, name):
        return name in self.entries

    def __getitem__(self, name):
        return self.entries[name]

    def __setitem__(self, name, value):
        value = np.asarray(value, dtype=np.float64)
        if name in self.entries and self.entries[name].shape != value.shape:
            raise ContractError(
                f"shape of {name!r} is fixed at {self.entries[name].shape}, got {value.shape}"
            )
        self.entries[name] = value

    def names(self) -> list[str]:
        return list(self.entries)

    def slice(self, prefix: str) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.entries.items() if k.startswith(prefix)}

    def copy(self) -> "ParamStore":
        return ParamStore(
            entries={k: v.copy() for k, v in self.entries.items()},
            rng_seed=self.rng_seed,
            moments={k: (m.copy(), v.copy()) for k, (m, v) in self.moments.items()},
            step=self.step,
            meta=json.loads(json.dumps(self.meta)),
        )

    def add_linear(self, name: str, n_in: int, n_out: int, gain: float = 1.0) -> None:
        """Glorot-uniform weight ``[n_in, n_out]`` and zero bias."""
        limit = gain * np.sqrt(6.0 / (n_in + n_out))
        self[f"{name}.weight"] = _name_rng(self.rng_seed, f"{name}.weight").uniform(
            -limit, limit, size=(n_in, n_out)
        )
        self[f"{name}.bias"] = np.zeros(n_out)

    def add_mlp(self, name: str, sizes: Iterable[int], final_gain: float = 1.0) -> None:
        sizes = list(sizes)
        for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = k == len(sizes) - 2
            self.add_linear(f"{name}.{k}", a, b, gain=final_gain if last else 1.0)

    def add_vector(self, name: str, n: int, scale: float = 1.0) -> None:
        limit = scale * np.sqrt(6.0 / (n + 1))
        self[name] = _name_rng(self.rng_seed, name).uniform(-limit, limit, size=(n,))


def adam_step(
    store: ParamStore,
    grads: Mapping[str, np.ndarray],
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    t: int | None = None,
) -> ParamStore:
    """One Adam update with bias correction, applied in place.

    ``t`` defaults to ``store.step + 1``; the store's step counter is set to
    the value used. Parameters missing from ``grads`` are left untouched.
    """
    b1, b2 = betas
    t = store.step + 1 if t is None else int(t)
    if t < 1:
        raise ContractError("Adam step count starts at 1")
    for name, g in grads.items():
        if name not in store.entries:
            raise ContractError(f"gradient for unknown parameter {name!r}")
        p = store.entries[name]
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ContractError(f"gradient shape {g.shape} does not match {name!r} {p.shape}")
        m, v = store.moments.get(name, (np.zeros_like(p), np.zeros_like(p)))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        store.moments[name] = (m, v)
        if lr == 0.0:
            continue
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        store.entries[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    store.step = t
    return store


# checkpoint container:
#   magic line, u64 header length, JSON header, raw little-endian float64 blob

def save_checkpoint(store: ParamStore, path) -> None:
    blob = io.BytesIO()
    tensors = []

    def put(kind, name, arr):
        arr = np.ascontiguousarray(arr, dtype="<f8")
        tensors.append({"kind": kind, "name": name, "shape": list(arr.shape),
                        "offset": blob.tell()})
        blob.write(arr.tobytes())

    for name in sorted(store.entries):
        put("param", name, store.entries[name])
    for name in sorted(store.moments):
        m, v = store.moments[name]
        put("m", name, m)
        put("v", name, v)
    header = {
        "format_version": FORMAT_VERSION,
        "rng_seed": int(store.rng_seed),
        "step": int(store.step),
        "meta": store.meta,
        "tensors": tensors,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        fh.write(blob.getvalue())


def load_checkpoint(path) -> ParamStore:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not raw.startswith(_MAGIC):
        raise CheckpointError(f"{path} is not a checkpoint file")
    try:
        return _decode(raw, path)
    except CheckpointError:
        raise
    except (ValueError, KeyError, TypeError, struct.error) as exc:
        raise CheckpointError(f"corrupt or truncated checkpoint {path}: {exc}") from exc


def _decode(raw: bytes, path) -> ParamStore:
    pos = len(_MAGIC)
    (n,) = struct.unpack("<Q", raw[pos:pos + 8])
    pos += 8
    header = json.loads(raw[pos:pos + n].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {header.get('format_version')} in {path}"
        )
    data = raw[pos + n:]
    store = ParamStore(rng_seed=header["rng_seed"], step=header["step"], meta=header["meta"])
    halves: dict[str, dict[str, np.ndarray]] = {}
    for t in header["tensors"]:
        count = int(np.prod(t["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=t["offset"])
        arr = arr.reshape(t["shape"]).astype(np.float64)
        if t["kind"] == "param":
            store.entries[t["name"]] = arr
        else:
            halves.setdefault(t["name"], {})[t["kind"]] = arr
    for name, mv in halves.items():
        store.moments[name] = (mv["m"], mv["v"])
    return store
