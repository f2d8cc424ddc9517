"""Binary policy checkpoints.

Layout (all integers little-endian):
  magic       8 bytes  b"SKYSEPCK"
  version     u32      format version (currently 1)
  fleet id    1 byte   ASCII fleet letter
  seed        u64      training seed
  episodes    u32      number of training episodes behind these weights
  n_tensors   u16
  per tensor: name_len u16, name utf-8, ndim u8, dims u32 * ndim
  payload     float32  tensor values, C order, in declared tensor order

Round-trips are byte-identical, which the determinism checks rely on.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .neuralnet import PolicyNetwork

MAGIC = b"SKYSEPCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    fleet_id: str
    seed: int
    episodes: int
    tensors: dict[str, np.ndarray]   # name -> float32 array, insertion order


def save_checkpoint(path: str | Path, net: PolicyNetwork, fleet_id: str,
                    seed: int, episodes: int) -> None:
    """Serialize the network parameters for one fleet."""
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION),
             fleet_id.encode("ascii")[:1],
             struct.pack("<QI", seed, episodes),
             struct.pack("<H", len(net.params()))]
    payload = []
    for p in net.params():
        name = p.name.encode("utf-8")
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        parts.append(struct.pack("<B", p.value.ndim))
        parts.append(struct.pack(f"<{p.value.ndim}I", *p.value.shape))
        payload.append(np.ascontiguousarray(p.value, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts) + b"".join(payload))


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Parse a checkpoint file, validating structure and payload size."""
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    off = 8
    (version,) = struct.unpack_from("<I", raw, off); off += 4
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {version} "
            f"(expected {FORMAT_VERSION})")
    fleet_id = raw[off:off + 1].decode("ascii"); off += 1
    seed, episodes = struct.unpack_from("<QI", raw, off); off += 12
    (n_tensors,) = struct.unpack_from("<H", raw, off); off += 2
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for _ in range(n_tensors):
        (name_len,) = struct.unpack_from("<H", raw, off); off += 2
        name = raw[off:off + name_len].decode("utf-8"); off += name_len
        (ndim,) = struct.unpack_from("<B", raw, off); off += 1
        dims = struct.unpack_from(f"<{ndim}I", raw, off); off += 4 * ndim
        shapes.append((name, tuple(dims)))
    expected = sum(int(np.prod(s)) for _, s in shapes) * 4
    found = len(raw) - off
    if found != expected:
        raise CheckpointError(
            f"{path}: payload size mismatch, expected {expected} bytes, "
            f"found {found}")
    tensors = {}
    for name, shape in shapes:
        n = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=off)
        off += n * 4
        tensors[name] = arr.reshape(shape).astype(np.float32)
    return Checkpoint(fleet_id=fleet_id, seed=seed, episodes=episodes,
                      tensors=tensors)


def apply_checkpoint(net: PolicyNetwork, ckpt: Checkpoint) -> None:
    """Load checkpoint tensors into a network, verifying names and shapes."""
    params = net.params()
    names = [p.name for p in params]
    if list(ckpt.tensors) != names:
        raise CheckpointError(
            f"tensor list mismatch: checkpoint has {list(ckpt.tensors)}, "
            f"network expects {names}")
    for p in params:
        arr = ckpt.tensors[p.name]
        if arr.shape != p.value.shape:
            raise CheckpointError(
                f"tensor {p.name}: shape {arr.shape} does not match "
                f"network shape {p.value.shape}")
        p.value = arr.astype(net.dtype)
        p.grad = np.zeros_like(p.value)
