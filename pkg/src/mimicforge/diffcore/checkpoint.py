"""Checkpoint serialization.

Layout: magic "MFCK" | u32 version | u32 hash length + config-hash bytes |
u64 step count | u32 tensor count | per tensor: u32 name length, name
(utf-8), u32 ndim, u32 dims..., little-endian float32 data. Tensors are
written in sorted-name order so identical states serialize byte-identically.
"""

from __future__ import annotations

import struct

import numpy as np
import torch

_MAGIC = b"MFCK"
_VERSION = 1


class CheckpointError(ValueError):
    pass


def _write_tensor(f, name: str, tensor: torch.Tensor) -> None:
    arr = tensor.detach().cpu().numpy().astype("<f4")
    nb = name.encode("utf-8")
    f.write(struct.pack("<I", len(nb)) + nb)
    f.write(struct.pack("<I", arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
    f.write(np.ascontiguousarray(arr).tobytes())


def save_checkpoint(path, state_dict: dict[str, torch.Tensor], config_hash: str = "", step: int = 0) -> None:
    names = sorted(state_dict)
    hb = config_hash.encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC + struct.pack("<I", _VERSION))
        f.write(struct.pack("<I", len(hb)) + hb)
        f.write(struct.pack("<Q", step))
        f.write(struct.pack("<I", len(names)))
        for name in names:
            _write_tensor(f, name, state_dict[name])


def load_checkpoint(path) -> tuple[dict[str, torch.Tensor], str, int]:
    """Returns (state_dict, config_hash, step)."""
    with open(path, "rb") as f:
        head = f.read(8)
        if len(head) != 8 or head[:4] != _MAGIC:
            raise CheckpointError(f"bad checkpoint magic in {path}")
        (version,) = struct.unpack("<I", head[4:])
        if version != _VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", f.read(4))
        config_hash = f.read(hlen).decode("utf-8")
        (step,) = struct.unpack("<Q", f.read(8))
        (count,) = struct.unpack("<I", f.read(4))
        state = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", f.read(4))
            name = f.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<I", f.read(4))
            dims = struct.unpack(f"<{ndim}I", f.read(4 * ndim)) if ndim else ()
            numel = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(f.read(numel * 4), dtype="<f4")
            if data.size != numel:
                raise CheckpointError(f"truncated tensor {name} in {path}")
            state[name] = torch.from_numpy(data.reshape(dims).copy())
    return state, config_hash, step
