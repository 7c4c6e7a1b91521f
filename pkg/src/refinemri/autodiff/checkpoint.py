"""On-disk checkpoints: ``manifest.json`` plus one raw little-endian file per array."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .module import Module

FORMAT_VERSION = 1
MANIFEST = "manifest.json"


class CheckpointError(IOError):
    """A checkpoint directory is missing, inconsistent or corrupted."""


def _safe(name: str) -> str:
    return name.replace("/", "_")


def _write_array(path: Path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr)
    arr.astype(arr.dtype.newbyteorder("<"), copy=False).tofile(path)


def _read_array(path: Path, dtype: str, shape, label: str) -> np.ndarray:
    if not path.exists():
        raise CheckpointError(f"checkpoint tensor {label!r}: file {path.name} is missing")
    dt = np.dtype(dtype).newbyteorder("<")
    expected = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    actual = path.stat().st_size
    if actual != expected:
        raise CheckpointError(
            f"checkpoint tensor {label!r}: {path.name} holds {actual} bytes, expected {expected}"
        )
    return np.fromfile(path, dtype=dt).astype(np.dtype(dtype)).reshape(shape)


def save_checkpoint(
    directory: str | os.PathLike,
    modules: dict[str, Module],
    kind: str,
    config: dict | None = None,
    rng_state: dict | None = None,
    extra: dict | None = None,
    arrays: dict[str, np.ndarray] | None = None,
    optimizer_state: bool = False,
) -> Path:
    """Write every parameter and buffer of ``modules`` under ``directory``.

    ``arrays`` holds additional named arrays (e.g. replay-buffer contents).
    With ``optimizer_state`` the Adam moments are stored next to each parameter.
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    entries = []

    def emit(label: str, arr: np.ndarray, role: str, **meta):
        fname = _safe(label) + ".bin"
        _write_array(out / fname, arr)
        entries.append(
            {"name": label, "role": role, "shape": list(arr.shape), "dtype": arr.dtype.name, "file": fname, **meta}
        )

    for prefix, module in modules.items():
        for name, p in module.named_parameters():
            label = f"{prefix}.{name}"
            emit(label, p.data, "parameter", step_count=p.step_count)
            if optimizer_state:
                emit(label + "@adam_m", p.adam_m, "adam_m")
                emit(label + "@adam_v", p.adam_v, "adam_v")
        for name, buf in module.named_buffers():
            emit(f"{prefix}.{name}", buf, "buffer")
    for name, arr in (arrays or {}).items():
        emit(f"array.{name}", np.asarray(arr), "array")

    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config": config or {},
        "tensors": entries,
        "rng_state": rng_state,
        "extra": extra or {},
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return out


def read_manifest(directory: str | os.PathLike) -> dict:
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise CheckpointError(f"no {MANIFEST} in {directory}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: malformed manifest ({exc})") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {manifest.get('format_version')} is not supported "
            f"(expected {FORMAT_VERSION})"
        )
    return manifest


def load_arrays(directory: str | os.PathLike) -> tuple[dict, dict[str, np.ndarray]]:
    """Return ``(manifest, {name: array})`` with every stored array validated."""
    root = Path(directory)
    manifest = read_manifest(root)
    arrays = {}
    for entry in manifest["tensors"]:
        arrays[entry["name"]] = _read_array(root / entry["file"], entry["dtype"], entry["shape"], entry["name"])
    return manifest, arrays


def load_into(
    directory: str | os.PathLike, modules: dict[str, Module], optimizer_state: bool = False
) -> dict:
    """Load parameters (and optionally Adam state) into ``modules``; returns the manifest."""
    manifest, arrays = load_arrays(directory)
    steps = {e["name"]: e.get("step_count", 0) for e in manifest["tensors"] if e["role"] == "parameter"}
    for prefix, module in modules.items():
        for name, p in module.named_parameters():
            label = f"{prefix}.{name}"
            if label not in arrays:
                raise CheckpointError(f"checkpoint {directory} has no tensor {label!r}")
            if tuple(arrays[label].shape) != p.shape:
                raise CheckpointError(
                    f"checkpoint tensor {label!r} has shape {arrays[label].shape}, model expects {p.shape}"
                )
            p.data = arrays[label].astype(p.dtype)
            p.step_count = int(steps[label])
            if optimizer_state and label + "@adam_m" in arrays:
                p.adam_m = arrays[label + "@adam_m"].astype(p.dtype)
                p.adam_v = arrays[label + "@adam_v"].astype(p.dtype)
        for name, buf in module.named_buffers():
            label = f"{prefix}.{name}"
            if label not in arrays:
                raise CheckpointError(f"checkpoint {directory} has no buffer {label!r}")
            buf[...] = arrays[label]
    return manifest


def extra_arrays(directory: str | os.PathLike) -> dict[str, np.ndarray]:
    _, arrays = load_arrays(directory)
    return {k[len("array."):]: v for k, v in arrays.items() if k.startswith("array.")}
