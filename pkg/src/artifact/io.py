"""Portable tensor files (PTF) and the small text formats the toolkit
emits: key=value manifests, CSV tables and 8-bit PGM previews.

PTF layout: magic ``PTF1``, u32 little-endian rank, ``rank`` u32 dims, a
u8 dtype tag (0 = float32, 1 = float32 complex interleaved re/im), then
the raw little-endian payload in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

PTF_MAGIC = b"PTF1"
_TAG_REAL = 0
_TAG_COMPLEX = 1


def save_ptf(path, array) -> None:
    arr = np.asarray(array)
    if arr.ndim < 1:
        arr = arr.reshape(1)
    if np.iscomplexobj(arr):
        tag, payload = _TAG_COMPLEX, np.ascontiguousarray(arr, dtype="<c8")
    else:
        tag, payload = _TAG_REAL, np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(PTF_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(struct.pack("B", tag))
        fh.write(payload.tobytes())


def load_ptf(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(4) != PTF_MAGIC:
            raise ValueError(f"{path}: not a PTF file")
        (rank,) = struct.unpack("<I", fh.read(4))
        dims = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        (tag,) = struct.unpack("B", fh.read(1))
        if tag not in (_TAG_REAL, _TAG_COMPLEX):
            raise ValueError(f"{path}: unknown dtype tag {tag}")
        dtype = "<f4" if tag == _TAG_REAL else "<c8"
        data = np.frombuffer(fh.read(), dtype=dtype)
    if data.size != int(np.prod(dims)):
        raise ValueError(f"{path}: payload size does not match dims {dims}")
    return data.reshape(dims).copy()


def save_manifest(path, mapping: dict) -> None:
    lines = [f"{k}={v}" for k, v in mapping.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def _format_cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def save_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(_format_cell(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def save_mask_csv(path, mask) -> None:
    """One line per phase-encode row: row_index, sampled (0/1)."""
    rows = [(i, int(flag)) for i, flag in enumerate(mask.lines)]
    save_csv(path, ("row_index", "sampled"), rows)


def save_pgm(path, image) -> None:
    """8-bit binary PGM of a real image, scaled so its max maps to 255."""
    img = np.abs(np.asarray(image, dtype=np.float64))
    peak = img.max()
    if peak > 0:
        img = img / peak
    data = (img * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode())
        fh.write(data.tobytes())


# ---------------------------------------------------------------------------
# network persistence: a manifest of layer-name -> tensor file plus the
# spec fields needed to rebuild the graph

def save_network(directory, net, extra: dict | None = None) -> None:
    from .unet import NetworkSpec  # local import to avoid a cycle

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    spec = net.spec
    manifest = {
        "spec.n_scales": spec.n_scales,
        "spec.layers_per_stage": spec.layers_per_stage,
        "spec.base_channels": spec.base_channels,
        "spec.input_h": spec.input_size[0],
        "spec.input_w": spec.input_size[1],
        "spec.mode": spec.mode,
        "spec.upsample": spec.upsample,
        "spec.single_scale_depth": spec.single_scale_depth,
        "spec.skip": spec.skip,
    }
    tensors = {}
    tensors.update(net.parameters())
    tensors.update(net.buffers())
    for name, arr in tensors.items():
        fname = name.replace("/", "_") + ".ptf"
        save_ptf(directory / fname, arr)
        manifest[f"tensor.{name}"] = fname
    if extra:
        manifest.update(extra)
    save_manifest(directory / "manifest.txt", manifest)


def load_network(directory, dtype=np.float32):
    from .unet import NetworkSpec, build_network

    directory = Path(directory)
    manifest = load_manifest(directory / "manifest.txt")
    spec = NetworkSpec(
        n_scales=int(manifest["spec.n_scales"]),
        layers_per_stage=int(manifest["spec.layers_per_stage"]),
        base_channels=int(manifest["spec.base_channels"]),
        input_size=(int(manifest["spec.input_h"]), int(manifest["spec.input_w"])),
        mode=manifest["spec.mode"],
        upsample=manifest["spec.upsample"],
        single_scale_depth=int(manifest["spec.single_scale_depth"]),
        skip=manifest.get("spec.skip", "concat"),
    )
    net = build_network(spec, seed=0, dtype=dtype)
    tensors = {}
    tensors.update(net.parameters())
    tensors.update(net.buffers())
    for name, arr in tensors.items():
        key = f"tensor.{name}"
        if key not in manifest:
            raise ValueError(f"manifest missing tensor {name!r}")
        loaded = load_ptf(directory / manifest[key])
        if loaded.shape != arr.shape:
            raise ValueError(
                f"tensor {name!r}: stored shape {loaded.shape} does not "
                f"match spec shape {arr.shape}")
        arr[...] = loaded.astype(arr.dtype)
    return net, manifest
