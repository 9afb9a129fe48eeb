"""Binary checkpoint container.

Layout: one UTF-8 header line ``ECCLNN v1``, one JSON manifest line
(tensor names/shapes/dtypes plus free-form meta), then the raw
little-endian tensor payloads concatenated in manifest order.
Round-trips are bit-exact.
"""

from __future__ import annotations

import json

import numpy as np

from .params import NetworkParams

MAGIC = b"ECCLNN v1\n"

_DTYPES = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8")}


class CheckpointError(RuntimeError):
    pass


def write_checkpoint(path, tensors, meta=None):
    """Write named arrays (insertion order preserved) plus a meta dict."""
    entries = []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        code = {4: "f4", 8: "f8"}.get(arr.dtype.itemsize)
        if arr.dtype.kind != "f" or code is None:
            raise CheckpointError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": code})
    manifest = json.dumps({"tensors": entries, "meta": meta or {}}, sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(manifest.encode("utf-8") + b"\n")
        for name, arr in tensors.items():
            fh.write(np.ascontiguousarray(arr, dtype=_DTYPES[{4: "f4", 8: "f8"}[arr.dtype.itemsize]]).tobytes())


def read_checkpoint(path):
    """Return (tensors dict, meta dict); raises CheckpointError naming the bad offset."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise CheckpointError("bad checkpoint magic at offset 0")
    nl = blob.find(b"\n", len(MAGIC))
    if nl < 0:
        raise CheckpointError(f"manifest line missing at offset {len(MAGIC)}")
    try:
        manifest = json.loads(blob[len(MAGIC):nl].decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt manifest at offset {len(MAGIC)}: {exc}") from None
    tensors = {}
    off = nl + 1
    for entry in manifest["tensors"]:
        dtype = _DTYPES[entry["dtype"]]
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if shape else dtype.itemsize
        end = off + nbytes
        if end > len(blob):
            raise CheckpointError(
                f"truncated payload for {entry['name']!r}: need {nbytes} bytes at offset {off}, "
                f"file has {len(blob)}")
        tensors[entry["name"]] = np.frombuffer(blob[off:end], dtype=dtype).reshape(shape).copy()
        off = end
    if off != len(blob):
        raise CheckpointError(f"{len(blob) - off} trailing bytes at offset {off}")
    return tensors, manifest.get("meta", {})


def pack_params(params: NetworkParams, prefix=""):
    """Flatten a NetworkParams (values + Adam moments) into checkpoint tensors."""
    out = {}
    for name, t in params.tensors.items():
        out[f"{prefix}{name}"] = t
        out[f"{prefix}{name}.adam_m"] = params.m[name]
        out[f"{prefix}{name}.adam_v"] = params.v[name]
    return out


def unpack_params(tensors, prefix="", dtype=np.float32):
    params = NetworkParams(dtype)
    plen = len(prefix)
    for name, arr in tensors.items():
        if not name.startswith(prefix) or name.endswith((".adam_m", ".adam_v")):
            continue
        base = name[plen:]
        params.add(base, arr)
        m = tensors.get(f"{prefix}{base}.adam_m")
        v = tensors.get(f"{prefix}{base}.adam_v")
        if m is not None:
            params.m[base] = np.asarray(m, dtype=params.dtype)
        if v is not None:
            params.v[base] = np.asarray(v, dtype=params.dtype)
    return params
