"""Self-describing binary weight files.

Layout (all integers little-endian):

  bytes 0..7    magic ``PTXW0001``
  bytes 8..11   uint32 header length in bytes
  header        UTF-8 JSON: the serialized model spec, an ordered tensor
                list (name, shape, trainable flag, group), and a free-form
                ``extra`` object
  tensor data   for each listed tensor, in order: uint32 ndim, then ndim
                uint64 extents, then the float64 row-major payload

The JSON header is written with sorted keys and no whitespace, so a given
(spec, tensors, extra) triple always produces identical bytes.  See
docs/weight_format.md for the normative description.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, ModelSpec, param_shapes, spec_from_dict, spec_to_dict

MAGIC = b"PTXW0001"


class WeightFormatError(ValueError):
    """Corrupt or mismatched weight file."""


@dataclass
class WeightFile:
    spec: ModelSpec
    params: ModelParams
    extra: dict = field(default_factory=dict)
    extra_tensors: dict = field(default_factory=dict)


def save_weights(path, spec: ModelSpec, params: ModelParams,
                 extra: dict | None = None, extra_tensors: dict | None = None) -> None:
    extra_tensors = extra_tensors or {}
    entries = []
    ordered = []
    for name, arr in params.tensors.items():
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "trainable": bool(params.trainable.get(name, True)),
            "group": "param",
        })
        ordered.append(np.asarray(arr, dtype=np.float64))
    for name, arr in extra_tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        entries.append({"name": name, "shape": list(arr.shape),
                        "trainable": False, "group": "extra"})
        ordered.append(arr)
    header = {
        "spec": spec_to_dict(spec),
        "tensors": entries,
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for arr in ordered:
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_weights(path) -> WeightFile:
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != MAGIC:
        raise WeightFormatError(f"{path}: bad magic {data[:8]!r}")
    if len(data) < 12:
        raise WeightFormatError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<I", data[8:12])
    if len(data) < 12 + hlen:
        raise WeightFormatError(f"{path}: header extends past end of file")
    try:
        header = json.loads(data[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFormatError(f"{path}: unreadable header: {exc}") from None

    spec = spec_from_dict(header["spec"])
    offset = 12 + hlen
    tensors, trainable, extra_tensors = {}, {}, {}
    for entry in header["tensors"]:
        if offset + 4 > len(data):
            raise WeightFormatError(f"{path}: truncated at tensor {entry['name']!r}")
        (ndim,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if offset + 8 * ndim > len(data):
            raise WeightFormatError(f"{path}: truncated at tensor {entry['name']!r}")
        dims = struct.unpack_from(f"<{ndim}Q", data, offset)
        offset += 8 * ndim
        if list(dims) != list(entry["shape"]):
            raise WeightFormatError(
                f"{path}: tensor {entry['name']!r} shape {list(dims)} "
                f"disagrees with header {entry['shape']}"
            )
        count = int(np.prod(dims)) if dims else 1
        nbytes = 8 * count
        if offset + nbytes > len(data):
            raise WeightFormatError(f"{path}: truncated payload for {entry['name']!r}")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(dims)
        offset += nbytes
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        if entry.get("group", "param") == "param":
            tensors[entry["name"]] = arr
            trainable[entry["name"]] = bool(entry.get("trainable", True))
        else:
            extra_tensors[entry["name"]] = arr
    if offset != len(data):
        raise WeightFormatError(f"{path}: {len(data) - offset} trailing bytes")

    expected = param_shapes(spec)
    if set(expected) != set(tensors):
        missing = sorted(set(expected) - set(tensors))
        surplus = sorted(set(tensors) - set(expected))
        raise WeightFormatError(
            f"{path}: parameter names disagree with the spec "
            f"(missing {missing}, surplus {surplus})"
        )
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise WeightFormatError(
                f"{path}: {name} has shape {tensors[name].shape}, spec wants {shape}"
            )
    params = ModelParams(tensors=tensors, trainable=trainable)
    return WeightFile(spec=spec, params=params, extra=header.get("extra", {}),
                      extra_tensors=extra_tensors)
