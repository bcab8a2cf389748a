"""Feature container files.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header
(schema_version, kind, shape, params, cache_key), then the matrix as
little-endian float64 in row-major order.
"""

import json
import struct
from pathlib import Path

import numpy as np

from songemo.features import FeatureMatrix

MAGIC = b"SEMOFEAT"
SCHEMA_VERSION = 1


class ContainerError(ValueError):
    pass


def write_feature(path, feat: FeatureMatrix, cache_key: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "schema_version": SCHEMA_VERSION,
        "kind": feat.kind,
        "shape": list(feat.shape),
        "params": feat.params,
        "cache_key": cache_key,
    }
    head = json.dumps(header, sort_keys=True).encode()
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        fh.write(np.ascontiguousarray(feat.values, dtype="<f8").tobytes())
    tmp.replace(path)


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ContainerError(f"{path}: not a feature container")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n).decode())
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ContainerError(f"{path}: unsupported schema version")
    return header


def read_feature(path) -> FeatureMatrix:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ContainerError(f"{path}: not a feature container")
    (n,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + n].decode())
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ContainerError(f"{path}: unsupported schema version")
    shape = tuple(header["shape"])
    values = np.frombuffer(data, dtype="<f8", offset=16 + n)
    if values.size != int(np.prod(shape)):
        raise ContainerError(f"{path}: payload size does not match shape {shape}")
    return FeatureMatrix(header["kind"], values.reshape(shape).astype(np.float64), header["params"])


def is_cached(path, cache_key: dict) -> bool:
    path = Path(path)
    if not path.exists():
        return False
    try:
        return read_header(path).get("cache_key") == cache_key
    except (ContainerError, ValueError, struct.error):
        return False
