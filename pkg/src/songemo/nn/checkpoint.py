"""Checkpoint files.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header
(schema_version, input shape, layer specs, seed, parameter index, metadata),
float64 little-endian parameter blobs in layer order, then the 32-byte
SHA-256 digest of the blob bytes.
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from songemo.nn.graph import ModelGraph

MAGIC = b"SEMOCKPT"
SCHEMA_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_model(graph: ModelGraph, path, meta: dict = None) -> None:
    index = []
    blobs = []
    for layer_idx, name, arr in graph.parameters():
        index.append({"layer": layer_idx, "name": name, "shape": list(arr.shape)})
        blobs.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    payload = b"".join(blobs)
    header = {
        "schema_version": SCHEMA_VERSION,
        "name": graph.name,
        "input_shape": list(graph.input_shape),
        "layers": graph.specs(),
        "seed": graph.seed,
        "params": index,
        "meta": meta or {},
    }
    head = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        fh.write(payload)
        fh.write(hashlib.sha256(payload).digest())


def read_checkpoint(path):
    """(header dict, list of (layer, name, array)) after verifying the checksum."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC or len(data) < 16 + 32:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (head_len,) = struct.unpack("<Q", data[8:16])
    try:
        header = json.loads(data[16:16 + head_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    if header.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointError(f"{path}: unsupported schema version {header.get('schema_version')!r}")
    payload = data[16 + head_len:-32]
    if hashlib.sha256(payload).digest() != data[-32:]:
        raise CheckpointError(f"{path}: checksum mismatch")
    arrays = []
    offset = 0
    for item in header["params"]:
        count = int(np.prod(item["shape"]))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        arrays.append((item["layer"], item["name"], arr.reshape(item["shape"]).astype(np.float64)))
        offset += 8 * count
    if offset != len(payload):
        raise CheckpointError(f"{path}: parameter blob size mismatch")
    return header, arrays


def load_model(path) -> ModelGraph:
    header, arrays = read_checkpoint(path)
    graph = ModelGraph.from_specs(header["layers"], header["input_shape"], header["seed"],
                                  init=False, name=header.get("name", ""))
    for layer in graph.layers:
        layer.params = {}
    for layer_idx, name, arr in arrays:
        graph.layers[layer_idx].params[name] = arr
    for layer in graph.layers:
        expected = layer.param_shapes()
        got = {k: v.shape for k, v in layer.params.items()}
        if {k: tuple(v) for k, v in expected.items()} != got:
            raise CheckpointError(f"{path}: parameters do not match layer {layer.kind}")
    graph.meta = header.get("meta", {})
    return graph
