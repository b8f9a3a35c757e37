"""Model-exchange document (JSON) and binary tensor sidecar.

Document fields: format_version, registry_version, weight_seed, inputs[],
nodes[] (id, kind, dtype, params, inputs), outputs[], optional overrides
(SpecialI input overrides) and optional sidecar reference.  This format is
the contract with out-of-process backends.

Sidecar layout: 8-byte magic "TGFZBIN1", u32 little-endian header length,
UTF-8 JSON header, then raw little-endian row-major payloads.  Header
entries carry {key: [owner, slot], dtype, shape, offset, nbytes} where the
owner is a node id ("weights"), "input" (graph inputs) or "output".
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dtypes import numpy_dtype
from .graph import GraphError, LayerNode, ModelGraph, TensorSpec
from .registry import Registry
from .weights import ValueTensor

FORMAT_VERSION = 1
SIDECAR_MAGIC = b"TGFZBIN1"


class ModelFormatError(ValueError):
    pass


def to_document(graph: ModelGraph, registry_version: str = "default-1",
                sidecar: str | None = None) -> dict:
    order = graph.topo_order()
    doc = {
        "format_version": FORMAT_VERSION,
        "registry_version": registry_version,
        "weight_seed": graph.weight_seed,
        "inputs": [
            {"name": name, "dtype": spec.dtype, "shape": list(spec.shape)}
            for name, spec in graph.graph_inputs
        ],
        "nodes": [
            {
                "id": nid,
                "kind": graph.nodes[nid].kind,
                "dtype": graph.nodes[nid].dtype,
                "params": dict(graph.nodes[nid].params),
                "inputs": [[src, slot] for src, slot in graph.nodes[nid].inputs],
            }
            for nid in order
        ],
        "outputs": [[nid, slot] for nid, slot in graph.graph_outputs],
    }
    if graph.input_overrides:
        doc["overrides"] = dict(graph.input_overrides)
    if sidecar:
        doc["sidecar"] = sidecar
    return doc


def serialize(graph: ModelGraph, path: str | Path, registry_version: str = "default-1",
              sidecar: str | None = None) -> None:
    doc = to_document(graph, registry_version, sidecar)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def from_document(doc: dict, registry: Registry) -> ModelGraph:
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported format_version {doc.get('format_version')!r}")
    if doc.get("registry_version") != registry.version:
        raise ModelFormatError(
            f"registry_version {doc.get('registry_version')!r} != loaded {registry.version!r}")
    for raw in doc.get("nodes", []):
        registry.schema(raw.get("kind", ""))  # unknown-kind error, raised as-is
    try:
        inputs = [
            (i["name"], TensorSpec(i["dtype"], tuple(i["shape"])))
            for i in doc["inputs"]
        ]
        nodes = {}
        for raw in doc["nodes"]:
            params = {k: _canon_param(v) for k, v in raw["params"].items()}
            nodes[raw["id"]] = LayerNode(
                id=raw["id"], kind=raw["kind"], dtype=raw["dtype"],
                params=params, inputs=tuple((s, int(i)) for s, i in raw["inputs"]),
            )
        graph = ModelGraph(
            graph_inputs=inputs,
            nodes=nodes,
            graph_outputs=[(nid, int(slot)) for nid, slot in doc["outputs"]],
            weight_seed=int(doc["weight_seed"]),
            input_overrides=dict(doc.get("overrides", {})),
        )
    except (KeyError, TypeError, ValueError, GraphError) as e:
        raise ModelFormatError(f"malformed model document: {e}") from e
    return graph


def _canon_param(v):
    """JSON lists come back as tuples so params stay hashable round-trip."""
    if isinstance(v, list):
        return tuple(_canon_param(x) for x in v)
    return v


def deserialize(path: str | Path, registry: Registry) -> ModelGraph:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"malformed model document: {e}") from e
    return from_document(doc, registry)


def write_sidecar(path: str | Path,
                  tensors: dict[tuple[str, int], ValueTensor]) -> None:
    entries = []
    payload = bytearray()
    for (owner, slot), vt in tensors.items():
        raw = np.ascontiguousarray(vt.data)
        if raw.dtype.byteorder == ">":
            raw = raw.astype(raw.dtype.newbyteorder("<"))
        blob = raw.tobytes()
        entries.append({
            "key": [owner, slot],
            "dtype": vt.spec.dtype,
            "shape": list(vt.spec.shape),
            "offset": len(payload),
            "nbytes": len(blob),
        })
        payload += blob
    header = json.dumps({"entries": entries}, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(SIDECAR_MAGIC)
        f.write(len(header).to_bytes(4, "little"))
        f.write(header)
        f.write(bytes(payload))


def read_sidecar(path: str | Path) -> dict[tuple[str, int], ValueTensor]:
    blob = Path(path).read_bytes()
    if blob[:8] != SIDECAR_MAGIC:
        raise ModelFormatError("bad sidecar magic")
    hlen = int.from_bytes(blob[8:12], "little")
    header = json.loads(blob[12:12 + hlen].decode())
    base = 12 + hlen
    out = {}
    for e in header["entries"]:
        owner, slot = e["key"]
        spec = TensorSpec(e["dtype"], tuple(e["shape"]))
        dt = numpy_dtype(e["dtype"])
        raw = blob[base + e["offset"]: base + e["offset"] + e["nbytes"]]
        data = np.frombuffer(raw, dtype=dt).reshape(spec.shape)
        out[(owner, int(slot))] = ValueTensor(spec, data)
    return out
