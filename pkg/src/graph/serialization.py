# -*- coding: utf-8 -*-
"""
Graph Serialization Module

Reads and writes the on-disk model format: a JSON manifest describing nodes,
edges and tensor byte offsets, next to a single blob of little-endian 32-bit
floats. The blob lives beside the manifest with the ".bin" suffix.
"""

import json
import logging
import os
from typing import Any, Dict, List, Tuple

import numpy as np

from src.errors import ManifestParseError, ShapeError
from src.graph.model_graph import AffineParams, LayerKind, LayerNode, WeightGraph, WeightTensor

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
BLOB_DTYPE = np.dtype("<f4")

Span = Tuple[int, int, str]


def blob_path_for(manifest_path: str) -> str:
    """Return the blob file that accompanies a manifest"""
    root, _ = os.path.splitext(manifest_path)
    return root + ".bin"


def _read_vector(blob: bytes, offset: Any, count: int, what: str, node_id: int,
                 spans: List[Span]) -> np.ndarray:
    if not isinstance(offset, int) or isinstance(offset, bool) or offset < 0 or offset % BLOB_DTYPE.itemsize:
        raise ManifestParseError(f"node {node_id}: invalid {what} offset {offset!r}")
    end = offset + count * BLOB_DTYPE.itemsize
    if end > len(blob):
        raise ShapeError(
            f"node {node_id}: {what} needs bytes [{offset}, {end}) but blob has {len(blob)} bytes"
        )
    spans.append((offset, end, f"node {node_id} {what}"))
    return np.frombuffer(blob, dtype=BLOB_DTYPE, count=count, offset=offset).astype(np.float32)


def _check_coverage(spans: List[Span], blob_size: int) -> None:
    """Tensor byte ranges must tile the blob exactly, without overlaps or unused bytes"""
    position, previous = 0, "start of blob"
    for start, end, what in sorted(spans):
        if start < position:
            raise ShapeError(f"{what} bytes [{start}, {end}) overlap {previous} ending at {position}")
        if start > position:
            raise ShapeError(f"blob bytes [{position}, {start}) between {previous} and {what} are unused")
        position, previous = end, what
    if position != blob_size:
        raise ShapeError(f"manifest accounts for {position} bytes but blob has {blob_size}")


def _require(entry: Dict[str, Any], key: str, node_id: Any) -> Any:
    if key not in entry:
        raise ManifestParseError(f"node {node_id}: missing field '{key}'")
    return entry[key]


def _parse_node(entry: Dict[str, Any], blob: bytes, spans: List[Span]) -> LayerNode:
    """Parse one manifest node, recording the blob byte ranges it reads in spans"""
    if not isinstance(entry, dict):
        raise ManifestParseError(f"node entry must be an object, got {type(entry).__name__}")
    node_id = _require(entry, "id", "?")
    if not isinstance(node_id, int):
        raise ManifestParseError(f"node id must be an integer, got {node_id!r}")
    try:
        kind = LayerKind(_require(entry, "kind", node_id))
    except ValueError:
        raise ManifestParseError(f"node {node_id}: unknown kind {entry.get('kind')!r}") from None

    meta = entry.get("meta", {})
    if not isinstance(meta, dict):
        raise ManifestParseError(f"node {node_id}: meta must be an object")

    weight = None
    affine = None
    if kind.is_weighted:
        rows = _require(entry, "rows", node_id)
        cols = _require(entry, "cols", node_id)
        if not (isinstance(rows, int) and isinstance(cols, int) and rows > 0 and cols > 0):
            raise ManifestParseError(f"node {node_id}: rows/cols must be positive integers")
        data = _read_vector(blob, _require(entry, "weight_offset", node_id), rows * cols, "weight",
                            node_id, spans)
        bias = None
        if entry.get("bias_offset") is not None:
            bias = _read_vector(blob, entry["bias_offset"], rows, "bias", node_id, spans)
        weight = WeightTensor(data.reshape(rows, cols), bias)
    elif kind == LayerKind.AFFINE:
        channels = _require(entry, "channels", node_id)
        if not isinstance(channels, int) or channels <= 0:
            raise ManifestParseError(f"node {node_id}: channels must be a positive integer")
        scale = _read_vector(blob, _require(entry, "scale_offset", node_id), channels, "scale", node_id, spans)
        shift = _read_vector(blob, _require(entry, "shift_offset", node_id), channels, "shift", node_id, spans)
        affine = AffineParams(scale, shift)

    return LayerNode(id=node_id, kind=kind, weight=weight, affine=affine, meta=meta)


def parse_manifest(manifest: Dict[str, Any], blob: bytes) -> WeightGraph:
    """Build a validated graph from a decoded manifest and its blob bytes"""
    if not isinstance(manifest, dict):
        raise ManifestParseError("manifest must be a JSON object")
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ManifestParseError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    if len(blob) % BLOB_DTYPE.itemsize:
        raise ShapeError(f"blob length {len(blob)} is not a multiple of {BLOB_DTYPE.itemsize}")

    raw_nodes = manifest.get("nodes")
    raw_edges = manifest.get("edges")
    if not isinstance(raw_nodes, list) or not isinstance(raw_edges, list):
        raise ManifestParseError("manifest needs 'nodes' and 'edges' lists")

    spans: List[Span] = []
    nodes = [_parse_node(entry, blob, spans) for entry in raw_nodes]
    _check_coverage(spans, len(blob))

    edges = []
    for edge in raw_edges:
        if not (isinstance(edge, list) and len(edge) == 2 and all(isinstance(v, int) for v in edge)):
            raise ManifestParseError(f"edge must be a [src, dst] pair of ids, got {edge!r}")
        edges.append((edge[0], edge[1]))

    inputs = manifest.get("inputs")
    outputs = manifest.get("outputs")
    if not isinstance(inputs, list) or not isinstance(outputs, list):
        raise ManifestParseError("manifest needs 'inputs' and 'outputs' lists")

    return WeightGraph(nodes, edges, inputs, outputs)


def load_graph(path: str) -> WeightGraph:
    """
    Load and validate a model from a manifest + blob pair

    Args:
        path: Path of the JSON manifest; the blob is read from the same path with a ".bin" suffix

    Returns:
        Validated WeightGraph
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise ManifestParseError(f"{path}: invalid JSON ({e})") from e
    except OSError as e:
        raise ManifestParseError(f"{path}: cannot read manifest ({e})") from e

    blob_path = blob_path_for(path)
    try:
        with open(blob_path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise ManifestParseError(f"{blob_path}: cannot read blob ({e})") from e

    graph = parse_manifest(manifest, blob)
    logger.info(f"Loaded {graph!r} from {path}")
    return graph


def build_manifest(graph: WeightGraph) -> Tuple[Dict[str, Any], bytes]:
    """Encode a graph as a canonical manifest dict and blob bytes"""
    chunks: List[bytes] = []
    offset = 0

    def put(values: np.ndarray) -> int:
        nonlocal offset
        start = offset
        encoded = np.ascontiguousarray(values, dtype=BLOB_DTYPE).tobytes()
        chunks.append(encoded)
        offset += len(encoded)
        return start

    nodes = []
    for node in graph.nodes:
        entry: Dict[str, Any] = {"id": node.id, "kind": node.kind.value}
        if node.weight is not None:
            entry["rows"] = node.weight.rows
            entry["cols"] = node.weight.cols
        if node.affine is not None:
            entry["channels"] = node.affine.channels
        entry["meta"] = {key: node.meta[key] for key in sorted(node.meta)}
        if node.weight is not None:
            entry["weight_offset"] = put(node.weight.data)
            entry["bias_offset"] = None if node.weight.bias is None else put(node.weight.bias)
        if node.affine is not None:
            entry["scale_offset"] = put(node.affine.scale)
            entry["shift_offset"] = put(node.affine.shift)
        nodes.append(entry)

    manifest = {
        "format_version": FORMAT_VERSION,
        "nodes": nodes,
        "edges": [list(edge) for edge in graph.edges],
        "inputs": list(graph.input_ids),
        "outputs": list(graph.output_ids),
    }
    return manifest, b"".join(chunks)


def save_graph(graph: WeightGraph, path: str) -> None:
    """
    Write a graph as manifest + blob

    Args:
        graph: Graph to write
        path: Manifest path; the blob is written next to it with a ".bin" suffix
    """
    manifest, blob = build_manifest(graph)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)

    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(manifest, indent=2))
        f.write("\n")
    with open(blob_path_for(path), "wb") as f:
        f.write(blob)

    logger.info(f"Saved {graph!r} to {path} ({len(blob)} blob bytes)")
