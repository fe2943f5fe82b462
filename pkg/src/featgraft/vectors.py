"""Per-file embedding index with exact cosine retrieval."""
from __future__ import annotations

import json
import math
import os
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Protocol

from featgraft.errors import DegenerateVectorError, DimensionMismatchError, IndexFormatError
from featgraft.project import Project

INDEX_FORMAT = "featgraft-index"
INDEX_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    norm: float = field(init=False, compare=False)

    def __post_init__(self):
        values = tuple(float(x) for x in self.values)
        if not all(math.isfinite(x) for x in values):
            raise ValueError("embedding contains non-finite values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "norm", math.sqrt(math.fsum(x * x for x in values)))

    def __len__(self) -> int:
        return len(self.values)

    def scaled(self, c: float) -> EmbeddingVector:
        return EmbeddingVector(tuple(c * x for x in self.values))


class Embedder(Protocol):
    def embed(self, text: str) -> EmbeddingVector: ...


@dataclass(frozen=True)
class IndexEntry:
    vector: EmbeddingVector
    fingerprint: str


@dataclass(frozen=True)
class VectorIndex:
    dimension: int
    entries: Mapping[str, IndexEntry] = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")
        for path, e in self.entries.items():
            if len(e.vector) != self.dimension:
                raise DimensionMismatchError(
                    f"{path}: vector length {len(e.vector)} != index dimension {self.dimension}")
        object.__setattr__(self, "entries", MappingProxyType(dict(sorted(self.entries.items()))))

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VectorIndex):
            return NotImplemented
        return self.dimension == other.dimension and dict(self.entries) == dict(other.entries)

    def vector(self, path: str) -> EmbeddingVector:
        return self.entries[path].vector


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if len(a) != len(b):
        raise DimensionMismatchError(f"dimensions differ: {len(a)} vs {len(b)}")
    if a.norm == 0.0 or b.norm == 0.0:
        raise DegenerateVectorError("cosine similarity of a zero-norm vector")
    dot = math.fsum(x * y for x, y in zip(a.values, b.values))
    return max(-1.0, min(1.0, dot / (a.norm * b.norm)))


def query_top_k(index: VectorIndex, query: EmbeddingVector, k: int) -> list[tuple[str, float]]:
    """The ``k`` best matches by descending score; equal scores sort by path."""
    if k < 0:
        raise ValueError("k must be non-negative")
    if len(query) != index.dimension:
        raise DimensionMismatchError(f"query has dimension {len(query)}, index {index.dimension}")
    scored = [(path, cosine_similarity(query, e.vector)) for path, e in index.entries.items()]
    scored.sort(key=lambda ps: (-ps[1], ps[0]))
    return scored[:k]


def build_index(project: Project, provider: Embedder, dimension: int,
                previous: VectorIndex | None = None, parallelism: int = 4) -> VectorIndex:
    """Embed every file of ``project``.

    Entries of ``previous`` whose content fingerprint still matches are
    reused without calling the provider.
    """
    reuse: dict[str, IndexEntry] = {}
    todo = []
    for f in project.values():
        old = previous.entries.get(f.path) if previous and previous.dimension == dimension else None
        if old is not None and old.fingerprint == f.fingerprint:
            reuse[f.path] = old
        else:
            todo.append(f)

    def one(f):
        return f.path, IndexEntry(provider.embed(f.content), f.fingerprint)

    if parallelism > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            fresh = dict(pool.map(one, todo))
    else:
        fresh = dict(map(one, todo))
    return VectorIndex(dimension, {**reuse, **fresh})


def persist_index(index: VectorIndex, path: str | os.PathLike) -> None:
    """Write ``index`` as JSON lines: one header line, then one line per entry."""
    header = {
        "format": INDEX_FORMAT,
        "format_version": INDEX_FORMAT_VERSION,
        "dimension": index.dimension,
        "entry_count": len(index),
    }
    lines = [json.dumps(header, sort_keys=True)]
    for p, e in index.entries.items():
        lines.append(json.dumps({"path": p, "fingerprint": e.fingerprint,
                                 "values": list(e.vector.values)}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_index(path: str | os.PathLike) -> VectorIndex:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise IndexFormatError(f"cannot read index {path}: {exc}") from exc
    if not lines:
        raise IndexFormatError("empty index file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise IndexFormatError(f"bad header: {exc}") from exc
    if not isinstance(header, dict) or header.get("format") != INDEX_FORMAT:
        raise IndexFormatError("not an index file")
    if header.get("format_version") != INDEX_FORMAT_VERSION:
        raise IndexFormatError(f"unsupported format_version {header.get('format_version')!r}")
    dim, count = header.get("dimension"), header.get("entry_count")
    if not isinstance(dim, int) or dim <= 0 or not isinstance(count, int) or count < 0:
        raise IndexFormatError("header needs a positive dimension and an entry_count")
    body = lines[1:]
    if len(body) != count:
        raise IndexFormatError(f"header promises {count} entries, file has {len(body)}")

    entries: dict[str, IndexEntry] = {}
    for n, line in enumerate(body, start=2):
        try:
            rec = json.loads(line)
            p, fp, values = rec["path"], rec["fingerprint"], rec["values"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise IndexFormatError(f"line {n}: malformed entry") from exc
        if not isinstance(values, Sequence) or len(values) != dim:
            raise IndexFormatError(f"line {n}: entry length does not match dimension {dim}")
        if p in entries:
            raise IndexFormatError(f"line {n}: duplicate path {p!r}")
        try:
            entries[p] = IndexEntry(EmbeddingVector(tuple(values)), fp)
        except (TypeError, ValueError) as exc:
            raise IndexFormatError(f"line {n}: {exc}") from exc
    return VectorIndex(dim, entries)
