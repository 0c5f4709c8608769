"""In-process vector index: exact top-k cosine search and snapshot persistence.

At corpus scale (hundreds of vectors) an exact scan beats any service
dependency, and every search result is reproducible: scores are computed in
double precision and ties break by ascending entry id. ``brute_force_search``
is retained as the permanent correctness oracle for the index (and for any
future approximate mode).

Snapshot file layout (little-endian):
  magic ``RAG3DIDX`` | version u16 | dim u32 | count u64 |
  per record: id length u16, UTF-8 id, dim float64 values |
  CRC32 u32 over everything between the magic and the checksum.
"""

from __future__ import annotations

import struct
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding import DimensionMismatch, EmbeddingVector, cosine_similarity
from .errors import DomainError

SNAPSHOT_MAGIC = b"RAG3DIDX"
SNAPSHOT_VERSION = 1


class VectorIndexError(DomainError):
    pass


class DuplicateEntryId(VectorIndexError):
    pass


class EmptyIndex(VectorIndexError):
    pass


class CorruptSnapshot(VectorIndexError):
    pass


class IoError(VectorIndexError):
    pass


@dataclass(frozen=True)
class IndexRecord:
    entry_id: str
    vector: EmbeddingVector


@dataclass(frozen=True)
class SearchHit:
    entry_id: str
    score: float
    rank: int


class VectorIndex:
    """Exact cosine index. Many concurrent readers or one writer."""

    def __init__(self):
        self._lock = threading.Lock()
        self._ids: list[str] = []
        self._id_set: set[str] = set()
        self._rows: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None  # rebuilt lazily after inserts
        self._dim: int | None = None

    @property
    def size(self) -> int:
        return len(self._ids)

    @property
    def dim(self) -> int | None:
        return self._dim

    def insert(self, record: IndexRecord) -> None:
        """Add one record; the first insert fixes the index dimension."""
        with self._lock:
            if record.entry_id in self._id_set:
                raise DuplicateEntryId(f"entry id {record.entry_id!r} already indexed")
            if self._dim is None:
                self._dim = record.vector.dim
            elif record.vector.dim != self._dim:
                raise DimensionMismatch(f"index dim {self._dim}, record dim {record.vector.dim}")
            self._ids.append(record.entry_id)
            self._id_set.add(record.entry_id)
            self._rows.append(record.vector.values.copy())
            self._matrix = None

    def records(self) -> list[IndexRecord]:
        with self._lock:
            return [IndexRecord(i, EmbeddingVector(v.copy())) for i, v in zip(self._ids, self._rows)]

    def _scores(self, query: EmbeddingVector) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.vstack(self._rows)
        return np.clip(self._matrix @ query.values, -1.0, 1.0)

    def search_top_k(self, query: EmbeddingVector, k: int) -> list[SearchHit]:
        """Exact top-k by cosine; non-increasing score, ties by ascending id."""
        if k < 1:
            raise VectorIndexError(f"k must be >= 1, got {k}")
        with self._lock:
            if not self._ids:
                raise EmptyIndex("cannot search an empty index")
            if query.dim != self._dim:
                raise DimensionMismatch(f"index dim {self._dim}, query dim {query.dim}")
            scores = self._scores(query)
            order = sorted(range(len(self._ids)), key=lambda i: (-scores[i], self._ids[i]))[:k]
            return [
                SearchHit(entry_id=self._ids[i], score=float(scores[i]), rank=rank)
                for rank, i in enumerate(order, start=1)
            ]

    def save_snapshot(self, path: str | Path) -> None:
        """Write the index to a checksummed binary snapshot."""
        with self._lock:
            body = bytearray()
            body += struct.pack("<H", SNAPSHOT_VERSION)
            body += struct.pack("<I", self._dim or 0)
            body += struct.pack("<Q", len(self._ids))
            for entry_id, row in zip(self._ids, self._rows):
                raw_id = entry_id.encode("utf-8")
                body += struct.pack("<H", len(raw_id))
                body += raw_id
                body += struct.pack(f"<{row.shape[0]}d", *row)
            crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
        try:
            Path(path).write_bytes(SNAPSHOT_MAGIC + bytes(body) + struct.pack("<I", crc))
        except OSError as exc:
            raise IoError(f"cannot write snapshot {path}: {exc}") from exc

    @classmethod
    def load_snapshot(cls, path: str | Path) -> "VectorIndex":
        """Reload a snapshot; vectors round-trip bit-identically."""
        try:
            blob = Path(path).read_bytes()
        except OSError as exc:
            raise IoError(f"cannot read snapshot {path}: {exc}") from exc
        if len(blob) < len(SNAPSHOT_MAGIC) + 4 or blob[: len(SNAPSHOT_MAGIC)] != SNAPSHOT_MAGIC:
            raise CorruptSnapshot(f"bad magic in {path}")
        body, trailer = blob[len(SNAPSHOT_MAGIC) : -4], blob[-4:]
        if zlib.crc32(body) & 0xFFFFFFFF != struct.unpack("<I", trailer)[0]:
            raise CorruptSnapshot(f"checksum mismatch in {path}")

        offset = 0

        def take(n: int) -> bytes:
            nonlocal offset
            if offset + n > len(body):
                raise CorruptSnapshot(f"truncated snapshot {path}")
            chunk = body[offset : offset + n]
            offset += n
            return chunk

        (version,) = struct.unpack("<H", take(2))
        if version != SNAPSHOT_VERSION:
            raise CorruptSnapshot(f"unsupported snapshot version {version}")
        (dim,) = struct.unpack("<I", take(4))
        (count,) = struct.unpack("<Q", take(8))

        index = cls()
        for _ in range(count):
            (id_len,) = struct.unpack("<H", take(2))
            entry_id = take(id_len).decode("utf-8")
            values = np.frombuffer(take(dim * 8), dtype="<f8").astype(np.float64)
            index.insert(IndexRecord(entry_id, EmbeddingVector(values)))
        if offset != len(body):
            raise CorruptSnapshot(f"trailing bytes in snapshot {path}")
        return index


def brute_force_search(records: list[IndexRecord], query: EmbeddingVector, k: int) -> list[SearchHit]:
    """Oracle: linear scan + full sort with the index's exact tie rule."""
    if k < 1:
        raise VectorIndexError(f"k must be >= 1, got {k}")
    if not records:
        raise EmptyIndex("cannot search empty records")
    scored = [(cosine_similarity(r.vector, query), r.entry_id) for r in records]
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return [SearchHit(entry_id=eid, score=score, rank=rank) for rank, (score, eid) in enumerate(scored[:k], start=1)]
