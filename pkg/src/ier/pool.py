"""Experience pools: key/value records with exact cosine retrieval and usage counts.

A pool holds two kinds of record. ``S2I`` maps a solution (key) to the
instruction that improved it (value); ``I2S`` maps an instruction (key) to the
solution it produced (value). Retrieval is exact top-k over unit vectors.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .errors import InvalidArgument, InvalidState, ParseError, UndefinedMetric

S2I = "S2I"
I2S = "I2S"
KINDS = (S2I, I2S)

POOL_FORMAT = "ier-pool"
POOL_VERSION = 1
NORM_TOL = 1e-6
RECORD_FIELDS = (
    "id", "kind", "key_text", "value_text", "key_embedding",
    "gain", "freq", "origin_batch", "origin_task", "created_ord",
)


def record_id(kind: str, key_text: str, value_text: str) -> str:
    h = hashlib.sha256()
    for part in (kind, key_text, value_text):
        data = part.encode("utf-8")
        h.update(len(data).to_bytes(8, "little"))
        h.update(data)
    return h.hexdigest()[:32]


@dataclass(eq=False)
class ExperienceRecord:
    kind: str
    key_text: str
    value_text: str
    key_embedding: np.ndarray
    gain: float = 0.0
    freq: int = 0
    origin_batch: int = 0
    origin_task: str = ""
    created_ord: int = 0
    id: str = field(default="")

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown record kind {self.kind!r}")
        self.key_embedding = np.asarray(self.key_embedding, dtype=np.float64)
        if not self.id:
            self.id = record_id(self.kind, self.key_text, self.value_text)

    @property
    def dim(self) -> int:
        return int(self.key_embedding.shape[0])

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "key_text": self.key_text,
            "value_text": self.value_text,
            "key_embedding": [float(x) for x in self.key_embedding],
            "gain": float(self.gain),
            "freq": int(self.freq),
            "origin_batch": int(self.origin_batch),
            "origin_task": self.origin_task,
            "created_ord": int(self.created_ord),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperienceRecord":
        missing = [f for f in RECORD_FIELDS if f not in d]
        if missing:
            raise KeyError(f"missing fields {missing}")
        extra = sorted(set(d) - set(RECORD_FIELDS))
        if extra:
            raise KeyError(f"unexpected fields {extra}")
        rec = cls(
            kind=d["kind"],
            key_text=d["key_text"],
            value_text=d["value_text"],
            key_embedding=np.asarray(d["key_embedding"], dtype=np.float64),
            gain=float(d["gain"]),
            freq=int(d["freq"]),
            origin_batch=int(d["origin_batch"]),
            origin_task=str(d["origin_task"]),
            created_ord=int(d["created_ord"]),
            id=d["id"],
        )
        if rec.id != record_id(rec.kind, rec.key_text, rec.value_text):
            raise ValueError(f"id {rec.id} does not match record content")
        return rec

    def copy(self, *, freq: int | None = None) -> "ExperienceRecord":
        return ExperienceRecord(
            self.kind, self.key_text, self.value_text, self.key_embedding, self.gain,
            self.freq if freq is None else freq, self.origin_batch, self.origin_task,
            self.created_ord, self.id,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExperienceRecord):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self) -> int:
        return hash(self.id)

    def __repr__(self) -> str:
        return (
            f"ExperienceRecord({self.kind}, id={self.id[:8]}, batch={self.origin_batch}, "
            f"task={self.origin_task!r}, freq={self.freq}, gain={self.gain:.3f})"
        )


class Hit(NamedTuple):
    record: ExperienceRecord
    score: float


class _KindIndex(NamedTuple):
    ids: list[str]
    matrix: np.ndarray
    ords: np.ndarray


class ExperiencePool:
    """Records keyed by content id, with a per-kind similarity index.

    ``embedder`` is only needed for text queries (:meth:`retrieve`).
    Frequency increments are serialised by a lock so concurrent retrieval is safe;
    ingest is expected to happen from a single writer.
    """

    def __init__(self, dim: int, embedder=None, records: Iterable[ExperienceRecord] = ()):
        if dim < 1:
            raise InvalidArgument("dim must be positive")
        if embedder is not None and embedder.dim != dim:
            raise InvalidArgument(f"embedder dim {embedder.dim} != pool dim {dim}")
        self.dim = dim
        self.embedder = embedder
        self._records: dict[str, ExperienceRecord] = {}
        self._index: dict[str, _KindIndex] = {}
        self._freq_lock = threading.Lock()
        self.retrieval_events = 0
        self.ingest(records)

    # -- container protocol --

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, record_id: object) -> bool:
        return record_id in self._records

    def __iter__(self) -> Iterator[ExperienceRecord]:
        return iter(self.records())

    def get(self, record_id: str) -> ExperienceRecord:
        return self._records[record_id]

    def ids(self) -> set[str]:
        return set(self._records)

    def records(self, kind: str | None = None) -> list[ExperienceRecord]:
        recs = [r for r in self._records.values() if kind is None or r.kind == kind]
        recs.sort(key=lambda r: (r.created_ord, r.id))
        return recs

    def size(self, kind: str | None = None) -> int:
        if kind is None:
            return len(self._records)
        return sum(1 for r in self._records.values() if r.kind == kind)

    def by_origin(self) -> dict[int, set[str]]:
        out: dict[int, set[str]] = {}
        for r in self._records.values():
            out.setdefault(r.origin_batch, set()).add(r.id)
        return out

    def origin_batches(self) -> set[int]:
        return {r.origin_batch for r in self._records.values()}

    # -- mutation --

    def ingest(self, records: Iterable[ExperienceRecord]) -> "ExperiencePool":
        added = False
        for rec in records:
            if rec.dim != self.dim:
                raise InvalidArgument(f"record {rec.id} has dim {rec.dim}, pool has {self.dim}")
            norm = float(np.linalg.norm(rec.key_embedding))
            if abs(norm - 1.0) > NORM_TOL:
                raise InvalidArgument(f"record {rec.id} embedding norm {norm} is not 1")
            if rec.id in self._records:
                continue
            self._records[rec.id] = rec
            added = True
        if added:
            self._index.clear()
        return self

    def copy(self, *, reset_freq: bool = False) -> "ExperiencePool":
        return ExperiencePool(
            self.dim, self.embedder, (r.copy(freq=0 if reset_freq else None) for r in self.records())
        )

    def subset(self, ids: Iterable[str]) -> "ExperiencePool":
        keep = set(ids)
        return ExperiencePool(self.dim, self.embedder, (r.copy() for r in self.records() if r.id in keep))

    # -- retrieval --

    def _kind_index(self, kind: str) -> _KindIndex:
        idx = self._index.get(kind)
        if idx is None:
            recs = self.records(kind)
            if recs:
                matrix = np.vstack([r.key_embedding for r in recs])
            else:
                matrix = np.zeros((0, self.dim))
            idx = _KindIndex([r.id for r in recs], matrix, np.array([r.created_ord for r in recs]))
            self._index[kind] = idx
        return idx

    def search(self, kind: str, query: np.ndarray, k: int) -> list[Hit]:
        """Rank without touching frequencies."""
        if kind not in KINDS:
            raise InvalidArgument(f"unknown record kind {kind!r}")
        if k < 1:
            raise InvalidArgument("k must be >= 1")
        query = np.asarray(query, dtype=np.float64)
        if query.shape != (self.dim,):
            raise InvalidArgument(f"query has shape {query.shape}, pool dim is {self.dim}")
        idx = self._kind_index(kind)
        if not idx.ids:
            return []
        qn = float(np.linalg.norm(query))
        sims = idx.matrix @ (query / qn) if qn > 0 else np.zeros(len(idx.ids))
        # primary: descending similarity; secondary: ascending insertion ordinal.
        # BLAS may give identical rows results an ulp apart, so rank on rounded values.
        order = np.lexsort((idx.ords, -np.round(sims, 12)))[:k]
        return [Hit(self._records[idx.ids[n]], float(sims[n])) for n in order]

    def retrieve_vector(self, kind: str, query: np.ndarray, k: int = 1) -> list[Hit]:
        hits = self.search(kind, query, k)
        with self._freq_lock:
            for h in hits:
                h.record.freq += 1
            self.retrieval_events += len(hits)
        return hits

    def retrieve(self, kind: str, query_text: str, k: int = 1) -> list[Hit]:
        if k < 1:
            raise InvalidArgument("k must be >= 1")
        if not self.size(kind):
            return []
        if self.embedder is None:
            raise InvalidState("pool has no embedder attached; use retrieve_vector")
        return self.retrieve_vector(kind, self.embedder.embed(query_text), k)

    # -- usage accounting --

    def freq_snapshot(self) -> dict[str, int]:
        with self._freq_lock:
            return {rid: r.freq for rid, r in self._records.items()}

    def freq_since(self, baseline: dict[str, int] | None) -> dict[str, int]:
        now = self.freq_snapshot()
        if not baseline:
            return now
        return {rid: f - baseline.get(rid, 0) for rid, f in now.items()}

    def total_freq(self) -> int:
        return sum(r.freq for r in self._records.values())

    def hit_ratio(self, since: dict[str, int] | None = None) -> float:
        """Share of records returned by at least one retrieval (optionally since a snapshot)."""
        if not self._records:
            raise UndefinedMetric("hit ratio of an empty pool is undefined")
        freqs = self.freq_since(since)
        return sum(1 for f in freqs.values() if f > 0) / len(freqs)

    # -- persistence --

    def save(self, path: str | Path) -> None:
        save_pool(self, path)


def merge(pools: Sequence[ExperiencePool], embedder=None) -> ExperiencePool:
    """Union by record id. A duplicated id keeps the largest ``freq`` seen."""
    if not pools:
        raise InvalidArgument("merge needs at least one pool")
    dims = {p.dim for p in pools}
    if len(dims) != 1:
        raise InvalidArgument(f"cannot merge pools with dimensions {sorted(dims)}")
    best: dict[str, ExperienceRecord] = {}
    for pool in pools:
        for rec in pool.records():
            cur = best.get(rec.id)
            if cur is None:
                best[rec.id] = rec.copy()
            elif rec.freq > cur.freq:
                cur.freq = rec.freq
    emb = embedder if embedder is not None else next((p.embedder for p in pools if p.embedder), None)
    return ExperiencePool(dims.pop(), emb, best.values())


def save_pool(pool: ExperiencePool, path: str | Path) -> None:
    recs = pool.records()
    header = {"format": POOL_FORMAT, "version": POOL_VERSION, "dim": pool.dim, "count": len(recs)}
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(header) + "\n")
        for r in recs:
            f.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")


def load_pool(path: str | Path, embedder=None) -> ExperiencePool:
    path = str(path)
    with open(path, encoding="utf-8") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty pool file (missing header)", path=path, line=1)
    try:
        header = json.loads(lines[0])
        if header.get("format") != POOL_FORMAT:
            raise ValueError(f"format is {header.get('format')!r}")
        if header.get("version") != POOL_VERSION:
            raise ValueError(f"unsupported version {header.get('version')!r}")
        dim = int(header["dim"])
        count = int(header["count"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ParseError(f"bad header: {exc}", path=path, line=1) from exc
    pool = ExperiencePool(dim, embedder)
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = ExperienceRecord.from_dict(json.loads(line))
            if rec.id in pool:
                raise ValueError(f"duplicate id {rec.id}")
            norm = float(np.linalg.norm(rec.key_embedding))
            if rec.dim != dim or not math.isclose(norm, 1.0, abs_tol=NORM_TOL):
                raise ValueError(f"embedding has dim {rec.dim} and norm {norm}")
            pool.ingest([rec])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError, InvalidArgument) as exc:
            raise ParseError(f"bad record: {exc}", path=path, line=lineno) from exc
    if len(pool) != count:
        raise ParseError(
            f"header announces {count} records, file holds {len(pool)} (truncated?)",
            path=path, line=len(lines) + 1,
        )
    return pool
