"""
Splittable binary archive of per-video pooled features (POTF format).

Pooled vectors are persisted once per video so that the quadratic pair
stages never re-parse or recompute features. The format is bit-exact:

  header: magic "POTF" | version u16 LE = 1 | flags u16 LE = 0
          | record_count u64 LE
  record: key_len u32 LE | key (UTF-8) | frame_count u32 LE
          | 6 blocks in fixed slot order (hof/sum, hof/gradient, hof/max,
            hog/sum, hog/gradient, hog/max), each:
            dim u32 LE | dim float64 LE values

Archives are written sorted by key and sharded into contiguous key ranges
so cross-shard cartesian pairs automatically satisfy key_a < key_b.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .pooling import SLOTS, PoTFeature

MAGIC = b"POTF"
VERSION = 1

_HEADER = struct.Struct("<4sHHQ")
_U32 = struct.Struct("<I")

SHARD_NAME_FORMAT = "features-{:05d}.potf"


@dataclass
class ArchiveRecord:
    """One video's key, frame count, and pooled feature."""

    key: str
    frame_count: int
    feature: PoTFeature


@dataclass
class ArchiveShard:
    """A written archive file holding one contiguous key range."""

    path: Path
    record_count: int
    shard_index: int


def write_archive(records: list[ArchiveRecord], path: str | Path) -> ArchiveShard:
    """Write records (pre-sorted by key, unique) to a POTF file."""
    keys = [r.key for r in records]
    if keys != sorted(keys):
        raise ValueError("records must be sorted by key before writing")
    if len(set(keys)) != len(keys):
        raise ValueError("duplicate keys in archive records")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, 0, len(records)))
        for record in records:
            key_bytes = record.key.encode("utf-8")
            fh.write(_U32.pack(len(key_bytes)))
            fh.write(key_bytes)
            fh.write(_U32.pack(record.frame_count))
            for slot in SLOTS:
                vec = np.ascontiguousarray(record.feature.vectors[slot], dtype="<f8")
                fh.write(_U32.pack(vec.shape[0]))
                fh.write(vec.tobytes())
    return ArchiveShard(path=path, record_count=len(records), shard_index=0)


def read_archive(path: str | Path) -> list[ArchiveRecord]:
    """Read and validate all records of a POTF file."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        raise ValueError(f"{path}: not a feature archive")
    _, version, _, count = _HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported archive version {version}")
    pos = _HEADER.size
    records: list[ArchiveRecord] = []
    dims: dict[tuple[str, str], int] | None = None
    for index in range(count):
        try:
            (key_len,) = _U32.unpack_from(data, pos)
            pos += 4
            key = data[pos : pos + key_len].decode("utf-8")
            if len(data) < pos + key_len:
                raise struct.error("truncated key")
            pos += key_len
            (frame_count,) = _U32.unpack_from(data, pos)
            pos += 4
            vectors = {}
            for slot in SLOTS:
                (dim,) = _U32.unpack_from(data, pos)
                pos += 4
                end = pos + 8 * dim
                if end > len(data):
                    raise struct.error("truncated vector")
                vectors[slot] = np.frombuffer(
                    data, dtype="<f8", count=dim, offset=pos
                ).astype(np.float64)
                pos += 8 * dim
        except struct.error as exc:
            raise ValueError(f"{path}: truncated record {index}: {exc}") from exc
        if not key:
            raise ValueError(f"{path}: record {index} has an empty key")
        record_dims = {slot: v.shape[0] for slot, v in vectors.items()}
        if dims is None:
            dims = record_dims
        elif record_dims != dims:
            raise ValueError(
                f"{path}: record {index} ('{key}') has inconsistent vector "
                f"dimensions (mixed pyramid configurations?)"
            )
        records.append(
            ArchiveRecord(key=key, frame_count=frame_count, feature=PoTFeature(vectors))
        )
    return records


def shard_partition(count: int, shard_count: int) -> list[int]:
    """Shard sizes for ``count`` records: near-equal, larger shards first,
    empty shards omitted."""
    if shard_count < 1:
        raise ValueError(f"shard count must be >= 1, got {shard_count}")
    base, rem = divmod(count, shard_count)
    sizes = [base + (1 if i < rem else 0) for i in range(shard_count)]
    return [s for s in sizes if s > 0]


def shard_records(
    records: list[ArchiveRecord], shard_count: int
) -> list[list[ArchiveRecord]]:
    """Partition sorted records into contiguous key-range shards."""
    sizes = shard_partition(len(records), shard_count)
    shards = []
    start = 0
    for size in sizes:
        shards.append(records[start : start + size])
        start += size
    return shards


def write_shards(
    records: list[ArchiveRecord], out_dir: str | Path, shard_count: int
) -> list[ArchiveShard]:
    """Sort records by key and write range-partitioned shard files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = sorted(records, key=lambda r: r.key)
    shards = []
    for index, chunk in enumerate(shard_records(records, shard_count)):
        path = out_dir / SHARD_NAME_FORMAT.format(index)
        shard = write_archive(chunk, path)
        shard.shard_index = index
        shards.append(shard)
    return shards


def find_shards(out_dir: str | Path) -> list[ArchiveShard]:
    """Locate existing shard files in an output directory."""
    out_dir = Path(out_dir)
    shards = []
    for index, path in enumerate(sorted(out_dir.glob("features-*.potf"))):
        shards.append(
            ArchiveShard(path=path, record_count=0, shard_index=index)
        )
    return shards


def cartesian_pairs(
    records_a: list[ArchiveRecord],
    records_b: list[ArchiveRecord],
    same_shard: bool,
) -> Iterator[tuple[ArchiveRecord, ArchiveRecord]]:
    """Stream record pairs for one shard-pair task.

    For distinct shards every cross pair is emitted (range partitioning
    guarantees key_a < key_b); for a shard with itself only within-shard
    pairs with key_a < key_b. Emission order is outer loop over records_a,
    inner loop over records_b.
    """
    for i, rec_a in enumerate(records_a):
        inner = records_b[i + 1 :] if same_shard else records_b
        for rec_b in inner:
            yield rec_a, rec_b


def shard_pair_records(
    shard_a: ArchiveShard, shard_b: ArchiveShard
) -> Iterator[tuple[ArchiveRecord, ArchiveRecord]]:
    """Read two shards and stream their cartesian pairs."""
    if shard_a.shard_index > shard_b.shard_index:
        raise ValueError("shard_a.shard_index must be <= shard_b.shard_index")
    records_a = read_archive(shard_a.path)
    same = shard_a.shard_index == shard_b.shard_index
    records_b = records_a if same else read_archive(shard_b.path)
    return cartesian_pairs(records_a, records_b, same)
