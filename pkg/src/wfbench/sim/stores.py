"""Simulated key-value and object stores shared by kernels of one pool."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Any


class MissingObject(KeyError):
    pass


class MissingItem(KeyError):
    pass


class DuplicateKey(KeyError):
    pass


def _size(item: Any) -> int:
    return len(json.dumps(item, sort_keys=True, separators=(",", ":")).encode())


@dataclass(frozen=True)
class StoreOp:
    op: str  # insert | update | read | delete
    table: str
    key: tuple
    size_bytes: int
    invocation: str | None = None

    def to_dict(self) -> dict:
        return {
            "op": self.op,
            "table": self.table,
            "key": list(self.key),
            "size_bytes": self.size_bytes,
            "invocation": self.invocation,
        }


class KeyValueStore:
    """Tables of items under a partition key and an optional sort key."""

    def __init__(self) -> None:
        self.tables: dict[str, dict[tuple, dict]] = {}
        self.log: list[StoreOp] = []

    def _key(self, pk: Any, sk: Any = None) -> tuple:
        return (pk,) if sk is None else (pk, sk)

    def _record(self, op: str, table: str, key: tuple, item: Any, invocation: str | None) -> None:
        self.log.append(StoreOp(op, table, key, _size(item) if item is not None else 0, invocation))

    def create(self, table: str, pk: Any, item: dict, sk: Any = None, *, invocation: str | None = None) -> None:
        rows = self.tables.setdefault(table, {})
        key = self._key(pk, sk)
        if key in rows:
            raise DuplicateKey(f"{table}{list(key)} already exists")
        rows[key] = dict(item)
        self._record("insert", table, key, item, invocation)

    def modify(self, table: str, pk: Any, changes: dict, sk: Any = None, *, invocation: str | None = None) -> dict:
        key = self._key(pk, sk)
        rows = self.tables.get(table, {})
        if key not in rows:
            raise MissingItem(f"{table}{list(key)} does not exist")
        rows[key].update(changes)
        self._record("update", table, key, rows[key], invocation)
        return dict(rows[key])

    def retrieve(self, table: str, pk: Any, sk: Any = None, *, invocation: str | None = None) -> dict | None:
        key = self._key(pk, sk)
        item = self.tables.get(table, {}).get(key)
        self._record("read", table, key, item, invocation)
        return dict(item) if item is not None else None

    def delete(self, table: str, pk: Any, sk: Any = None, *, invocation: str | None = None) -> None:
        key = self._key(pk, sk)
        rows = self.tables.get(table, {})
        if key not in rows:
            raise MissingItem(f"{table}{list(key)} does not exist")
        item = rows.pop(key)
        self._record("delete", table, key, item, invocation)

    def items(self, table: str | None = None) -> list[tuple[str, tuple, dict]]:
        out = []
        for name in sorted(self.tables) if table is None else [table]:
            for key, item in sorted(self.tables.get(name, {}).items(), key=lambda kv: repr(kv[0])):
                out.append((name, key, dict(item)))
        return out

    def __len__(self) -> int:
        return sum(len(rows) for rows in self.tables.values())


@dataclass(frozen=True)
class StoredObject:
    key: str
    size: int
    checksum: str


class ObjectStore:
    """Object contents are abstracted to size and checksum."""

    def __init__(self) -> None:
        self.buckets: dict[str, StoredObject] = {}

    def put(self, key: str, size: int, data: bytes | None = None) -> StoredObject:
        if size < 0:
            raise ValueError("object size must be non-negative")
        digest = hashlib.sha256(data if data is not None else f"{key}:{size}".encode()).hexdigest()[:16]
        obj = StoredObject(key, size, digest)
        self.buckets[key] = obj
        return obj

    def get(self, key: str) -> StoredObject:
        try:
            return self.buckets[key]
        except KeyError:
            raise MissingObject(f"object {key!r} does not exist") from None

    def __contains__(self, key: str) -> bool:
        return key in self.buckets
