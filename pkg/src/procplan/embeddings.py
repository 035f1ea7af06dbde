"""Embedding tables: binary persistence, cosine similarity, synthetic generation.

One flat table holds every vector the toolkit consumes. Key conventions:

* observation clips:  ``"<video_id>/<seg_index>/start"`` and ``".../end"``
  (zero-based segment index),
* action texts:       ``"action/<action_id>"``,
* event sentences:    ``"sentence/<event_id>"``.

Vectors are persisted as 32-bit IEEE-754 floats and widened to float64 in
memory, so a table always round-trips through disk bit-exactly. Tables are
treated as immutable once loaded; construction is a single-owner operation.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

MAGIC = b"OEPPEMB1"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<8sIIQ")  # magic, version, dim, count
_KEYLEN = struct.Struct("<H")


class EmbeddingFormatError(ValueError):
    """Base class for malformed embedding files."""


class BadMagicError(EmbeddingFormatError):
    pass


class VersionMismatchError(EmbeddingFormatError):
    pass


class TruncatedFileError(EmbeddingFormatError):
    pass


class DuplicateKeyError(EmbeddingFormatError):
    pass


class ZeroVectorWarning(UserWarning):
    """Cosine similarity was asked to compare against an all-zero vector."""


class EmbeddingTable:
    """Keyed map of fixed-dimension float vectors.

    Entries keep insertion order; equality is key-order and bit-exact value
    equality. All stored values pass through float32 (the file precision)
    before being widened, so ``load(save(t)) == t`` holds exactly.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = int(dim)
        self._entries: dict[str, NDArray[np.float64]] = {}

    def add(self, key: str, vector) -> None:
        if key in self._entries:
            raise DuplicateKeyError(f"duplicate key {key!r}")
        if len(key.encode("utf-8")) > 0xFFFF:
            raise ValueError(f"key too long for format (>{0xFFFF} bytes): {key[:50]!r}...")
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError(f"vector for {key!r} has shape {vec.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"vector for {key!r} contains non-finite entries")
        # round-trip through file precision so disk IO is lossless
        self._entries[key] = vec.astype(np.float32).astype(np.float64)

    def get(self, key: str) -> NDArray[np.float64]:
        try:
            return self._entries[key]
        except KeyError:
            raise KeyError(f"embedding key not found: {key!r}") from None

    def keys(self) -> list[str]:
        return list(self._entries)

    def matrix(self, keys: list[str]) -> NDArray[np.float64]:
        """Stack the vectors for `keys` into a (len(keys), dim) array."""
        return np.stack([self.get(k) for k in keys]) if keys else np.zeros((0, self.dim))

    @property
    def normalized(self) -> bool:
        """True when every stored vector has L2 norm within 1e-6 of 1."""
        return all(abs(float(np.linalg.norm(v)) - 1.0) <= 1e-6 for v in self._entries.values())

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __iter__(self):
        return iter(self._entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingTable):
            return NotImplemented
        if self.dim != other.dim or list(self._entries) != list(other._entries):
            return False
        return all(np.array_equal(v, other._entries[k]) for k, v in self._entries.items())

    def __repr__(self) -> str:
        return f"EmbeddingTable(dim={self.dim}, count={len(self)})"


def save_table(table: EmbeddingTable, path) -> None:
    """Write `table` in the binary table format (see module docstring)."""
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, table.dim, len(table))]
    for key in table.keys():
        raw = key.encode("utf-8")
        parts.append(_KEYLEN.pack(len(raw)))
        parts.append(raw)
        parts.append(table.get(key).astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_table(path) -> EmbeddingTable:
    """Read a table written by :func:`save_table`, validating the format.

    Raises a distinct :class:`EmbeddingFormatError` subclass naming the byte
    offset for bad magic, version mismatch, truncation, and duplicate keys.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise TruncatedFileError(
            f"header needs {_HEADER.size} bytes, file has {len(data)} (offset 0)"
        )
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"unsupported version {version} at offset 8, expected {FORMAT_VERSION}"
        )
    table = EmbeddingTable(dim)
    offset = _HEADER.size
    vec_bytes = 4 * dim
    for i in range(count):
        if offset + _KEYLEN.size > len(data):
            raise TruncatedFileError(
                f"record {i}: expected {_KEYLEN.size} bytes for key length at offset "
                f"{offset}, file has {len(data) - offset}"
            )
        (key_len,) = _KEYLEN.unpack_from(data, offset)
        offset += _KEYLEN.size
        if offset + key_len > len(data):
            raise TruncatedFileError(
                f"record {i}: expected {key_len} key bytes at offset {offset}, "
                f"file has {len(data) - offset}"
            )
        key = data[offset : offset + key_len].decode("utf-8")
        offset += key_len
        if offset + vec_bytes > len(data):
            raise TruncatedFileError(
                f"record {i} ({key!r}): expected {vec_bytes} vector bytes at offset "
                f"{offset}, file has {len(data) - offset}"
            )
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).astype(np.float64)
        offset += vec_bytes
        if key in table:
            raise DuplicateKeyError(f"duplicate key {key!r} in record {i} at offset {offset}")
        table.add(key, vec)
    if offset != len(data):
        raise TruncatedFileError(
            f"{len(data) - offset} trailing bytes after {count} records (offset {offset})"
        )
    return table


def cosine_similarity(a, b) -> float:
    """Cosine similarity of two equal-length vectors, clamped to [-1, 1].

    A zero vector on either side yields 0.0 and a :class:`ZeroVectorWarning`
    instead of an error, so degenerate padded observations cannot abort an
    evaluation run.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        warnings.warn("cosine similarity against a zero vector, returning 0.0", ZeroVectorWarning)
        return 0.0
    return float(np.clip(float(a @ b) / (na * nb), -1.0, 1.0))


def cosine_matrix(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    """Pairwise cosine similarities between rows of `x` (m,d) and `y` (n,d).

    Zero rows produce 0.0 entries with the same warning as the scalar kernel.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx = np.linalg.norm(x, axis=1)
    ny = np.linalg.norm(y, axis=1)
    zx, zy = nx == 0.0, ny == 0.0
    if zx.any() or zy.any():
        warnings.warn("cosine similarity against a zero vector, returning 0.0", ZeroVectorWarning)
    sims = (x @ y.T) / np.outer(np.where(zx, 1.0, nx), np.where(zy, 1.0, ny))
    sims[zx, :] = 0.0
    sims[:, zy] = 0.0
    return np.clip(sims, -1.0, 1.0)


@dataclass
class SynthSpec:
    """Recipe for a deterministic synthetic table.

    `cluster_plan` groups keys that should point in nearly the same direction;
    `noise` is the intra-group perturbation scale. Members of one group are
    built as ``normalize(base + noise * unit_direction)``, which guarantees
    pairwise cosine >= 1 - f(noise) with f(e) = 2 * (e / (1 - e))**2 for
    e < 1. Ungrouped keys get independent uniform directions.
    """

    seed: int
    dim: int
    keys: list[str]
    cluster_plan: list[list[str]] | None = None
    noise: float = 0.0

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if not np.isfinite(self.noise) or self.noise < 0:
            raise ValueError(f"noise must be finite and non-negative, got {self.noise}")
        if len(set(self.keys)) != len(self.keys):
            raise ValueError("keys must be unique")
        if self.cluster_plan:
            grouped = [k for group in self.cluster_plan for k in group]
            if len(set(grouped)) != len(grouped):
                raise ValueError("cluster_plan groups must not overlap")
            unknown = set(grouped) - set(self.keys)
            if unknown:
                raise ValueError(f"cluster_plan references unknown keys: {sorted(unknown)}")


def _random_unit(rng: np.random.Generator, dim: int) -> NDArray[np.float64]:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def synth_table(spec: SynthSpec) -> EmbeddingTable:
    """Generate a unit-normalized table per `spec`; deterministic for a seed."""
    rng = np.random.default_rng(spec.seed)
    table = EmbeddingTable(spec.dim)
    group_of = {}
    bases = []
    for gi, group in enumerate(spec.cluster_plan or []):
        bases.append(_random_unit(rng, spec.dim))
        for key in group:
            group_of[key] = gi
    for key in spec.keys:
        if key in group_of:
            base = bases[group_of[key]]
            if spec.noise == 0.0:
                vec = base
            else:
                vec = base + spec.noise * _random_unit(rng, spec.dim)
                vec = vec / np.linalg.norm(vec)
        else:
            vec = _random_unit(rng, spec.dim)
        table.add(key, vec)
    return table
