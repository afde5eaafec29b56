"""Dataset manifests and embedding matrices: load, validate, save.

Two interchange formats live here.

Manifest: UTF-8 comma-delimited text, LF line endings, header line
``sample_id,identity_id,image_path,row``, one record per line. Identifiers
and paths are restricted to ``[A-Za-z0-9._/-]``, so no quoting is needed.
Lines starting with ``#`` before the header are skipped (pipeline stages
prepend provenance comments).

Embeddings: binary container with magic ``EMB1``, then row count and vector
length as 32-bit unsigned little-endian, then count x dim IEEE-754 binary32
little-endian values in row-major order. No padding, no footer. Saving what
was loaded reproduces the file byte for byte.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from ._util import atomic_write_bytes, atomic_write_text

MANIFEST_HEADER = "sample_id,identity_id,image_path,row"
EMBEDDING_MAGIC = b"EMB1"

_IDENTIFIER_RE = re.compile(r"[A-Za-z0-9._/-]+\Z")


class ManifestError(ValueError):
    """Manifest file violates the format contract; names the offending line."""

    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"manifest line {line}: {reason}")


class EmbeddingFormatError(ValueError):
    """Embedding container violates the format contract."""


@dataclass(frozen=True, slots=True)
class SampleRecord:
    """One labeled sample: identifiers plus its row in the embedding matrix."""

    sample_id: str
    identity_id: str
    image_path: str
    row: int


@dataclass
class DatasetManifest:
    """Ordered sample records plus an identity -> sample-position index.

    `identity_index` maps each identity to the positions of its samples in
    `samples`. Identities iterate in ascending lexicographic order and the
    positions of each identity are ordered by ascending sample_id, so every
    traversal of the manifest is deterministic.
    """

    samples: list[SampleRecord]
    identity_index: dict[str, list[int]]

    @property
    def sample_count(self) -> int:
        return len(self.samples)

    @property
    def identity_count(self) -> int:
        return len(self.identity_index)

    def identities(self) -> Iterator[str]:
        return iter(self.identity_index)

    def samples_of(self, identity_id: str) -> list[SampleRecord]:
        return [self.samples[p] for p in self.identity_index[identity_id]]


def build_manifest(samples: Iterable[SampleRecord]) -> DatasetManifest:
    """Assemble a manifest, building the deterministic identity index."""
    records = list(samples)
    grouped: dict[str, list[int]] = {}
    for pos, rec in enumerate(records):
        grouped.setdefault(rec.identity_id, []).append(pos)
    index = {
        ident: sorted(grouped[ident], key=lambda p: records[p].sample_id)
        for ident in sorted(grouped)
    }
    return DatasetManifest(samples=records, identity_index=index)


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse a manifest file; raises ManifestError naming the bad line."""
    text = Path(path).read_text(encoding="utf-8")
    if text == "":
        raise ManifestError(1, "empty file")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    records: list[SampleRecord] = []
    first_seen: dict[str, int] = {}
    header_seen = False
    for lineno, raw in enumerate(lines, start=1):
        if not header_seen:
            if raw.startswith("#"):
                continue
            if raw != MANIFEST_HEADER:
                raise ManifestError(
                    lineno, f"missing header: expected '{MANIFEST_HEADER}', got '{raw}'"
                )
            header_seen = True
            continue
        parts = raw.split(",")
        if len(parts) != 4:
            raise ManifestError(
                lineno, f"malformed row: expected 4 comma-separated fields, got {len(parts)}"
            )
        sample_id, identity_id, image_path, row_text = parts
        for name, value in (
            ("sample_id", sample_id),
            ("identity_id", identity_id),
            ("image_path", image_path),
        ):
            if not _IDENTIFIER_RE.fullmatch(value):
                raise ManifestError(
                    lineno, f"invalid {name} '{value}': allowed characters are [A-Za-z0-9._/-]"
                )
        try:
            row = int(row_text)
        except ValueError:
            raise ManifestError(lineno, f"row '{row_text}' is not an integer") from None
        if row < 0:
            raise ManifestError(lineno, f"row {row} is negative")
        if sample_id in first_seen:
            raise ManifestError(
                lineno, f"duplicate sample_id '{sample_id}' (first at line {first_seen[sample_id]})"
            )
        first_seen[sample_id] = lineno
        records.append(SampleRecord(sample_id, identity_id, image_path, row))
    if not header_seen:
        raise ManifestError(len(lines), "empty file (comments only, no header)")
    return build_manifest(records)


def save_manifest(
    manifest: DatasetManifest, path: str | Path, comments: Sequence[str] = ()
) -> None:
    """Write a manifest in canonical form; `comments` become leading # lines."""
    parts = [f"# {c}" for c in comments]
    parts.append(MANIFEST_HEADER)
    parts.extend(
        f"{s.sample_id},{s.identity_id},{s.image_path},{s.row}" for s in manifest.samples
    )
    atomic_write_text(path, "\n".join(parts) + "\n")


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Dense count x dim matrix of float32 embedding vectors, row-major."""

    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise ValueError(f"embedding matrix must be 2-D, got {v.ndim}-D")
        if v.dtype != np.float32:
            raise ValueError(f"embedding matrix must be float32, got {v.dtype}")
        if v.shape[0] > 0 and v.shape[1] == 0:
            raise ValueError("embedding dimension must be positive when rows exist")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "EmbeddingMatrix":
        values = np.ascontiguousarray(arr, dtype=np.float32)
        if values.size and not np.isfinite(values).all():
            r, c = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(f"non-finite value at row {r}, column {c}")
        values.setflags(write=False)
        return cls(values)

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    """Read an EMB1 container; rejects bad magic, size mismatches, non-finite values.

    The payload reads straight into one array (no intermediate byte buffer),
    so peak memory stays at one copy of the matrix.
    """
    path = Path(path)
    size = path.stat().st_size
    with open(path, "rb") as f:
        head = f.read(12)
        if len(head) < 4 or head[:4] != EMBEDDING_MAGIC:
            raise EmbeddingFormatError(
                f"bad magic bytes: expected {EMBEDDING_MAGIC!r}, got {head[:4]!r}"
            )
        if len(head) < 12:
            raise EmbeddingFormatError("truncated header: file shorter than 12 bytes")
        count, dim = struct.unpack_from("<II", head, 4)
        if count > 0 and dim == 0:
            raise EmbeddingFormatError("dim is 0 but count > 0")
        expected = 12 + count * dim * 4
        if size < expected:
            have = (size - 12) // (dim * 4) if dim else 0
            raise EmbeddingFormatError(
                f"truncated payload: header declares {count} rows, payload holds {have}"
            )
        if size > expected:
            raise EmbeddingFormatError(f"trailing data: {size - expected} bytes after payload")
        flat = np.fromfile(f, dtype="<f4", count=count * dim)
    values = flat.astype(np.float32, copy=False).reshape(count, dim)
    if values.size and not np.isfinite(values).all():
        r, c = np.argwhere(~np.isfinite(values))[0]
        raise EmbeddingFormatError(f"non-finite value at row {r}, column {c}")
    values.setflags(write=False)
    return EmbeddingMatrix(values)


def save_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    header = EMBEDDING_MAGIC + struct.pack("<II", matrix.count, matrix.dim)
    payload = np.ascontiguousarray(matrix.values, dtype="<f4").tobytes()
    atomic_write_bytes(path, header + payload)


@dataclass
class ValidationReport:
    """All cross-checks between a manifest and an embedding matrix."""

    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(manifest: DatasetManifest, embeddings: EmbeddingMatrix) -> ValidationReport:
    """Cross-validate row references and referenced-row finiteness.

    Collects every violation instead of stopping at the first.
    """
    violations: list[str] = []
    count = embeddings.count
    row_finite = (
        np.isfinite(embeddings.values).all(axis=1)
        if count
        else np.zeros(0, dtype=bool)
    )
    for rec in manifest.samples:
        if not 0 <= rec.row < count:
            violations.append(
                f"sample '{rec.sample_id}': row {rec.row} out of range [0, {count})"
            )
        elif not row_finite[rec.row]:
            col = int(np.argwhere(~np.isfinite(embeddings.values[rec.row]))[0][0])
            violations.append(
                f"sample '{rec.sample_id}': non-finite value at row {rec.row}, column {col}"
            )
    return ValidationReport(violations)
