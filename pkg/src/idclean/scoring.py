"""Intra-identity pair distances and worst-pair identity scores.

Every distance is the Euclidean distance between two embedding vectors,
accumulated in float64 from the float32 inputs. Summation runs in numpy's
pairwise order over ascending coordinate index; batched scoring relies on
per-row reductions matching the single-vector reduction bit for bit, so the
same inputs always produce the same bits regardless of batching, chunking,
or thread schedule.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from ._util import atomic_write_text
from .dataset_io import DatasetManifest, EmbeddingMatrix, SampleRecord

DEFAULT_BLOCK_BYTES = 32 * 1024 * 1024

SCORES_HEADER = "identity_id,id_score,sample_count,pair_count,worst_a,worst_b"


class ScoresFormatError(ValueError):
    """Scores export file violates the format contract."""


@dataclass(frozen=True, slots=True)
class PairScore:
    """Euclidean distance between two same-identity samples, a < b."""

    a: str
    b: str
    distance: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"pair must be canonically ordered: {self.a!r} !< {self.b!r}")
        if self.distance < 0:
            raise ValueError(f"distance must be nonnegative, got {self.distance}")


@dataclass(frozen=True, slots=True)
class IdentityScore:
    """Worst positive-pair distance of one identity.

    Identities with fewer than two samples have no positive pairs and are
    unscorable: id_score and worst_pair are None and pair_count is 0.
    """

    identity_id: str
    id_score: float | None
    worst_pair: PairScore | None
    sample_count: int
    pair_count: int

    @property
    def scorable(self) -> bool:
        return self.sample_count >= 2


def pair_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Euclidean distance between two vectors of equal dimension >= 1."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape or x.size == 0:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    d = x.astype(np.float64) - y.astype(np.float64)
    return float(np.sqrt(np.sum(d * d)))


def _pair_blocks(
    n: int, dim: int, block_bytes: int
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (I, J) index blocks covering all i < j pairs in lexicographic order."""
    limit = max(1, block_bytes // (max(dim, 1) * 8))
    parts_i: list[np.ndarray] = []
    parts_j: list[np.ndarray] = []
    size = 0
    for i in range(n - 1):
        js = np.arange(i + 1, n, dtype=np.intp)
        start = 0
        while start < js.size:
            take = min(js.size - start, limit - size)
            parts_i.append(np.full(take, i, dtype=np.intp))
            parts_j.append(js[start : start + take])
            size += take
            start += take
            if size >= limit:
                yield np.concatenate(parts_i), np.concatenate(parts_j)
                parts_i, parts_j, size = [], [], 0
    if size:
        yield np.concatenate(parts_i), np.concatenate(parts_j)


def _block_distances(x64: np.ndarray, idx_a: np.ndarray, idx_b: np.ndarray) -> np.ndarray:
    diff = x64[idx_a] - x64[idx_b]
    diff *= diff
    return np.sqrt(np.sum(diff, axis=1))


def score_identity(
    identity_id: str,
    samples: Sequence[SampleRecord],
    embeddings: EmbeddingMatrix,
    *,
    block_bytes: int = DEFAULT_BLOCK_BYTES,
) -> IdentityScore:
    """Exhaustive max over all C(n,2) positive pairs of one identity.

    Ties on the maximum break toward the lexicographically smallest (a, b);
    sample order in `samples` does not matter.
    """
    ordered = sorted(samples, key=lambda s: s.sample_id)
    n = len(ordered)
    pair_count = n * (n - 1) // 2
    if n < 2:
        return IdentityScore(identity_id, None, None, n, 0)
    rows = np.fromiter((s.row for s in ordered), dtype=np.intp, count=n)
    x64 = embeddings.values[rows].astype(np.float64)
    best = -np.inf
    best_a = best_b = -1
    for idx_a, idx_b in _pair_blocks(n, x64.shape[1], block_bytes):
        dist = _block_distances(x64, idx_a, idx_b)
        k = int(np.argmax(dist))
        if dist[k] > best:
            best = float(dist[k])
            best_a, best_b = int(idx_a[k]), int(idx_b[k])
    worst = PairScore(ordered[best_a].sample_id, ordered[best_b].sample_id, best)
    return IdentityScore(identity_id, best, worst, n, pair_count)


def score_all(
    manifest: DatasetManifest,
    embeddings: EmbeddingMatrix,
    *,
    threads: int | None = None,
    block_bytes: int = DEFAULT_BLOCK_BYTES,
) -> list[IdentityScore]:
    """Score every identity; one entry per identity in lexicographic order.

    The result is bitwise identical for any thread count: identities are
    independent and each is scored deterministically.
    """
    idents = list(manifest.identity_index)

    def one(ident: str) -> IdentityScore:
        return score_identity(ident, manifest.samples_of(ident), embeddings, block_bytes=block_bytes)

    workers = threads if threads is not None else (os.cpu_count() or 1)
    if workers <= 1 or len(idents) < 2:
        return [one(i) for i in idents]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, idents))


def l2_normalize(matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Scale every row to unit L2 norm; zero rows are left unchanged."""
    v = matrix.values.astype(np.float64)
    norms = np.sqrt(np.sum(v * v, axis=1, keepdims=True))
    norms[norms == 0.0] = 1.0
    return EmbeddingMatrix.from_array((v / norms).astype(np.float32))


def sort_for_export(scores: Sequence[IdentityScore]) -> list[IdentityScore]:
    """Scorable entries ordered by id_score descending, ties by identity_id."""
    scorable = [s for s in scores if s.scorable]
    return sorted(scorable, key=lambda s: (-s.id_score, s.identity_id))


def write_scores(
    scores: Sequence[IdentityScore], path: str | Path, comments: Sequence[str] = ()
) -> None:
    """Export scorable identities as delimited text, worst first.

    id_score is printed with 9 significant digits; unscorable identities
    carry no score and are omitted.
    """
    parts = [f"# {c}" for c in comments]
    parts.append(SCORES_HEADER)
    for s in sort_for_export(scores):
        parts.append(
            f"{s.identity_id},{s.id_score:.9g},{s.sample_count},{s.pair_count},"
            f"{s.worst_pair.a},{s.worst_pair.b}"
        )
    atomic_write_text(path, "\n".join(parts) + "\n")


def load_scores(path: str | Path) -> list[IdentityScore]:
    """Read a scores export back; worst-pair distance is the printed id_score."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln != ""]
    body = [ln for ln in lines if not ln.startswith("#")]
    if not body or body[0] != SCORES_HEADER:
        raise ScoresFormatError(f"missing header: expected '{SCORES_HEADER}'")
    out: list[IdentityScore] = []
    for ln in body[1:]:
        parts = ln.split(",")
        if len(parts) != 6:
            raise ScoresFormatError(f"malformed row: {ln!r}")
        ident, score_text, n_text, p_text, a, b = parts
        score = float(score_text)
        out.append(
            IdentityScore(ident, score, PairScore(a, b, score), int(n_text), int(p_text))
        )
    return out
