"""Synthetic fixture generator: spherical identity clusters, optional noise.

Each identity is a unit-variance Gaussian cluster around its own centroid.
Contamination imports samples drawn from other identities' clusters into a
folder, which is exactly the label noise the pipeline is meant to surface.
The generator is fully seeded; the same spec always produces the same
dataset down to the last bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset_io import DatasetManifest, EmbeddingMatrix, SampleRecord, build_manifest


class SynthError(ValueError):
    pass


@dataclass
class SynthSpec:
    identities: int = 100
    dim: int = 32
    size_min: int = 10
    size_max: int = 30
    centroid_scale: float = 8.0
    min_separation: float = 12.0  # 0 disables the pairwise centroid check
    contaminated: int = 3
    imports_per_identity: int = 2
    total_samples: int | None = None  # rebalance folder sizes to hit exactly
    seed: int = 0


@dataclass
class SynthTruth:
    """Ground truth of a generated fixture, for tests and scripted review."""

    contaminated: dict[str, list[str]]  # identity -> imported sample ids
    donors: dict[str, str]  # imported sample id -> donor identity
    spec: SynthSpec = field(repr=False, default_factory=SynthSpec)

    def to_dict(self) -> dict:
        return {
            "contaminated": self.contaminated,
            "donors": self.donors,
            "spec": vars(self.spec),
        }


def _folder_sizes(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    sizes = rng.integers(spec.size_min, spec.size_max + 1, size=spec.identities)
    if spec.total_samples is None:
        return sizes
    # Nudge sizes round-robin within bounds until the total matches exactly.
    diff = spec.total_samples - int(sizes.sum())
    step = 1 if diff > 0 else -1
    bound = spec.size_max if diff > 0 else spec.size_min
    i = 0
    while diff != 0:
        if sizes[i % spec.identities] != bound:
            sizes[i % spec.identities] += step
            diff -= step
        i += 1
        if i > 100 * spec.identities and diff != 0:
            raise SynthError("cannot reach total_samples within size bounds")
    return sizes


def _place_centroids(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.min_separation <= 0:
        return rng.standard_normal((spec.identities, spec.dim)) * spec.centroid_scale
    centroids = np.empty((spec.identities, spec.dim))
    placed = 0
    attempts = 0
    while placed < spec.identities:
        cand = rng.standard_normal(spec.dim) * spec.centroid_scale
        if placed:
            gaps = np.sqrt(np.sum((centroids[:placed] - cand) ** 2, axis=1))
            if gaps.min() < spec.min_separation:
                attempts += 1
                if attempts > 1000 * spec.identities:
                    raise SynthError(
                        "cannot place centroids at the requested separation; "
                        "raise centroid_scale or lower min_separation"
                    )
                continue
        centroids[placed] = cand
        placed += 1
    return centroids


def generate(spec: SynthSpec) -> tuple[DatasetManifest, EmbeddingMatrix, SynthTruth]:
    """Build (manifest, embeddings, truth) for the given spec."""
    if spec.identities < 1 or spec.dim < 1:
        raise SynthError("identities and dim must be positive")
    if not 2 <= spec.size_min <= spec.size_max:
        raise SynthError("need 2 <= size_min <= size_max")
    if spec.contaminated > spec.identities - 1 and spec.contaminated > 0:
        raise SynthError("contaminated identities need at least one donor identity")
    rng = np.random.default_rng(spec.seed)

    sizes = _folder_sizes(spec, rng)
    centroids = _place_centroids(spec, rng)
    width = max(4, len(str(spec.identities - 1)))
    idents = [f"id{idx:0{width}d}" for idx in range(spec.identities)]

    records: list[SampleRecord] = []
    vectors: list[np.ndarray] = []
    row = 0
    for idx, ident in enumerate(idents):
        n = int(sizes[idx])
        cluster = centroids[idx].astype(np.float32) + rng.standard_normal(
            (n, spec.dim), dtype=np.float32
        )
        for k in range(n):
            sample_id = f"{ident}_s{k:04d}"
            records.append(SampleRecord(sample_id, ident, f"{ident}/{sample_id}.jpg", row))
            row += 1
        vectors.append(cluster)

    contaminated: dict[str, list[str]] = {}
    donors: dict[str, str] = {}
    if spec.contaminated > 0:
        victims = sorted(rng.choice(spec.identities, size=spec.contaminated, replace=False).tolist())
        for vi in victims:
            ident = idents[vi]
            imported: list[str] = []
            extra = np.empty((spec.imports_per_identity, spec.dim), dtype=np.float32)
            for k in range(spec.imports_per_identity):
                donor = int(rng.integers(0, spec.identities - 1))
                if donor >= vi:
                    donor += 1  # skip the victim itself
                extra[k] = centroids[donor].astype(np.float32) + rng.standard_normal(
                    spec.dim, dtype=np.float32
                )
                sample_id = f"{ident}_x{k:02d}"
                records.append(SampleRecord(sample_id, ident, f"{ident}/{sample_id}.jpg", row))
                row += 1
                imported.append(sample_id)
                donors[sample_id] = idents[donor]
            vectors.append(extra)
            contaminated[ident] = imported

    values = np.concatenate(vectors, axis=0) if vectors else np.zeros((0, spec.dim), np.float32)
    manifest = build_manifest(records)
    matrix = EmbeddingMatrix.from_array(values)
    return manifest, matrix, SynthTruth(contaminated=contaminated, donors=donors, spec=spec)
