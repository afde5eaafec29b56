"""Two-stage outlier selection and the greedy review-queue rule.

Stage one flags the worst few percent of identities by id score. Stage two
takes the mean of all id scores as a global pair threshold, records every
positive pair scoring strictly above it, counts how often each sample
appears in those pairs (its image frequency), and greedily picks samples
for manual review until the per-identity flagged-pair budget is spent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._util import atomic_write_text
from .dataset_io import DatasetManifest, EmbeddingMatrix, SampleRecord
from .scoring import (
    DEFAULT_BLOCK_BYTES,
    IdentityScore,
    PairScore,
    _block_distances,
    _pair_blocks,
)

DEFAULT_IDENTITY_FRACTION = 0.03

# Observed on the reference CelebA cleaning run (202,599 samples, 10,177
# identities): the mean id score there lands at 1.0. Documentation value
# only; compute_pair_threshold always derives the live threshold from the
# scores at hand.
REFERENCE_PAIR_THRESHOLD = 1.0

REPORT_FORMAT = "idclean-report-v1"
FLAGS_FORMAT = "idclean-flags-v1"


class OutlierError(ValueError):
    pass


class ReportFormatError(ValueError):
    """Report file violates the format contract."""


@dataclass
class FlaggedIdentity:
    """One flagged identity: its pairs over threshold, frequencies, queue."""

    identity_id: str
    id_score: float
    sample_count: int
    pair_count: int
    flagged_pairs: list[PairScore]
    image_frequency: dict[str, int]
    review_queue: list[str]


@dataclass
class OutlierReport:
    """Flagged identities with pair evidence and per-identity review queues."""

    fraction: float
    flag_count: int
    flag_count_source: str  # "fraction" | "override"
    pair_threshold: float
    threshold_source: str  # "mean" | "override"
    scorable_count: int
    entries: list[FlaggedIdentity]
    has_queues: bool = True
    provenance: dict = field(default_factory=dict)

    @property
    def flagged_identities(self) -> list[str]:
        return [e.identity_id for e in self.entries]


def _ceil_fraction(fraction: float, n: int) -> int:
    # Exact rational ceil: binary float noise at integer boundaries must not
    # change the count (0.07 of 100 is 7, never 8).
    return math.ceil(Fraction(fraction).limit_denominator(10**9) * n)


def threshold_identities(scores: Sequence[IdentityScore], fraction: float) -> list[str]:
    """The ceil(fraction * N) scorable identities with the largest id score.

    Ordered by id_score descending, ties by identity_id ascending.
    """
    if not 0 < fraction <= 1:
        raise OutlierError(f"fraction must be in (0, 1], got {fraction}")
    scorable = [s for s in scores if s.scorable]
    if not scorable:
        raise OutlierError("no scorable identities (every identity has < 2 samples)")
    k = _ceil_fraction(fraction, len(scorable))
    ranked = sorted(scorable, key=lambda s: (-s.id_score, s.identity_id))
    return [s.identity_id for s in ranked[:k]]


def compute_pair_threshold(
    scores: Sequence[IdentityScore], excluding: Iterable[str] = ()
) -> float:
    """Arithmetic mean of id_score over all scorable identities.

    Summed in ascending identity order so the result does not depend on how
    the caller happened to order the list. `excluding` drops identities from
    the mean (used by the sensitivity option that leaves flagged identities
    out of the threshold).
    """
    skip = set(excluding)
    scorable = sorted(
        (s for s in scores if s.scorable and s.identity_id not in skip),
        key=lambda s: s.identity_id,
    )
    if not scorable:
        raise OutlierError("no scorable identities (every identity has < 2 samples)")
    arr = np.array([s.id_score for s in scorable], dtype=np.float64)
    return float(np.sum(arr) / arr.size)


def flag_pairs(
    samples: Sequence[SampleRecord],
    embeddings: EmbeddingMatrix,
    pair_threshold: float,
    *,
    block_bytes: int = DEFAULT_BLOCK_BYTES,
) -> tuple[list[PairScore], dict[str, int]]:
    """All positive pairs with distance strictly above the threshold.

    Returns the pairs (distance descending, ties by (a, b) ascending) and the
    image frequency map: how many flagged pairs each sample appears in.
    """
    ordered = sorted(samples, key=lambda s: s.sample_id)
    n = len(ordered)
    flagged: list[PairScore] = []
    if n >= 2:
        rows = np.fromiter((s.row for s in ordered), dtype=np.intp, count=n)
        x64 = embeddings.values[rows].astype(np.float64)
        for idx_a, idx_b in _pair_blocks(n, x64.shape[1], block_bytes):
            dist = _block_distances(x64, idx_a, idx_b)
            for k in np.nonzero(dist > pair_threshold)[0]:
                flagged.append(
                    PairScore(
                        ordered[int(idx_a[k])].sample_id,
                        ordered[int(idx_b[k])].sample_id,
                        float(dist[k]),
                    )
                )
    flagged.sort(key=lambda p: (-p.distance, p.a, p.b))
    counts: dict[str, int] = {}
    for p in flagged:
        counts[p.a] = counts.get(p.a, 0) + 1
        counts[p.b] = counts.get(p.b, 0) + 1
    frequency = {s: counts[s] for s in sorted(counts)}
    return flagged, frequency


def build_review_queue(
    flagged_pairs: Sequence[PairScore], image_frequency: Mapping[str, int]
) -> list[str]:
    """Greedy selection of samples for manual examination.

    The budget starts at the number of flagged pairs. Samples sorted by image
    frequency descending (ties by sample_id ascending) are taken top-down,
    each selection subtracting its frequency from the budget, stopping as
    soon as the budget reaches zero or below.
    """
    budget = len(flagged_pairs)
    ranked = sorted(image_frequency.items(), key=lambda kv: (-kv[1], kv[0]))
    queue: list[str] = []
    for sample_id, freq in ranked:
        if budget <= 0:
            break
        queue.append(sample_id)
        budget -= freq
    return queue


def build_report(
    scores: Sequence[IdentityScore],
    manifest: DatasetManifest,
    embeddings: EmbeddingMatrix,
    *,
    fraction: float = DEFAULT_IDENTITY_FRACTION,
    pair_threshold: float | None = None,
    flag_count: int | None = None,
    exclude_flagged_from_threshold: bool = False,
    include_queues: bool = True,
    block_bytes: int = DEFAULT_BLOCK_BYTES,
    provenance: dict | None = None,
) -> OutlierReport:
    """Run both thresholding stages and assemble the review report.

    `pair_threshold` overrides the computed mean; `flag_count` overrides the
    fraction-derived flag count with an absolute number of identities;
    `exclude_flagged_from_threshold` leaves the flagged identities out of
    the mean (sensitivity studies only, the default keeps them in).
    """
    scorable = [s for s in scores if s.scorable]
    if not scorable:
        raise OutlierError("no scorable identities (every identity has < 2 samples)")
    by_id = {s.identity_id: s for s in scorable}

    if flag_count is not None:
        if not 0 <= flag_count <= len(scorable):
            raise OutlierError(
                f"flag count must be in [0, {len(scorable)}], got {flag_count}"
            )
        ranked = sorted(scorable, key=lambda s: (-s.id_score, s.identity_id))
        flagged_ids = [s.identity_id for s in ranked[:flag_count]]
        count_source = "override"
    else:
        flagged_ids = threshold_identities(scores, fraction)
        count_source = "fraction"

    if pair_threshold is not None:
        if pair_threshold < 0:
            raise OutlierError(f"pair threshold must be nonnegative, got {pair_threshold}")
        threshold = float(pair_threshold)
        threshold_source = "override"
    elif exclude_flagged_from_threshold:
        threshold = compute_pair_threshold(scores, excluding=flagged_ids)
        threshold_source = "mean-excluding-flagged"
    else:
        threshold = compute_pair_threshold(scores)
        threshold_source = "mean"

    entries: list[FlaggedIdentity] = []
    for ident in flagged_ids:
        samples = manifest.samples_of(ident)
        pairs, frequency = flag_pairs(samples, embeddings, threshold, block_bytes=block_bytes)
        queue = build_review_queue(pairs, frequency) if include_queues else []
        rec = by_id[ident]
        entries.append(
            FlaggedIdentity(
                identity_id=ident,
                id_score=rec.id_score,
                sample_count=rec.sample_count,
                pair_count=rec.pair_count,
                flagged_pairs=pairs,
                image_frequency=frequency,
                review_queue=queue,
            )
        )
    return OutlierReport(
        fraction=fraction,
        flag_count=len(flagged_ids),
        flag_count_source=count_source,
        pair_threshold=threshold,
        threshold_source=threshold_source,
        scorable_count=len(scorable),
        entries=entries,
        has_queues=include_queues,
        provenance=dict(provenance or {}),
    )


def attach_queues(report: OutlierReport) -> OutlierReport:
    """Fill in the review queue of every entry from its pairs and frequencies."""
    entries = [
        FlaggedIdentity(
            identity_id=e.identity_id,
            id_score=e.id_score,
            sample_count=e.sample_count,
            pair_count=e.pair_count,
            flagged_pairs=list(e.flagged_pairs),
            image_frequency=dict(e.image_frequency),
            review_queue=build_review_queue(e.flagged_pairs, e.image_frequency),
        )
        for e in report.entries
    ]
    return OutlierReport(
        fraction=report.fraction,
        flag_count=report.flag_count,
        flag_count_source=report.flag_count_source,
        pair_threshold=report.pair_threshold,
        threshold_source=report.threshold_source,
        scorable_count=report.scorable_count,
        entries=entries,
        has_queues=True,
        provenance=dict(report.provenance),
    )


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"))


def write_report(report: OutlierReport, path: str | Path) -> None:
    """Serialize as JSON Lines: a header object, then one object per identity.

    Key order is fixed and floats use shortest round-trip repr, so identical
    reports serialize to identical bytes.
    """
    header = {
        "format": REPORT_FORMAT if report.has_queues else FLAGS_FORMAT,
        "fraction": report.fraction,
        "flag_count": report.flag_count,
        "flag_count_source": report.flag_count_source,
        "pair_threshold": report.pair_threshold,
        "threshold_source": report.threshold_source,
        "scorable_identities": report.scorable_count,
        "provenance": report.provenance,
    }
    lines = [_dump(header)]
    for e in report.entries:
        obj = {
            "identity_id": e.identity_id,
            "id_score": e.id_score,
            "sample_count": e.sample_count,
            "pair_count": e.pair_count,
            "flagged_pairs": [[p.a, p.b, p.distance] for p in e.flagged_pairs],
            "image_frequency": e.image_frequency,
        }
        if report.has_queues:
            obj["review_queue"] = e.review_queue
        lines.append(_dump(obj))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_report(path: str | Path) -> OutlierReport:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln != ""]
    if not lines:
        raise ReportFormatError("empty report file")
    header = json.loads(lines[0])
    fmt = header.get("format")
    if fmt not in (REPORT_FORMAT, FLAGS_FORMAT):
        raise ReportFormatError(f"unknown report format tag: {fmt!r}")
    has_queues = fmt == REPORT_FORMAT
    entries = []
    for ln in lines[1:]:
        obj = json.loads(ln)
        entries.append(
            FlaggedIdentity(
                identity_id=obj["identity_id"],
                id_score=obj["id_score"],
                sample_count=obj["sample_count"],
                pair_count=obj["pair_count"],
                flagged_pairs=[PairScore(a, b, d) for a, b, d in obj["flagged_pairs"]],
                image_frequency=dict(obj["image_frequency"]),
                review_queue=list(obj.get("review_queue", [])),
            )
        )
    return OutlierReport(
        fraction=header["fraction"],
        flag_count=header["flag_count"],
        flag_count_source=header.get("flag_count_source", "fraction"),
        pair_threshold=header["pair_threshold"],
        threshold_source=header.get("threshold_source", "mean"),
        scorable_count=header["scorable_identities"],
        entries=entries,
        has_queues=has_queues,
        provenance=dict(header.get("provenance", {})),
    )
