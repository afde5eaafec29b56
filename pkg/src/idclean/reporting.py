"""Diagnostics: id-score histograms, verification ROC curves, and a census.

The ROC treats a pair as "predicted same identity" when its embedding
distance is at or below the threshold. Positive pairs are intra-identity
(all of them up to a cap, then a seeded subsample); negative pairs are a
seeded uniform sample of inter-identity pairs. The curve sweeps every
distinct observed distance; the area under it is the trapezoidal rule
evaluated in exact integer count space, so perfectly separated data yields
exactly 1.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ._util import atomic_write_text
from .cleaning import MislabelType, RemovalRecord, VerdictLog
from .dataset_io import DatasetManifest, EmbeddingMatrix
from .scoring import DEFAULT_BLOCK_BYTES, IdentityScore

DEFAULT_BIN_COUNT = 50
DEFAULT_POSITIVE_CAP = 1_000_000

HISTOGRAM_HEADER = "bin_lo,bin_hi,count"
ROC_HEADER = "threshold,tpr,fpr"


class ReportingError(ValueError):
    pass


@dataclass
class Histogram:
    """Equal-width binning of id scores over [0, upper]."""

    bin_edges: list[float]
    counts: list[int]
    total: int


def id_score_histogram(
    scores: Sequence[IdentityScore],
    bin_count: int = DEFAULT_BIN_COUNT,
    *,
    upper: float | None = None,
) -> Histogram:
    """Bin every scorable identity's id score into `bin_count` equal bins.

    Bins span [0, max id score] unless `upper` pins the top edge (pass the
    before-cleaning edge to compare distributions on a shared axis); values
    above `upper` count in the top bin. If all scores are zero the span
    falls back to [0, 1].
    """
    if bin_count < 1:
        raise ReportingError(f"bin_count must be >= 1, got {bin_count}")
    values = np.array([s.id_score for s in scores if s.scorable], dtype=np.float64)
    if values.size == 0:
        raise ReportingError("no scorable identities to bin")
    top = float(upper) if upper is not None else float(values.max())
    if top <= 0.0:
        top = 1.0
    edges = np.linspace(0.0, top, bin_count + 1)
    counts, _ = np.histogram(np.clip(values, 0.0, top), bins=edges)
    return Histogram(
        bin_edges=[float(e) for e in edges],
        counts=[int(c) for c in counts],
        total=int(values.size),
    )


@dataclass
class RocCurve:
    """Verification ROC over sampled positive and negative pairs."""

    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float
    positives: int
    negatives: int

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return [
            (float(t), float(p), float(f))
            for t, p, f in zip(self.thresholds, self.tpr, self.fpr)
        ]


def _pair_from_index(n: int, p: int) -> tuple[int, int]:
    """Decode lexicographic pair index p into (i, j), i < j, over n items."""
    # pairs before row i: f(i) = i*(2n - i - 1)/2; invert with integer sqrt
    s = math.isqrt((2 * n - 1) * (2 * n - 1) - 8 * p)
    i = (2 * n - 1 - s) // 2
    while i * (2 * n - i - 1) // 2 > p:
        i -= 1
    while (i + 1) * (2 * n - i - 2) // 2 <= p:
        i += 1
    j = i + 1 + (p - i * (2 * n - i - 1) // 2)
    return i, j


def _sample_distinct(rng: np.random.Generator, total: int, k: int) -> list[int]:
    """k distinct integers in [0, total), deterministic for a given rng state."""
    if k >= total:
        return list(range(total))
    if total <= max(4 * k, 1 << 22):
        return sorted(int(v) for v in rng.permutation(total)[:k])
    chosen: set[int] = set()
    while len(chosen) < k:
        for v in rng.integers(0, total, size=2 * (k - len(chosen)) + 64).tolist():
            if len(chosen) >= k:
                break
            chosen.add(int(v))
    return sorted(chosen)


def _batched_distances(
    values: np.ndarray, rows_a: np.ndarray, rows_b: np.ndarray, block_bytes: int
) -> np.ndarray:
    dim = values.shape[1] if values.ndim == 2 else 1
    step = max(1, block_bytes // (max(dim, 1) * 16))
    out = np.empty(rows_a.size, dtype=np.float64)
    for lo in range(0, rows_a.size, step):
        hi = min(lo + step, rows_a.size)
        diff = values[rows_a[lo:hi]].astype(np.float64) - values[rows_b[lo:hi]].astype(np.float64)
        diff *= diff
        out[lo:hi] = np.sqrt(np.sum(diff, axis=1))
    return out


def verification_roc(
    manifest: DatasetManifest,
    embeddings: EmbeddingMatrix,
    negative_pair_count: int | None = None,
    seed: int = 0,
    *,
    positive_cap: int = DEFAULT_POSITIVE_CAP,
    block_bytes: int = DEFAULT_BLOCK_BYTES,
) -> RocCurve:
    """Seeded, fully reproducible verification ROC.

    Defaults to as many negative pairs as positive ones. Requests beyond the
    number of existing inter-identity pairs are capped.
    """
    if manifest.identity_count < 2:
        raise ReportingError("ROC needs at least 2 identities")
    if negative_pair_count is not None and negative_pair_count < 1:
        raise ReportingError("negative_pair_count must be >= 1")
    rng = np.random.default_rng(seed)
    samples = manifest.samples
    n_total = len(samples)
    rows = np.fromiter((s.row for s in samples), dtype=np.intp, count=n_total)

    # Positive pairs: per identity, positions in sample_id order.
    group_positions = [np.array(pos, dtype=np.intp) for pos in manifest.identity_index.values()]
    group_sizes = [int(g.size) for g in group_positions]
    pair_counts = [m * (m - 1) // 2 for m in group_sizes]
    total_pos = sum(pair_counts)
    if total_pos == 0:
        raise ReportingError("no intra-identity pairs exist")

    if total_pos <= positive_cap:
        pos_a = np.empty(total_pos, dtype=np.intp)
        pos_b = np.empty(total_pos, dtype=np.intp)
        k = 0
        for g in group_positions:
            m = g.size
            if m < 2:
                continue
            ii, jj = np.triu_indices(m, 1)
            c = ii.size
            pos_a[k : k + c] = g[ii]
            pos_b[k : k + c] = g[jj]
            k += c
    else:
        cum = np.cumsum(pair_counts)
        picked = _sample_distinct(rng, total_pos, positive_cap)
        pos_a = np.empty(len(picked), dtype=np.intp)
        pos_b = np.empty(len(picked), dtype=np.intp)
        for out_idx, global_p in enumerate(picked):
            gi = int(np.searchsorted(cum, global_p, side="right"))
            local = global_p - (int(cum[gi - 1]) if gi else 0)
            i, j = _pair_from_index(group_sizes[gi], local)
            pos_a[out_idx] = group_positions[gi][i]
            pos_b[out_idx] = group_positions[gi][j]

    # Negative pairs: uniform over inter-identity sample pairs, no repeats.
    labels = np.zeros(n_total, dtype=np.int64)
    for code, ident in enumerate(manifest.identity_index):
        labels[manifest.identity_index[ident]] = code
    total_all = n_total * (n_total - 1) // 2
    inter_total = total_all - total_pos
    if inter_total == 0:
        raise ReportingError("no inter-identity pairs exist")
    want = negative_pair_count if negative_pair_count is not None else pos_a.size
    want = min(want, inter_total)
    if total_all <= 2_000_000:
        all_i, all_j = np.triu_indices(n_total, 1)
        inter_mask = labels[all_i] != labels[all_j]
        cand_i = all_i[inter_mask]
        cand_j = all_j[inter_mask]
        take = np.array(_sample_distinct(rng, cand_i.size, want), dtype=np.intp)
        neg_a = cand_i[take].astype(np.intp)
        neg_b = cand_j[take].astype(np.intp)
    else:
        chosen: dict[int, tuple[int, int]] = {}
        while len(chosen) < want:
            need = want - len(chosen)
            us = rng.integers(0, n_total, size=2 * need + 64)
            vs = rng.integers(0, n_total, size=2 * need + 64)
            for u, v in zip(us.tolist(), vs.tolist()):
                if len(chosen) >= want:
                    break
                if u == v or labels[u] == labels[v]:
                    continue
                lo, hi = (u, v) if u < v else (v, u)
                chosen.setdefault(lo * n_total + hi, (lo, hi))
        ordered = [chosen[key] for key in sorted(chosen)]
        neg_a = np.array([p[0] for p in ordered], dtype=np.intp)
        neg_b = np.array([p[1] for p in ordered], dtype=np.intp)

    pos_d = _batched_distances(embeddings.values, rows[pos_a], rows[pos_b], block_bytes)
    neg_d = _batched_distances(embeddings.values, rows[neg_a], rows[neg_b], block_bytes)

    thresholds = np.unique(np.concatenate([pos_d, neg_d]))
    pos_sorted = np.sort(pos_d)
    neg_sorted = np.sort(neg_d)
    tp = np.searchsorted(pos_sorted, thresholds, side="right")
    fp = np.searchsorted(neg_sorted, thresholds, side="right")

    # Trapezoid in integer count space, anchored at (0, 0): exact, so
    # perfectly separated data integrates to exactly 1.0.
    tp_prev = np.concatenate([[0], tp[:-1]])
    fp_prev = np.concatenate([[0], fp[:-1]])
    area2 = int(np.sum((fp - fp_prev) * (tp + tp_prev)))
    positives = int(pos_d.size)
    negatives = int(neg_d.size)
    auc = area2 / (2 * positives * negatives)

    return RocCurve(
        thresholds=thresholds,
        tpr=tp / positives,
        fpr=fp / negatives,
        auc=auc,
        positives=positives,
        negatives=negatives,
    )


def summary(
    before: DatasetManifest,
    after: DatasetManifest,
    removal_list: Sequence[RemovalRecord],
    *,
    verdict_log: VerdictLog | None = None,
    flagged_count: int | None = None,
) -> dict:
    """Census of a cleaning run: before/after counts and verdict breakdown."""
    record: dict = {
        "samples_before": before.sample_count,
        "samples_after": after.sample_count,
        "identities_before": before.identity_count,
        "identities_after": after.identity_count,
        "removed_samples": len(removal_list),
        "removed_identities": before.identity_count - after.identity_count,
    }
    if flagged_count is not None:
        record["flagged_identities"] = flagged_count
    if verdict_log is not None:
        breakdown = {t.value: 0 for t in MislabelType}
        for verdict in verdict_log.effective().values():
            breakdown[verdict.mislabel_type.value] += 1
        record["verdict_counts"] = breakdown
        record["false_alarms"] = breakdown[MislabelType.HIGH_VARIATION.value]
        record["contaminated_identities"] = (
            sum(breakdown.values()) - breakdown[MislabelType.HIGH_VARIATION.value]
        )
    return record


def write_histogram_csv(hist: Histogram, path: str | Path, comments: Sequence[str] = ()) -> None:
    parts = [f"# {c}" for c in comments]
    parts.append(HISTOGRAM_HEADER)
    for k, count in enumerate(hist.counts):
        parts.append(f"{hist.bin_edges[k]!r},{hist.bin_edges[k + 1]!r},{count}")
    atomic_write_text(path, "\n".join(parts) + "\n")


def write_roc_csv(roc: RocCurve, path: str | Path, comments: Sequence[str] = ()) -> None:
    parts = [f"# {c}" for c in comments]
    parts.append(ROC_HEADER)
    for t, p, f in zip(roc.thresholds, roc.tpr, roc.fpr):
        parts.append(f"{float(t)!r},{float(p)!r},{float(f)!r}")
    atomic_write_text(path, "\n".join(parts) + "\n")
