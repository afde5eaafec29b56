"""Human verdicts, cleaning plans, and their application to a manifest.

A reviewer tags each flagged identity with a mislabel type and (where it
matters) the samples to drop. Verdicts append to a durable log where the
newest verdict per identity wins. Compiling the log yields a plan of sample
and whole-folder removals; applying the plan produces the cleaned manifest
and a removal list. The pipeline only ever removes samples, it never
relabels them.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from ._util import atomic_write_text
from .dataset_io import DatasetManifest, build_manifest

REMOVE_SAMPLE = "REMOVE_SAMPLE"
REMOVE_IDENTITY = "REMOVE_IDENTITY"

REMOVALS_HEADER = "sample_id,identity_id,action,mislabel_type"

DEFAULT_MIN_REMAINING = 3

# Reference CelebA cleaning run, for documentation and sanity checks:
# 310 identities flagged at the worst 3%, of which 9 were false alarms
# (high intra-identity variation, nothing mislabeled); cleaning took the
# dataset from 202,599 samples / 10,177 identities down to 197,477 / 9,996.
CELEBA_REFERENCE = {
    "samples_before": 202_599,
    "identities_before": 10_177,
    "flagged_identities": 310,
    "false_alarms": 9,
    "contaminated_identities": 301,
    "samples_after": 197_477,
    "identities_after": 9_996,
}


class MislabelType(str, Enum):
    """How a flagged identity folder is contaminated, if at all.

    TYPE_A: one main identity plus some stray samples.
    TYPE_B: a grab bag of identities, none with a dominant presence.
    TYPE_C: exactly two identities sharing the folder.
    HIGH_VARIATION: flagged, but correctly labeled (false alarm).
    """

    TYPE_A = "TYPE_A"
    TYPE_B = "TYPE_B"
    TYPE_C = "TYPE_C"
    HIGH_VARIATION = "HIGH_VARIATION"


class VerdictError(ValueError):
    pass


class UnknownIdentityError(VerdictError):
    pass


class UnknownSampleError(VerdictError):
    pass


@dataclass(frozen=True)
class Verdict:
    """One reviewer decision about one identity folder."""

    identity_id: str
    mislabel_type: MislabelType
    removed_samples: frozenset[str]
    reviewer: str
    timestamp: datetime

    def __post_init__(self):
        if self.mislabel_type is MislabelType.HIGH_VARIATION and self.removed_samples:
            raise VerdictError("HIGH_VARIATION verdicts must not remove samples")
        if self.timestamp.tzinfo is None:
            raise VerdictError("verdict timestamps must be timezone-aware UTC instants")


def _format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat(timespec="microseconds").replace("+00:00", "Z")


def _parse_timestamp(text: str) -> datetime:
    return datetime.fromisoformat(text.replace("Z", "+00:00"))


def _verdict_to_json(v: Verdict) -> str:
    obj = {
        "identity_id": v.identity_id,
        "mislabel_type": v.mislabel_type.value,
        "removed_samples": sorted(v.removed_samples),
        "reviewer": v.reviewer,
        "timestamp": _format_timestamp(v.timestamp),
    }
    return json.dumps(obj, separators=(",", ":"))


def _verdict_from_json(line: str) -> Verdict:
    obj = json.loads(line)
    return Verdict(
        identity_id=obj["identity_id"],
        mislabel_type=MislabelType(obj["mislabel_type"]),
        removed_samples=frozenset(obj["removed_samples"]),
        reviewer=obj["reviewer"],
        timestamp=_parse_timestamp(obj["timestamp"]),
    )


class VerdictLog:
    """Append-only verdict history, optionally backed by a JSONL file.

    Appends to a file-backed log are flushed and fsynced before returning,
    so an acknowledged verdict survives a crash. The newest entry per
    identity is the effective one; full history is retained.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.entries: list[Verdict] = []

    @classmethod
    def load(cls, path: str | Path) -> "VerdictLog":
        log = cls(path)
        p = Path(path)
        if p.exists():
            for line in p.read_text(encoding="utf-8").split("\n"):
                if line:
                    log.entries.append(_verdict_from_json(line))
        return log

    def append(self, verdict: Verdict) -> None:
        self.entries.append(verdict)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(_verdict_to_json(verdict) + "\n")
                f.flush()
                os.fsync(f.fileno())

    def effective(self) -> dict[str, Verdict]:
        latest: dict[str, Verdict] = {}
        for v in self.entries:
            latest[v.identity_id] = v
        return latest

    def __len__(self) -> int:
        return len(self.entries)


def record_verdict(
    log: VerdictLog,
    verdict: Verdict,
    *,
    manifest: DatasetManifest,
    reviewable: Iterable[str] | None = None,
) -> VerdictLog:
    """Validate a verdict against the dataset and append it to the log.

    `reviewable` restricts verdicts to the currently flagged identities when
    given (the review service passes the report's identity set).
    """
    if reviewable is not None and verdict.identity_id not in set(reviewable):
        raise UnknownIdentityError(
            f"identity '{verdict.identity_id}' is not in the current outlier report"
        )
    if verdict.identity_id not in manifest.identity_index:
        raise UnknownIdentityError(f"identity '{verdict.identity_id}' is not in the manifest")
    members = {s.sample_id for s in manifest.samples_of(verdict.identity_id)}
    strays = verdict.removed_samples - members
    if strays:
        raise UnknownSampleError(
            f"samples {sorted(strays)} do not belong to identity '{verdict.identity_id}'"
        )
    log.append(verdict)
    return log


@dataclass
class CleaningPlan:
    """Compiled removals: (identity, sample, reason) triples and whole folders."""

    sample_removals: set[tuple[str, str, str]] = field(default_factory=set)
    identity_removals: set[tuple[str, str]] = field(default_factory=set)
    min_remaining: int = DEFAULT_MIN_REMAINING


def compile_plan(
    log: VerdictLog,
    manifest: DatasetManifest,
    min_remaining: int = DEFAULT_MIN_REMAINING,
) -> CleaningPlan:
    """Turn effective verdicts into removal actions.

    TYPE_C removes the reviewer-designated samples (the non-retained
    identity). TYPE_A removes the named samples, escalating to a whole-folder
    removal when fewer than `min_remaining` samples would survive. TYPE_B
    always removes the whole folder. HIGH_VARIATION does nothing.
    """
    if min_remaining < 1:
        raise VerdictError(f"min_remaining must be positive, got {min_remaining}")
    plan = CleaningPlan(min_remaining=min_remaining)
    for ident in sorted(log.effective()):
        verdict = log.effective()[ident]
        if ident not in manifest.identity_index:
            raise UnknownIdentityError(f"verdict references unknown identity '{ident}'")
        members = {s.sample_id for s in manifest.samples_of(ident)}
        strays = verdict.removed_samples - members
        if strays:
            raise UnknownSampleError(
                f"verdict for '{ident}' references unknown samples {sorted(strays)}"
            )
        kind = verdict.mislabel_type
        if kind is MislabelType.HIGH_VARIATION:
            continue
        if kind is MislabelType.TYPE_B:
            plan.identity_removals.add((ident, kind.value))
        elif kind is MislabelType.TYPE_A:
            if len(members) - len(verdict.removed_samples) < min_remaining:
                plan.identity_removals.add((ident, kind.value))
            else:
                for sample_id in verdict.removed_samples:
                    plan.sample_removals.add((ident, sample_id, kind.value))
        else:  # TYPE_C
            for sample_id in verdict.removed_samples:
                plan.sample_removals.add((ident, sample_id, kind.value))
    return plan


@dataclass(frozen=True, slots=True)
class RemovalRecord:
    sample_id: str
    identity_id: str
    action: str
    mislabel_type: str


def apply_plan(
    manifest: DatasetManifest, plan: CleaningPlan
) -> tuple[DatasetManifest, list[RemovalRecord]]:
    """Apply removals; returns the cleaned manifest and the removal list.

    Plan entries that no longer match the manifest are skipped, which makes
    application idempotent. Rows are preserved verbatim, so the cleaned
    manifest still pairs with the original embedding file.
    """
    removed_identities = {
        ident for ident, _ in plan.identity_removals if ident in manifest.identity_index
    }
    reason_of = dict(plan.identity_removals)
    removals: dict[str, RemovalRecord] = {}
    for ident in sorted(removed_identities):
        for rec in manifest.samples_of(ident):
            removals[rec.sample_id] = RemovalRecord(
                rec.sample_id, ident, REMOVE_IDENTITY, reason_of[ident]
            )
    sample_ids = {s.sample_id for s in manifest.samples}
    identity_of = {s.sample_id: s.identity_id for s in manifest.samples}
    for ident, sample_id, reason in sorted(plan.sample_removals):
        if ident in removed_identities:
            continue  # folder removal subsumes
        if sample_id in sample_ids and identity_of[sample_id] == ident:
            removals[sample_id] = RemovalRecord(sample_id, ident, REMOVE_SAMPLE, reason)
    kept = [s for s in manifest.samples if s.sample_id not in removals]
    cleaned = build_manifest(kept)
    removal_list = sorted(removals.values(), key=lambda r: (r.identity_id, r.sample_id))
    return cleaned, removal_list


def write_removal_list(
    records: Sequence[RemovalRecord], path: str | Path, comments: Sequence[str] = ()
) -> None:
    """Delimited-text removal list, sorted by identity then sample."""
    ordered = sorted(records, key=lambda r: (r.identity_id, r.sample_id))
    parts = [f"# {c}" for c in comments]
    parts.append(REMOVALS_HEADER)
    parts.extend(
        f"{r.sample_id},{r.identity_id},{r.action},{r.mislabel_type}" for r in ordered
    )
    atomic_write_text(path, "\n".join(parts) + "\n")


def load_removal_list(path: str | Path) -> list[RemovalRecord]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln != "" and not ln.startswith("#")]
    if not lines or lines[0] != REMOVALS_HEADER:
        raise VerdictError(f"missing removal-list header '{REMOVALS_HEADER}'")
    out = []
    for ln in lines[1:]:
        sample_id, identity_id, action, kind = ln.split(",")
        out.append(RemovalRecord(sample_id, identity_id, action, kind))
    return out
