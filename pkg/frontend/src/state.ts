/**
 * Draft verdict state. Pure logic, no DOM: the invariants the server
 * enforces are pre-validated here so the UI can never build a request the
 * service would reject.
 */

export const MISLABEL_KINDS = ["TYPE_A", "TYPE_B", "TYPE_C", "HIGH_VARIATION"] as const;
export type MislabelKind = (typeof MISLABEL_KINDS)[number];

export interface EffectiveVerdict {
  identity_id: string;
  mislabel_type: MislabelKind;
  removed_samples: string[];
  reviewer: string;
  timestamp: string;
}

export interface Draft {
  identityId: string;
  /** every sample id belonging to the folder */
  samples: ReadonlySet<string>;
  kind: MislabelKind | null;
  removed: Set<string>;
  reviewer: string;
}

export function createDraft(
  identityId: string,
  sampleIds: Iterable<string>,
  effective?: EffectiveVerdict | null,
  reviewer = "reviewer",
): Draft {
  const draft: Draft = {
    identityId,
    samples: new Set(sampleIds),
    kind: null,
    removed: new Set(),
    reviewer,
  };
  if (effective && effective.identity_id === identityId) {
    // revising a done identity starts from its effective verdict
    draft.kind = effective.mislabel_type;
    if (draft.kind !== "HIGH_VARIATION") {
      for (const s of effective.removed_samples) {
        if (draft.samples.has(s)) draft.removed.add(s);
      }
    }
  }
  return draft;
}

export function selectionLocked(draft: Draft): boolean {
  return draft.kind === "HIGH_VARIATION";
}

/** Toggle a sample in the removal set; returns false when the toggle is refused. */
export function toggleSample(draft: Draft, sampleId: string): boolean {
  if (selectionLocked(draft)) return false;
  if (!draft.samples.has(sampleId)) return false;
  if (draft.removed.has(sampleId)) {
    draft.removed.delete(sampleId);
  } else {
    draft.removed.add(sampleId);
  }
  return true;
}

export function setKind(draft: Draft, kind: MislabelKind): void {
  draft.kind = kind;
  if (kind === "HIGH_VARIATION") draft.removed.clear();
}

export function cycleKind(draft: Draft): MislabelKind {
  const idx = draft.kind === null ? -1 : MISLABEL_KINDS.indexOf(draft.kind);
  const next = MISLABEL_KINDS[(idx + 1) % MISLABEL_KINDS.length];
  setKind(draft, next);
  return next;
}

export function canSubmit(draft: Draft): boolean {
  if (draft.kind === null) return false;
  if (draft.kind === "HIGH_VARIATION" && draft.removed.size > 0) return false;
  for (const s of draft.removed) {
    if (!draft.samples.has(s)) return false;
  }
  return true;
}

export interface VerdictPayload {
  identity_id: string;
  mislabel_type: MislabelKind;
  removed_samples: string[];
  reviewer: string;
}

export function toPayload(draft: Draft): VerdictPayload {
  if (!canSubmit(draft) || draft.kind === null) {
    throw new Error("draft is not submittable");
  }
  return {
    identity_id: draft.identityId,
    mislabel_type: draft.kind,
    removed_samples: [...draft.removed].sort(),
    reviewer: draft.reviewer,
  };
}
