import type { EffectiveVerdict, MislabelKind } from "./state.js";

export type { EffectiveVerdict, MislabelKind };

export interface QueueRow {
  identity_id: string;
  id_score: number;
  queue_length: number;
  status: "pending" | "done";
}

export interface SampleView {
  sample_id: string;
  image_path: string;
  image_url: string;
  in_queue: boolean;
  frequency: number;
}

export interface PairView {
  a: string;
  b: string;
  distance: number;
  a_url: string;
  b_url: string;
}

export interface IdentityDetail {
  identity_id: string;
  id_score: number;
  sample_count: number;
  pair_count: number;
  no_specific_pair: boolean;
  status: "pending" | "done";
  review_queue: string[];
  samples: SampleView[];
  flagged_pairs: PairView[];
  effective_verdict: EffectiveVerdict | null;
}

export interface Progress {
  pending: number;
  done: number;
  total: number;
}

export interface Census {
  samples_before: number;
  samples_after: number;
  identities_before: number;
  identities_after: number;
  removed_samples: number;
  removed_identities: number;
  flagged_identities?: number;
  verdict_counts?: Record<string, number>;
  false_alarms?: number;
  contaminated_identities?: number;
}
