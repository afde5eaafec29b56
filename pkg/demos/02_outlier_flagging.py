#!/usr/bin/env python3
# Two-stage outlier selection and the greedy review queue.
#
# Stage 1 flags the worst 3% of identities by id score. Stage 2 computes a
# global pair threshold (the mean of all id scores), records every pair
# above it, counts each sample's appearances (image frequency), and picks
# samples for review until the flagged-pair budget is spent. With planted
# contamination, the queue lands exactly on the imported samples.

from idclean import SynthSpec, build_report, generate, score_all

spec = SynthSpec(seed=42)  # 100 clusters, 3 contaminated with 2 imports each
manifest, embeddings, truth = generate(spec)
print(f"dataset: {manifest.sample_count} samples, {manifest.identity_count} identities")
print(f"planted contamination: {truth.contaminated}")
print()

scores = score_all(manifest, embeddings)
report = build_report(scores, manifest, embeddings, fraction=0.03)

print(f"pair threshold (mean of id scores): {report.pair_threshold:.3f}")
print(f"flagged identities ({report.flag_count}): {report.flagged_identities}")
print()

for entry in report.entries:
    print(f"--- {entry.identity_id} (id score {entry.id_score:.2f}, "
          f"{len(entry.flagged_pairs)} flagged pairs)")
    busiest = sorted(entry.image_frequency.items(), key=lambda kv: -kv[1])[:4]
    for sample, freq in busiest:
        marker = "  <-- imported" if sample in truth.contaminated[entry.identity_id] else ""
        print(f"    frequency {freq:3d}  {sample}{marker}")
    print(f"    review queue: {entry.review_queue}")

print()
print("every imported sample tops its folder's frequency table and the greedy")
print("selection stops right after collecting them.")
