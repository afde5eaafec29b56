#!/usr/bin/env python3
# From human verdicts to a cleaned manifest.
#
# A reviewer tags each flagged identity: TYPE_A (main identity + strays,
# remove the strays), TYPE_B (mixed folder, drop it whole), TYPE_C (two
# identities, remove the designated one), or HIGH_VARIATION (false alarm,
# keep everything). Compiling the verdict log yields removal actions;
# applying them produces the cleaned manifest plus a removal list.

from datetime import datetime, timezone

from idclean import (
    MislabelType,
    SynthSpec,
    Verdict,
    VerdictLog,
    apply_plan,
    build_report,
    compile_plan,
    generate,
    score_all,
    summary,
)

manifest, embeddings, truth = generate(SynthSpec(seed=5, contaminated=4))
scores = score_all(manifest, embeddings)
report = build_report(scores, manifest, embeddings, flag_count=4)
flagged = report.flagged_identities
print(f"flagged for review: {flagged}")

now = datetime.now(timezone.utc)
log = VerdictLog()
log.append(Verdict(flagged[0], MislabelType.TYPE_A,
                   frozenset(truth.contaminated[flagged[0]]), "demo", now))
log.append(Verdict(flagged[1], MislabelType.TYPE_B, frozenset(), "demo", now))
log.append(Verdict(flagged[2], MislabelType.TYPE_C,
                   frozenset(truth.contaminated[flagged[2]]), "demo", now))
log.append(Verdict(flagged[3], MislabelType.HIGH_VARIATION, frozenset(), "demo", now))

# a second look at the last identity supersedes the first verdict
log.append(Verdict(flagged[3], MislabelType.HIGH_VARIATION, frozenset(), "demo-2", now))
print(f"verdict log holds {len(log)} entries, "
      f"{len(log.effective())} effective (latest per identity wins)")

plan = compile_plan(log, manifest, min_remaining=3)
cleaned, removals = apply_plan(manifest, plan)

print()
print("removal list:")
for r in removals[:8]:
    print(f"  {r.sample_id:18s} {r.identity_id:8s} {r.action:16s} {r.mislabel_type}")
if len(removals) > 8:
    print(f"  ... {len(removals) - 8} more")

census = summary(manifest, cleaned, removals, verdict_log=log,
                 flagged_count=len(flagged))
print()
for key, value in census.items():
    print(f"  {key}: {value}")

# applying the same plan again is a no-op
again, extra = apply_plan(cleaned, plan)
print()
print(f"re-apply removed {len(extra)} samples (idempotent)")
