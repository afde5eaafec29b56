"""idclean: semi-automatic cleaning of identity-labeled image datasets.

The pipeline scores every intra-identity embedding pair, flags outlier
identities and low-confidence samples, builds a prioritized human review
queue, and compiles reviewer verdicts into a cleaned dataset manifest plus
a removal list.
"""

__version__ = "0.1.0"

from .dataset_io import (
    DatasetManifest,
    EmbeddingMatrix,
    SampleRecord,
    ValidationReport,
    build_manifest,
    load_embeddings,
    load_manifest,
    save_embeddings,
    save_manifest,
    validate,
)
from .scoring import (
    IdentityScore,
    PairScore,
    l2_normalize,
    load_scores,
    pair_distance,
    score_all,
    score_identity,
    write_scores,
)
from .outliers import (
    FlaggedIdentity,
    OutlierReport,
    build_report,
    build_review_queue,
    compute_pair_threshold,
    flag_pairs,
    load_report,
    threshold_identities,
    write_report,
)
from .cleaning import (
    CleaningPlan,
    MislabelType,
    RemovalRecord,
    Verdict,
    VerdictLog,
    apply_plan,
    compile_plan,
    load_removal_list,
    record_verdict,
    write_removal_list,
)
from .reporting import (
    Histogram,
    RocCurve,
    id_score_histogram,
    summary,
    verification_roc,
)
from .synth import SynthSpec, SynthTruth, generate

__all__ = [
    "__version__",
    "DatasetManifest",
    "EmbeddingMatrix",
    "SampleRecord",
    "ValidationReport",
    "build_manifest",
    "load_embeddings",
    "load_manifest",
    "save_embeddings",
    "save_manifest",
    "validate",
    "IdentityScore",
    "PairScore",
    "l2_normalize",
    "load_scores",
    "pair_distance",
    "score_all",
    "score_identity",
    "write_scores",
    "FlaggedIdentity",
    "OutlierReport",
    "build_report",
    "build_review_queue",
    "compute_pair_threshold",
    "flag_pairs",
    "load_report",
    "threshold_identities",
    "write_report",
    "CleaningPlan",
    "MislabelType",
    "RemovalRecord",
    "Verdict",
    "VerdictLog",
    "apply_plan",
    "compile_plan",
    "load_removal_list",
    "record_verdict",
    "write_removal_list",
    "Histogram",
    "RocCurve",
    "id_score_histogram",
    "summary",
    "verification_roc",
    "SynthSpec",
    "SynthTruth",
    "generate",
]
