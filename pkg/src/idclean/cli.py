"""idclean command line: staged pipeline over documented file formats.

Stages communicate only through files, so each is independently runnable
and resumable: synth/validate -> score -> flag -> queue -> serve -> apply
-> report. Every text output starts with '#' provenance comments (input
digests, parameters, tool version); the binary embedding container gets a
sidecar .meta.json instead. Outputs are written atomically. Exit codes:
0 success, 1 user error, 2 data/format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from ._util import atomic_write_text, sha256_file
from . import cleaning, dataset_io, outliers, reporting, scoring, synth


class CliUserError(Exception):
    pass


_DATA_ERRORS = (
    dataset_io.ManifestError,
    dataset_io.EmbeddingFormatError,
    scoring.ScoresFormatError,
    outliers.OutlierError,
    outliers.ReportFormatError,
    cleaning.VerdictError,
    reporting.ReportingError,
    synth.SynthError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        raise CliUserError(message)


def _provenance(stage: str, inputs: dict[str, Path], params: dict) -> list[str]:
    lines = [f"idclean {__version__} {stage}"]
    for name in sorted(inputs):
        lines.append(f"input {name} sha256={sha256_file(inputs[name])}")
    for key in sorted(params):
        lines.append(f"param {key}={params[key]}")
    return lines


def _provenance_obj(stage: str, inputs: dict[str, Path], params: dict) -> dict:
    return {
        "tool": f"idclean {__version__}",
        "stage": stage,
        "inputs": {name: sha256_file(p) for name, p in sorted(inputs.items())},
        "params": {k: params[k] for k in sorted(params)},
    }


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise CliUserError(f"{what} not found: {path}")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    spec = synth.SynthSpec(seed=args.seed)
    if args.preset == "planted":
        pass  # SynthSpec defaults are the planted-noise fixture
    elif args.preset == "celeba-shape":
        spec.identities = 10_177
        spec.dim = 512
        spec.total_samples = 202_599
        spec.centroid_scale = 4.0
        spec.min_separation = 0.0
        spec.contaminated = 0
        spec.imports_per_identity = 0
    for name in ("identities", "dim", "size_min", "size_max", "contaminated", "imports"):
        value = getattr(args, name)
        if value is not None:
            setattr(spec, "imports_per_identity" if name == "imports" else name, value)
    if args.separation is not None:
        spec.min_separation = args.separation
    if args.centroid_scale is not None:
        spec.centroid_scale = args.centroid_scale

    manifest, embeddings, truth = synth.generate(spec)
    out = _out_dir(args)
    params = {k: v for k, v in vars(spec).items()}
    dataset_io.save_manifest(manifest, out / "manifest.csv", _provenance("synth", {}, params))
    dataset_io.save_embeddings(embeddings, out / "embeddings.emb")
    atomic_write_text(
        out / "embeddings.emb.meta.json",
        json.dumps(_provenance_obj("synth", {}, params), indent=2) + "\n",
    )
    atomic_write_text(out / "truth.json", json.dumps(truth.to_dict(), indent=2) + "\n")
    print(
        f"synth: {manifest.sample_count} samples, {manifest.identity_count} identities, "
        f"dim {embeddings.dim}, {len(truth.contaminated)} contaminated -> {out}"
    )
    return 0


def cmd_validate(args) -> int:
    manifest = dataset_io.load_manifest(_require(Path(args.manifest), "manifest"))
    embeddings = dataset_io.load_embeddings(_require(Path(args.embeddings), "embeddings"))
    report = dataset_io.validate(manifest, embeddings)
    if report.ok:
        print(
            f"valid: {manifest.sample_count} samples, {manifest.identity_count} identities, "
            f"{embeddings.count}x{embeddings.dim} embeddings"
        )
        return 0
    for violation in report.violations:
        print(violation, file=sys.stderr)
    print(f"{len(report.violations)} violation(s) found", file=sys.stderr)
    return 2


def cmd_score(args) -> int:
    manifest_path = _require(Path(args.manifest), "manifest")
    embeddings_path = _require(Path(args.embeddings), "embeddings")
    manifest = dataset_io.load_manifest(manifest_path)
    embeddings = dataset_io.load_embeddings(embeddings_path)
    check = dataset_io.validate(manifest, embeddings)
    if not check.ok:
        for violation in check.violations:
            print(violation, file=sys.stderr)
        return 2
    if args.normalize:
        embeddings = scoring.l2_normalize(embeddings)
    scores = scoring.score_all(manifest, embeddings, threads=args.threads)
    out = _out_dir(args)
    inputs = {"manifest": manifest_path, "embeddings": embeddings_path}
    params = {"normalize": args.normalize}
    scoring.write_scores(scores, out / "scores.csv", _provenance("score", inputs, params))
    scorable = sum(1 for s in scores if s.scorable)
    print(f"score: {scorable} scorable / {len(scores)} identities -> {out / 'scores.csv'}")
    return 0


def cmd_flag(args) -> int:
    if args.fraction is not None and args.flag_count is not None:
        raise CliUserError("use either --fraction or --flag-count, not both")
    scores_path = _require(Path(args.scores), "scores")
    manifest_path = _require(Path(args.manifest), "manifest")
    embeddings_path = _require(Path(args.embeddings), "embeddings")
    scores = scoring.load_scores(scores_path)
    manifest = dataset_io.load_manifest(manifest_path)
    embeddings = dataset_io.load_embeddings(embeddings_path)
    if args.normalize:
        embeddings = scoring.l2_normalize(embeddings)
    fraction = args.fraction if args.fraction is not None else outliers.DEFAULT_IDENTITY_FRACTION
    inputs = {"scores": scores_path, "manifest": manifest_path, "embeddings": embeddings_path}
    params = {
        "fraction": fraction,
        "flag_count": args.flag_count,
        "pair_threshold": args.pair_threshold,
        "exclude_flagged": args.exclude_flagged,
        "normalize": args.normalize,
    }
    report = outliers.build_report(
        scores,
        manifest,
        embeddings,
        fraction=fraction,
        pair_threshold=args.pair_threshold,
        flag_count=args.flag_count,
        exclude_flagged_from_threshold=args.exclude_flagged,
        include_queues=False,
        provenance=_provenance_obj("flag", inputs, params),
    )
    out = _out_dir(args)
    outliers.write_report(report, out / "flags.jsonl")
    print(
        f"flag: {report.flag_count} identities over threshold {report.pair_threshold:.9g} "
        f"-> {out / 'flags.jsonl'}"
    )
    return 0


def cmd_queue(args) -> int:
    flags_path = _require(Path(args.flags), "flags file")
    report = outliers.load_report(flags_path)
    report = outliers.attach_queues(report)
    report.provenance = _provenance_obj("queue", {"flags": flags_path}, {})
    out = _out_dir(args)
    outliers.write_report(report, out / "report.jsonl")
    queued = sum(len(e.review_queue) for e in report.entries)
    print(f"queue: {queued} samples queued across {len(report.entries)} identities "
          f"-> {out / 'report.jsonl'}")
    return 0


def cmd_apply(args) -> int:
    manifest_path = _require(Path(args.manifest), "manifest")
    verdicts_path = _require(Path(args.verdicts), "verdict log")
    manifest = dataset_io.load_manifest(manifest_path)
    log = cleaning.VerdictLog.load(verdicts_path)
    if not log.entries:
        raise CliUserError(f"verdict log is empty: {verdicts_path}")
    plan = cleaning.compile_plan(log, manifest, min_remaining=args.min_remaining)
    cleaned, removals = cleaning.apply_plan(manifest, plan)
    flagged_count = None
    if args.report:
        flagged_count = len(outliers.load_report(_require(Path(args.report), "report")).entries)
    census = reporting.summary(
        manifest, cleaned, removals, verdict_log=log, flagged_count=flagged_count
    )
    out = _out_dir(args)
    inputs = {"manifest": manifest_path, "verdicts": verdicts_path}
    params = {"min_remaining": args.min_remaining}
    dataset_io.save_manifest(
        cleaned, out / "cleaned_manifest.csv", _provenance("apply", inputs, params)
    )
    cleaning.write_removal_list(
        removals, out / "removals.csv", _provenance("apply", inputs, params)
    )
    atomic_write_text(out / "summary.json", json.dumps(census, indent=2) + "\n")
    print(
        f"apply: {census['samples_before']} -> {census['samples_after']} samples, "
        f"{census['identities_before']} -> {census['identities_after']} identities -> {out}"
    )
    return 0


def cmd_report(args) -> int:
    scores_path = _require(Path(args.scores), "scores")
    scores = scoring.load_scores(scores_path)
    out = _out_dir(args)
    inputs: dict[str, Path] = {"scores": scores_path}
    params: dict = {"bins": args.bins}
    hist = reporting.id_score_histogram(scores, args.bins)
    reporting.write_histogram_csv(
        hist, out / "histogram.csv", _provenance("report", inputs, params)
    )
    written = ["histogram.csv"]
    if args.after_scores:
        after_path = _require(Path(args.after_scores), "after-scores")
        after = scoring.load_scores(after_path)
        # shared upper edge so the two distributions are comparable
        hist_after = reporting.id_score_histogram(after, args.bins, upper=hist.bin_edges[-1])
        reporting.write_histogram_csv(
            hist_after,
            out / "histogram_after.csv",
            _provenance("report", {**inputs, "after_scores": after_path}, params),
        )
        written.append("histogram_after.csv")
    if args.embeddings:
        manifest_path = _require(Path(args.manifest), "manifest") if args.manifest else None
        if manifest_path is None:
            raise CliUserError("--embeddings requires --manifest for the ROC")
        embeddings_path = _require(Path(args.embeddings), "embeddings")
        manifest = dataset_io.load_manifest(manifest_path)
        embeddings = dataset_io.load_embeddings(embeddings_path)
        roc = reporting.verification_roc(
            manifest, embeddings, negative_pair_count=args.negatives, seed=args.seed
        )
        roc_inputs = {**inputs, "manifest": manifest_path, "embeddings": embeddings_path}
        roc_params = {**params, "negatives": args.negatives, "seed": args.seed}
        reporting.write_roc_csv(roc, out / "roc.csv", _provenance("report", roc_inputs, roc_params))
        params = {**roc_params, "auc": roc.auc, "positives": roc.positives,
                  "negatives_used": roc.negatives}
        written.append("roc.csv")
    atomic_write_text(
        out / "report_params.json",
        json.dumps(_provenance_obj("report", inputs, params), indent=2) + "\n",
    )
    written.append("report_params.json")
    print(f"report: wrote {', '.join(written)} -> {out}")
    return 0


def cmd_serve(args) -> int:
    from . import service  # deferred: uvicorn/fastapi are not needed by other stages
    import uvicorn

    manifest = dataset_io.load_manifest(_require(Path(args.manifest), "manifest"))
    report = outliers.load_report(_require(Path(args.report), "report"))
    log = cleaning.VerdictLog.load(Path(args.verdicts))
    scores = scoring.load_scores(_require(Path(args.scores), "scores")) if args.scores else None
    embeddings = (
        dataset_io.load_embeddings(_require(Path(args.embeddings), "embeddings"))
        if args.embeddings
        else None
    )
    session = service.ReviewSession(
        report=report,
        manifest=manifest,
        verdicts=log,
        image_root=Path(args.images) if args.images else None,
        out_dir=_out_dir(args),
        scores=scores,
        embeddings=embeddings,
        token=args.token,
    )
    ui_dir = Path(args.ui_dir) if args.ui_dir else None
    app = service.create_app(session, ui_dir=ui_dir)
    try:
        host, port_text = args.bind.rsplit(":", 1)
        port = int(port_text)
    except ValueError:
        raise CliUserError(f"--bind must look like HOST:PORT, got {args.bind!r}") from None
    print(f"serving review session on http://{args.bind} ({len(report.entries)} flagged)")
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="idclean", description=__doc__)
    parser.add_argument("--version", action="version", version=f"idclean {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory (default: cwd)")
    common.add_argument("--seed", type=int, default=0, help="RNG seed for seeded stages")
    common.add_argument("--threads", type=int, default=None,
                        help="worker cap (default: machine parallelism)")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic fixture")
    p.add_argument("--preset", choices=["planted", "celeba-shape"], default="planted")
    p.add_argument("--identities", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--size-min", dest="size_min", type=int)
    p.add_argument("--size-max", dest="size_max", type=int)
    p.add_argument("--contaminate", dest="contaminated", type=int)
    p.add_argument("--imports", type=int, help="imported samples per contaminated identity")
    p.add_argument("--separation", type=float, help="minimum inter-centroid distance")
    p.add_argument("--centroid-scale", dest="centroid_scale", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", parents=[common], help="cross-check manifest and embeddings")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("score", parents=[common], help="score every identity")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--normalize", action="store_true",
                   help="L2-normalize embeddings before scoring (off by default)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("flag", parents=[common], help="threshold identities and pairs")
    p.add_argument("--scores", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--fraction", type=float, help="flagged identity fraction (default 0.03)")
    p.add_argument("--flag-count", dest="flag_count", type=int,
                   help="absolute number of identities to flag (overrides --fraction)")
    p.add_argument("--pair-threshold", dest="pair_threshold", type=float,
                   help="override the mean-of-id-scores pair threshold")
    p.add_argument("--exclude-flagged", dest="exclude_flagged", action="store_true",
                   help="leave flagged identities out of the threshold mean "
                        "(sensitivity studies)")
    p.add_argument("--normalize", action="store_true",
                   help="must match the flag used at score time")
    p.set_defaults(func=cmd_flag)

    p = sub.add_parser("queue", parents=[common], help="build per-identity review queues")
    p.add_argument("--flags", required=True)
    p.set_defaults(func=cmd_queue)

    p = sub.add_parser("serve", parents=[common], help="serve the human review session")
    p.add_argument("--report", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--images", help="image root directory (optional)")
    p.add_argument("--verdicts", required=True, help="verdict log path (created if missing)")
    p.add_argument("--bind", default="127.0.0.1:8400")
    p.add_argument("--scores", help="scores export, enables /api/report/histogram")
    p.add_argument("--embeddings", help="embedding file, enables /api/report/roc")
    p.add_argument("--token", help="shared token required in X-Review-Token header")
    p.add_argument("--ui-dir", dest="ui_dir", help="static directory with the review UI")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("apply", parents=[common], help="compile verdicts and clean the manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--verdicts", required=True)
    p.add_argument("--report", help="outlier report, for the flagged count in the census")
    p.add_argument("--min-remaining", dest="min_remaining", type=int,
                   default=cleaning.DEFAULT_MIN_REMAINING,
                   help="escalate TYPE_A to folder removal below this survivor count")
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("report", parents=[common], help="histograms and verification ROC")
    p.add_argument("--scores", required=True)
    p.add_argument("--after-scores", dest="after_scores",
                   help="scores of the cleaned dataset, binned on the same axis")
    p.add_argument("--bins", type=int, default=reporting.DEFAULT_BIN_COUNT)
    p.add_argument("--manifest", help="needed with --embeddings for the ROC")
    p.add_argument("--embeddings", help="compute the verification ROC")
    p.add_argument("--negatives", type=int, default=None,
                   help="negative pair count (default: as many as positives)")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliUserError as exc:
        print(f"idclean: error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"idclean: error: {exc}", file=sys.stderr)
        return 1
    except _DATA_ERRORS as exc:
        print(f"idclean: data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
