"""Command-line entry point wiring the library into reproducible pipelines.

Every subcommand is a pure function of its input files, flags, and seed,
and records a ``run.json`` capturing the full configuration so a run can
be replayed byte for byte. Report commands write delimited curve data
plus JSON summaries, and render matching figures next to them unless
``--no-figures`` is given.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
from dataclasses import asdict, replace

import numpy as np

from . import __version__
from .clustering import (
    agglomerate,
    default_cutoff_grid,
    kmeans,
    learn_cutoff,
    pairwise_metrics,
    pr_curve,
    prune,
)
from .data import (
    Dataset,
    SynthConfig,
    generate_synthetic,
    load_manifest,
    save_binary,
    save_csv,
    split_half,
)
from .embedding import (
    TRAIN_LOG_COLUMNS,
    EmbeddingMatrix,
    TrainConfig,
    pca_init,
    project,
    train,
)
from .errors import DataError, DivergenceError, ManifestError, ProtocolError
from .experiments import (
    CLUSTER_CELLS,
    ClusteringSpec,
    VerificationSpec,
    run_clustering,
    run_verification,
)
from .metrics import (
    IdentProtocol,
    accuracy,
    auc,
    cmc,
    eer,
    fnmr_at_fmr,
    learn_accuracy_threshold,
    roc,
    score_pairs,
    tpir_at_fpir,
)
from .pooling import pool_templates, templates_from_dataset

_PAIR_HEADER = ["id_a", "id_b", "label"]
_GENUINE_LABELS = {"genuine", "1", "true"}
_IMPOSTOR_LABELS = {"impostor", "0", "false"}


# ---------------------------------------------------------------- helpers

def _floats(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated float list: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _ints(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated int list: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _grid_spec(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"grid must be start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be numeric, got {text!r}")
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError("grid needs step > 0 and stop >= start")
    count = int(round((stop - start) / step)) + 1
    values = start + step * np.arange(count)
    return values[values <= stop + 1e-12]


def _fmt(x) -> str:
    return repr(float(x))


def _jsonable(x: float):
    # json.dumps would emit bare Infinity otherwise
    x = float(x)
    return x if np.isfinite(x) else repr(x)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _dump_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _with_suffix(path: str, suffix: str) -> str:
    path = str(path)
    stem = path[: path.rfind(".")] if "." in path.split("/")[-1] else path
    return stem + suffix


def _write_run(path, command: str, args, outputs) -> None:
    payload = {
        "command": command,
        "params": {k: _to_plain(v) for k, v in vars(args).items() if k != "func"},
        "outputs": sorted(str(o) for o in outputs),
        "tool": {"name": "tpembed", "version": __version__},
        "runtime": {"python": platform.python_version(), "numpy": np.__version__},
    }
    _dump_json(path, payload)


def _to_plain(value):
    if isinstance(value, np.ndarray):
        return [float(x) for x in value]
    if isinstance(value, (np.integer, np.floating)):
        return value.item()
    return value


def _load_features(path, matrix, normalize_on_load: bool):
    """Load a manifest and optionally push it through a saved projection."""
    ds = load_manifest(path, normalize_on_load=normalize_on_load)
    feats = ds.features
    if matrix is not None:
        feats = project(EmbeddingMatrix.load(matrix), feats)
    return ds, feats


def _read_pairs(path) -> list[tuple[str, str, bool]]:
    pairs = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError("empty pair file", line=1) from None
        if header != _PAIR_HEADER:
            raise ManifestError(f"pair header must be {','.join(_PAIR_HEADER)}", line=1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ManifestError(f"expected 3 fields, got {len(row)}", line=line_no)
            id_a, id_b, label = row
            label = label.strip().lower()
            if label in _GENUINE_LABELS:
                genuine = True
            elif label in _IMPOSTOR_LABELS:
                genuine = False
            else:
                raise ManifestError(f"unknown pair label {label!r}", line=line_no)
            pairs.append((id_a, id_b, genuine))
    if not pairs:
        raise ManifestError("pair file has no data rows")
    return pairs


def _figure_paths(args, out_dir: str, stem: str) -> list[str]:
    if args.no_figures:
        return []
    paths = [os.path.join(out_dir, f"{stem}.png")]
    if args.emit_svg:
        paths.append(os.path.join(out_dir, f"{stem}.svg"))
    return paths


def _save_dataset(ds: Dataset, out: str, binary: bool) -> list[str]:
    if binary:
        save_binary(ds, out)
        return [out, _with_suffix(out, ".csv")]
    save_csv(ds, out)
    return [out]


# ---------------------------------------------------------------- commands

def cmd_gen(args) -> int:
    cfg = SynthConfig(
        num_subjects=args.subjects,
        records_per_subject=args.per,
        dim=args.dim,
        within_class_sigma=args.sigma,
        media_per_subject=args.media,
        media_offset_sigma=args.media_sigma,
        templates_per_subject=args.templates,
        signal_dim=args.signal_dim,
        seed=args.seed,
    )
    data = generate_synthetic(cfg)
    if args.split == "half":
        train_half, _ = split_half(data)
        train_ids = {rec.record_id for rec in train_half.records}
        data = Dataset(
            [
                replace(rec, split="train" if rec.record_id in train_ids else "test")
                for rec in data.records
            ]
        )
    outputs = _save_dataset(data, args.out, args.binary)
    _write_run(_with_suffix(args.out, ".run.json"), "gen", args, outputs)
    print(f"wrote {len(data)} records (dim {data.dim}) to {args.out}")
    return 0


def cmd_pca_init(args) -> int:
    ds = load_manifest(args.data, normalize_on_load=not args.raw)
    pca_init(ds, args.dim).save(args.out)
    _write_run(_with_suffix(args.out, ".run.json"), "pca-init", args, [args.out])
    print(f"wrote {args.dim}x{ds.dim} principal basis to {args.out}")
    return 0


def cmd_train(args) -> int:
    ds = load_manifest(args.data, normalize_on_load=not args.raw)
    if args.split:
        ds = ds.filter_split(args.split)
    cfg = TrainConfig(
        dim=args.dim,
        learning_rate=args.lr,
        iterations=args.iters,
        pool_size=args.pool_size,
        seed=args.seed,
        method=args.method,
        margin=args.margin,
        decay_factor=args.decay_factor,
        decay_every=args.decay_every,
    )
    result = train(ds, cfg)
    result.matrix.save(args.out)
    outputs = [args.out]
    if args.log:
        rows = [
            [str(int(it)), _fmt(p), _fmt(loss)] for it, p, loss in result.log
        ]
        _write_csv(args.log, list(TRAIN_LOG_COLUMNS), rows)
        outputs.append(args.log)
    _write_run(_with_suffix(args.out, ".run.json"), "train", args, outputs)
    if len(result.log):
        tail = result.log[-min(100, len(result.log)):, 1]
        print(
            f"{args.method} trained {args.iters} steps on {len(ds)} records; "
            f"mean p over last {len(tail)} steps {tail.mean():.4f}"
        )
    else:
        print(f"0 iterations requested; wrote the initialization to {args.out}")
    return 0


def cmd_project(args) -> int:
    ds = load_manifest(args.data, normalize_on_load=not args.raw)
    w = EmbeddingMatrix.load(args.matrix)
    projected = project(w, ds.features)
    out_ds = Dataset(
        [replace(rec, values=projected[i]) for i, rec in enumerate(ds.records)]
    )
    outputs = _save_dataset(out_ds, args.out, args.binary)
    _write_run(_with_suffix(args.out, ".run.json"), "project", args, outputs)
    print(f"projected {len(ds)} records to dim {w.out_dim} -> {args.out}")
    return 0


def cmd_pool(args) -> int:
    ds = load_manifest(args.data, normalize_on_load=not args.raw)
    if args.split:
        ds = ds.filter_split(args.split)
    pooled = pool_templates(templates_from_dataset(ds), args.mode)
    outputs = _save_dataset(pooled, args.out, args.binary)
    _write_run(_with_suffix(args.out, ".run.json"), "pool", args, outputs)
    print(f"pooled {len(ds)} records into {len(pooled)} templates ({args.mode})")
    return 0


def cmd_verify_eval(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    ds, feats = _load_features(args.data, args.matrix, not args.raw)
    reps = {rec.record_id: feats[i] for i, rec in enumerate(ds.records)}
    scores = score_pairs(reps, _read_pairs(args.pairs))
    curve = roc(scores)

    summary = {
        "eer": eer(curve),
        "auc": auc(curve),
        "n_genuine": int(np.sum(scores.genuine)),
        "n_impostor": int(np.sum(~scores.genuine)),
        "fnmr_at_fmr": {
            _fmt(t): {"fnmr": r.fnmr, "achieved_fmr": r.achieved_fmr}
            for t in args.fmr
            for r in [fnmr_at_fmr(curve, t)]
        },
    }
    if args.train_pairs:
        train_scores = score_pairs(reps, _read_pairs(args.train_pairs))
        threshold = learn_accuracy_threshold(train_scores)
        summary["threshold"] = _jsonable(threshold)
        summary["accuracy"] = accuracy(scores, threshold)

    roc_path = os.path.join(args.out_dir, "roc.csv")
    _write_csv(
        roc_path,
        ["threshold", "fmr", "fnmr"],
        ([_fmt(t), _fmt(f), _fmt(n)]
         for t, f, n in zip(curve.thresholds, curve.fmr, curve.fnmr)),
    )
    summary_path = os.path.join(args.out_dir, "summary.json")
    _dump_json(summary_path, summary)
    outputs = [roc_path, summary_path]

    figure_paths = _figure_paths(args, args.out_dir, "roc")
    if figure_paths:
        from . import plotting

        for path in figure_paths:
            plotting.roc_figure([("cosine", curve)], path)
        outputs.extend(figure_paths)

    _write_run(os.path.join(args.out_dir, "run.json"), "verify-eval", args, outputs)
    print(f"eer {summary['eer']:.4f}, auc {summary['auc']:.4f} -> {args.out_dir}")
    return 0


def cmd_ident_eval(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    gal_ds, gal_feats = _load_features(args.gallery, args.matrix, not args.raw)
    probe_ds, probe_feats = _load_features(args.probes, args.matrix, not args.raw)

    gallery: dict[str, np.ndarray] = {}
    for i, rec in enumerate(gal_ds.records):
        if rec.subject in gallery:
            raise ProtocolError(f"duplicate gallery subject {rec.subject!r}")
        gallery[rec.subject] = gal_feats[i]
    probes = [
        (probe_feats[i], rec.subject if rec.subject in gallery else None)
        for i, rec in enumerate(probe_ds.records)
    ]
    mated = [p for p in probes if p[1] is not None]
    n_unmated = len(probes) - len(mated)
    if not mated:
        raise ProtocolError("no probe subject appears in the gallery")

    closed = IdentProtocol(gallery, mated)
    all_ranks = list(range(1, len(gallery) + 1))
    curve_values = cmc(closed, all_ranks)
    requested = cmc(closed, args.ranks)

    summary = {
        "n_gallery": len(gallery),
        "n_probes": len(probes),
        "n_unmated": n_unmated,
        "cmc": {str(r): v for r, v in zip(args.ranks, requested)},
    }
    if n_unmated:
        rates = tpir_at_fpir(IdentProtocol(gallery, probes), args.fpir)
        summary["tpir_at_fpir"] = {_fmt(t): v for t, v in zip(args.fpir, rates)}

    cmc_path = os.path.join(args.out_dir, "cmc.csv")
    _write_csv(
        cmc_path,
        ["rank", "value"],
        ([str(r), _fmt(v)] for r, v in zip(all_ranks, curve_values)),
    )
    summary_path = os.path.join(args.out_dir, "summary.json")
    _dump_json(summary_path, summary)
    outputs = [cmc_path, summary_path]

    figure_paths = _figure_paths(args, args.out_dir, "cmc")
    if figure_paths:
        from . import plotting

        for path in figure_paths:
            plotting.cmc_figure([("closed set", all_ranks, curve_values)], path)
        outputs.extend(figure_paths)

    _write_run(os.path.join(args.out_dir, "run.json"), "ident-eval", args, outputs)
    print(f"rank-1 {curve_values[0]:.4f} over {len(mated)} mated probes -> {args.out_dir}")
    return 0


def cmd_cluster(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    ds, feats = _load_features(args.data, args.matrix, not args.raw)
    grid = args.grid if args.grid is not None else default_cutoff_grid()
    labels_known = all(rec.subject for rec in ds.records)

    cutoff = None
    if args.algo == "kmeans":
        if args.k is None:
            raise ValueError("--k is required with --algo kmeans")
        assignment = kmeans(feats, args.k, restarts=args.restarts, seed=args.seed)
    else:
        if (args.cutoff is None) == (args.learn_cutoff is None):
            raise ValueError("exactly one of --cutoff or --learn-cutoff is required")
        if args.learn_cutoff is not None:
            train_ds, train_feats = _load_features(
                args.learn_cutoff, args.matrix, not args.raw
            )
            if not all(rec.subject for rec in train_ds.records):
                raise DataError("cutoff-training manifest needs subject labels")
            cutoff = learn_cutoff(train_feats, train_ds.subjects, grid)
        else:
            cutoff = args.cutoff
        assignment = agglomerate(feats, cutoff, threads=args.threads)

    pruned_count, flagged = prune(assignment, args.min_size)

    assignment_path = os.path.join(args.out_dir, "assignment.csv")
    _write_csv(
        assignment_path,
        ["record_id", "cluster"],
        (
            [rec.record_id, str(int(flagged.labels[i]))]
            for i, rec in enumerate(ds.records)
        ),
    )
    payload = {
        "algo": args.algo,
        "n_records": len(ds),
        "cutoff": None if cutoff is None else float(cutoff),
        "k": args.k,
        "restarts": args.restarts,
        "seed": args.seed,
        "min_size": args.min_size,
        "clusters": flagged.n_clusters,
        "clusters_min_size": pruned_count,
    }
    if labels_known:
        scores = pairwise_metrics(assignment, ds.subjects)
        payload["pairwise"] = {
            "precision": scores.precision,
            "recall": scores.recall,
            "f1": scores.f1,
            "precision_defined": scores.precision_defined,
            "recall_defined": scores.recall_defined,
        }
    clusters_path = os.path.join(args.out_dir, "clusters.json")
    _dump_json(clusters_path, payload)
    outputs = [assignment_path, clusters_path]

    if assignment.history is not None:
        merges_path = os.path.join(args.out_dir, "merges.csv")
        history = assignment.history
        _write_csv(
            merges_path,
            ["step", "id_a", "id_b", "distance", "size"],
            (
                [str(m), str(int(history.merges[m, 0])), str(int(history.merges[m, 1])),
                 _fmt(history.dists[m]), str(int(history.sizes[m]))]
                for m in range(len(history))
            ),
        )
        outputs.append(merges_path)

    if assignment.history is not None and labels_known:
        rows = pr_curve(None, ds.subjects, grid, history=assignment.history)
        pr_path = os.path.join(args.out_dir, "pr.csv")
        _write_csv(
            pr_path,
            ["cutoff", "precision", "recall"],
            ([_fmt(c), _fmt(p), _fmt(r)] for c, p, r in rows),
        )
        outputs.append(pr_path)
        figure_paths = _figure_paths(args, args.out_dir, "pr")
        if figure_paths:
            from . import plotting

            for path in figure_paths:
                plotting.pr_figure([("agglomerative", rows)], path)
            outputs.extend(figure_paths)

    _write_run(os.path.join(args.out_dir, "run.json"), "cluster", args, outputs)
    detail = f"cutoff {cutoff:.4f}" if cutoff is not None else f"k {args.k}"
    print(
        f"{flagged.n_clusters} clusters ({pruned_count} of size >= {args.min_size}), "
        f"{detail} -> {args.out_dir}"
    )
    return 0


def cmd_repro_fig3(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    spec = VerificationSpec(
        subjects=args.subjects,
        per=args.per,
        dim=args.dim,
        embed_dim=args.embed_dim,
        iterations=args.iters,
        learning_rate=args.lr,
        pool_size=args.pool_size,
        sigma=args.sigma,
        signal_dim=args.signal_dim,
        margin=args.margin,
        seed=args.seed,
    )
    report = run_verification(spec)

    roc_path = os.path.join(args.out_dir, "roc.csv")
    rows = []
    for method in ("raw", "tde", "tpe"):
        curve = report.curves[method]
        rows.extend(
            [method, _fmt(t), _fmt(f), _fmt(n)]
            for t, f, n in zip(curve.thresholds, curve.fmr, curve.fnmr)
        )
    _write_csv(roc_path, ["method", "threshold", "fmr", "fnmr"], rows)

    summary = {"config": asdict(spec)}
    for method in ("raw", "tde", "tpe"):
        summary[f"eer_{method}"] = report.eer[method]
        summary[f"auc_{method}"] = report.auc[method]
    summary_path = os.path.join(args.out_dir, "summary.json")
    _dump_json(summary_path, summary)

    matrix_paths = []
    for method in ("tpe", "tde"):
        path = os.path.join(args.out_dir, f"w_{method}.bin")
        report.matrices[method].save(path)
        matrix_paths.append(path)
    outputs = [roc_path, summary_path, *matrix_paths]

    figure_paths = _figure_paths(args, args.out_dir, "roc")
    if figure_paths:
        from . import plotting

        for path in figure_paths:
            plotting.roc_figure(
                [(m, report.curves[m]) for m in ("raw", "tde", "tpe")], path
            )
        outputs.extend(figure_paths)

    _write_run(os.path.join(args.out_dir, "run.json"), "repro-fig3", args, outputs)
    print("method  eer     auc")
    for method in ("raw", "tde", "tpe"):
        print(f"{method:6s}  {report.eer[method]:.4f}  {report.auc[method]:.4f}")
    return 0


def cmd_repro_cluster(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    grid = args.grid if args.grid is not None else default_cutoff_grid()
    spec = ClusteringSpec(
        train_subjects=args.train_subjects,
        val_subjects=args.val_subjects,
        test_subjects=args.test_subjects,
        per=args.per,
        dim=args.dim,
        embed_dim=args.embed_dim,
        media=args.media,
        sigma=args.sigma,
        media_sigma=args.media_sigma,
        signal_dim=args.signal_dim,
        templates=args.templates,
        iterations=args.iters,
        learning_rate=args.lr,
        decay_factor=args.decay_factor,
        decay_every=args.decay_every,
        pool_size=args.pool_size,
        margin=args.margin,
        seed=args.seed,
        grid=tuple(float(x) for x in grid),
    )
    report = run_clustering(spec)

    summary = {"config": asdict(spec), "n_templates": report.n_templates}
    for cell in CLUSTER_CELLS:
        summary[f"f1_{cell}"] = report.f1[cell]
        summary[f"precision_{cell}"] = report.precision[cell]
        summary[f"recall_{cell}"] = report.recall[cell]
        summary[f"cutoff_{cell}"] = report.cutoffs[cell]
    summary_path = os.path.join(args.out_dir, "summary.json")
    _dump_json(summary_path, summary)
    outputs = [summary_path]

    for cell in CLUSTER_CELLS:
        pr_path = os.path.join(args.out_dir, f"pr_{cell}.csv")
        _write_csv(
            pr_path,
            ["cutoff", "precision", "recall"],
            ([_fmt(c), _fmt(p), _fmt(r)] for c, p, r in report.pr[cell]),
        )
        outputs.append(pr_path)

    figure_paths = _figure_paths(args, args.out_dir, "pr")
    if figure_paths:
        from . import plotting

        for path in figure_paths:
            plotting.pr_figure([(c, report.pr[c]) for c in CLUSTER_CELLS], path)
        outputs.extend(figure_paths)

    _write_run(os.path.join(args.out_dir, "run.json"), "repro-cluster", args, outputs)
    print("cell         cutoff  f1")
    for cell in CLUSTER_CELLS:
        print(f"{cell:12s} {report.cutoffs[cell]:.2f}    {report.f1[cell]:.4f}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tpembed",
        description="Learn, evaluate, and cluster discriminative feature embeddings.",
    )
    parser.add_argument(
        "--version", action="version", version=f"tpembed {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    raw_opt = argparse.ArgumentParser(add_help=False)
    raw_opt.add_argument(
        "--raw", action="store_true",
        help="do not L2-normalize feature vectors on load",
    )
    fig_opt = argparse.ArgumentParser(add_help=False)
    fig_opt.add_argument(
        "--no-figures", action="store_true", help="skip figure rendering"
    )
    fig_opt.add_argument(
        "--emit-svg", action="store_true", help="also render figures as SVG"
    )

    p = sub.add_parser("gen", help="generate a synthetic labeled feature set")
    p.add_argument("--out", required=True, help="output CSV (or binary) path")
    p.add_argument("--subjects", type=int, default=50)
    p.add_argument("--per", type=int, default=20, help="records per subject")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--sigma", type=float, default=0.3, help="within-class noise sigma")
    p.add_argument("--signal-dim", type=int, default=None,
                   help="confine subject means to the first K coordinates")
    p.add_argument("--media", type=int, default=1, help="media sources per subject")
    p.add_argument("--media-sigma", type=float, default=0.0,
                   help="per-(subject, media) offset sigma")
    p.add_argument("--templates", type=int, default=0,
                   help="templates per subject (0 = no template ids)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", choices=("none", "half"), default="none",
                   help="half = tag each subject's first half as train, rest test")
    p.add_argument("--binary", action="store_true",
                   help="write the binary sidecar format instead of inline CSV")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("pca-init", parents=[raw_opt],
                       help="write the PCA initialization matrix")
    p.add_argument("--data", required=True, help="feature manifest")
    p.add_argument("--dim", type=int, required=True, help="output dimension n")
    p.add_argument("--out", required=True, help="output matrix path")
    p.set_defaults(func=cmd_pca_init)

    p = sub.add_parser("train", parents=[raw_opt], help="train a projection matrix")
    p.add_argument("--data", required=True, help="feature manifest")
    p.add_argument("--method", choices=("tpe", "tde"), default="tpe")
    p.add_argument("--dim", type=int, default=128, help="output dimension n")
    p.add_argument("--iters", type=int, default=10000)
    p.add_argument("--lr", type=float, default=0.01, help="learning rate")
    p.add_argument("--pool-size", type=int, default=2000,
                   help="negative candidates sampled per step")
    p.add_argument("--margin", type=float, default=0.2, help="hinge margin (tde)")
    p.add_argument("--decay-factor", type=float, default=None)
    p.add_argument("--decay-every", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", choices=("train", "test"), default=None,
                   help="restrict to one split tag before training")
    p.add_argument("--out", required=True, help="output matrix path")
    p.add_argument("--log", default=None, help="optional training-log CSV path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("project", parents=[raw_opt],
                       help="apply a saved projection to a feature file")
    p.add_argument("--data", required=True)
    p.add_argument("--matrix", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--binary", action="store_true")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("pool", parents=[raw_opt],
                       help="pool multi-record templates into single vectors")
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("average", "media"), default="average")
    p.add_argument("--split", choices=("train", "test"), default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--binary", action="store_true")
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("verify-eval", parents=[raw_opt, fig_opt],
                       help="verification metrics over a pair protocol")
    p.add_argument("--data", required=True, help="representation manifest")
    p.add_argument("--pairs", required=True, help="CSV protocol: id_a,id_b,label")
    p.add_argument("--train-pairs", default=None,
                   help="optional protocol for accuracy-threshold learning")
    p.add_argument("--matrix", default=None, help="project features first")
    p.add_argument("--fmr", type=_floats, default=[0.001, 0.01],
                   help="comma-separated FMR targets")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_verify_eval)

    p = sub.add_parser("ident-eval", parents=[raw_opt, fig_opt],
                       help="identification metrics from gallery/probe manifests")
    p.add_argument("--gallery", required=True, help="one record per gallery subject")
    p.add_argument("--probes", required=True)
    p.add_argument("--matrix", default=None, help="project features first")
    p.add_argument("--ranks", type=_ints, default=[1, 5, 10])
    p.add_argument("--fpir", type=_floats, default=[0.01, 0.1])
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_ident_eval)

    p = sub.add_parser("cluster", parents=[raw_opt, fig_opt],
                       help="cluster a feature collection")
    p.add_argument("--data", required=True)
    p.add_argument("--matrix", default=None, help="project features first")
    p.add_argument("--algo", choices=("agglo", "kmeans"), default="agglo")
    p.add_argument("--cutoff", type=float, default=None,
                   help="cosine-distance merge cutoff in [0, 2]")
    p.add_argument("--learn-cutoff", default=None, metavar="TRAIN_MANIFEST",
                   help="learn the cutoff on a labeled training manifest")
    p.add_argument("--grid", type=_grid_spec, default=None, metavar="START:STOP:STEP",
                   help="cutoff grid (default 0:1:0.01)")
    p.add_argument("--min-size", type=int, default=3,
                   help="clusters below this size are flagged, not counted")
    p.add_argument("--k", type=int, default=None, help="cluster count (kmeans)")
    p.add_argument("--restarts", type=int, default=1, help="kmeans restarts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="distance-matrix worker threads (default: TPE_THREADS or all)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("repro-fig3", parents=[fig_opt],
                       help="synthetic raw-vs-TDE-vs-TPE verification benchmark")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--subjects", type=int, default=50)
    p.add_argument("--per", type=int, default=20)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--embed-dim", type=int, default=16)
    p.add_argument("--iters", type=int, default=20000)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--pool-size", type=int, default=2000)
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--signal-dim", type=int, default=16)
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_repro_fig3)

    p = sub.add_parser("repro-cluster", parents=[fig_opt],
                       help="synthetic pooled-template clustering benchmark")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--train-subjects", type=int, default=50)
    p.add_argument("--val-subjects", type=int, default=10)
    p.add_argument("--test-subjects", type=int, default=30)
    p.add_argument("--per", type=int, default=30)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--embed-dim", type=int, default=24)
    p.add_argument("--media", type=int, default=2)
    p.add_argument("--sigma", type=float, default=0.25)
    p.add_argument("--media-sigma", type=float, default=1.5)
    p.add_argument("--signal-dim", type=int, default=8)
    p.add_argument("--templates", type=int, default=10)
    p.add_argument("--iters", type=int, default=12000)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--decay-factor", type=float, default=0.5)
    p.add_argument("--decay-every", type=int, default=3000)
    p.add_argument("--pool-size", type=int, default=2000)
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--grid", type=_grid_spec, default=None, metavar="START:STOP:STEP")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_repro_cluster)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, int):
            return exc.code
        return 0 if exc.code is None else 2
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
