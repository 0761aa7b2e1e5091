"""Command-line front end.

Every command prints one JSON summary line whose last key is ``status``.
Exit codes: 0 ok, 1 usage, 2 data, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .config import load_config, serialize_config
from .dataset import featurize_manifest, load_clipset, read_manifest
from .errors import DataError, EscError, MissingFeatures, UsageError
from .features import BandType, FeatureConfig, Standardizer
from .model import load_model, save_model
from .synth import make_dataset

log = logging.getLogger("escnet")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _summary(status="ok", **fields):
    fields["status"] = status
    print(json.dumps(fields, default=str))


def _config(args):
    cfg = load_config(args.config, args.set or [])
    return cfg.resolve(Path(args.config).resolve().parent)


def _clips_for(features: str):
    if not features:
        raise UsageError("no feature manifest given (set 'features' in the config)")
    path = Path(features)
    if path.is_dir():
        path = path / "features.csv"
    if not path.exists():
        raise MissingFeatures(f"feature manifest not found: {path}")
    return load_clipset(read_manifest(path))


def _artifact_paths(out: Path, fold: int):
    stem = out / f"fold{fold}"
    return {k: stem.with_suffix(s) for k, s in
            (("ckpt", ".escw"), ("norm", ".norm.json"), ("log", ".log.csv"), ("report", ".report.csv"))}


def _write_fold(out: Path, res: harness.FoldResult, cfg, class_names) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    paths = _artifact_paths(out, res.fold)
    save_model(paths["ckpt"], res.net)
    sidecar = {"standardizer": res.standardizer.to_dict(), "class_names": list(class_names),
               "feature": cfg.feature.value, "fold": res.fold, "config": serialize_config(cfg)}
    paths["norm"].write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")
    harness.write_log_csv(paths["log"], res.log)
    harness.write_report_csv(paths["report"], res.report)
    return paths


def _load_trained(ckpt):
    ckpt = Path(ckpt)
    if not ckpt.exists():
        raise MissingFeatures(f"checkpoint not found: {ckpt}")
    norm = ckpt.with_suffix(".norm.json")
    if not norm.exists():
        raise MissingFeatures(f"standardization sidecar not found: {norm}")
    side = json.loads(norm.read_text())
    return load_model(ckpt), Standardizer.from_dict(side["standardizer"]), side


def _select(clips, fold, class_names):
    """Original (non-augmented) clips of ``fold`` (all folds when None), relabelled to the model's classes."""
    mask = ~clips.augmented
    if fold is not None:
        mask &= clips.folds == fold
    sub = clips.subset(np.flatnonzero(mask))
    if class_names is not None and list(sub.class_names) != list(class_names):
        index = {c: i for i, c in enumerate(class_names)}
        try:
            sub.labels = np.array([index[sub.class_names[k]] for k in sub.labels], dtype=int)
        except KeyError as exc:
            raise DataError(f"label {exc} unknown to the checkpoint") from None
        sub.class_names = list(class_names)
    return sub


# --------------------------------------------------------------------------
# Commands

def cmd_synth(args):
    manifest = make_dataset(args.out, args.per_class, args.folds, args.seed, args.duration)
    _summary(manifest=str(manifest))
    return 0


def cmd_featurize(args):
    kind, silence = BandType.MEL, 60.0
    if args.config:
        cfg = _config(args)
        kind, silence = cfg.feature, cfg.silence_db
    if args.kind is not None:
        kind = BandType(args.kind)
    manifest = read_manifest(args.manifest)
    fm, failures = featurize_manifest(manifest, args.out, kind, args.augment, FeatureConfig(silence_db=silence))
    n_files = sum(1 for _ in Path(args.out).glob("*.escf"))
    status = "ok" if not failures else "failed"
    _summary(status, features=str(fm), files=n_files, failures=len(failures))
    return 0 if not failures else 2


def cmd_train(args):
    cfg = _config(args)
    clips = _clips_for(cfg.features)
    res = harness.train_fold(clips, args.fold, cfg.train_config())
    paths = _write_fold(Path(cfg.out), res, cfg, clips.class_names)
    _summary(fold=args.fold, epochs=len(res.log), val_acc=round(res.report.accuracy, 6),
             train_acc=round(res.train_accuracy, 6), checkpoint=str(paths["ckpt"]))
    return 0


def cmd_crossval(args):
    cfg = _config(args)
    if args.jobs is not None:
        cfg = replace(cfg, jobs=args.jobs)
    clips = _clips_for(cfg.features)
    res = harness.cross_validate(clips, cfg.train_config(), jobs=cfg.effective_jobs)
    out = Path(cfg.out)
    for f in res.folds:
        _write_fold(out, f, cfg, clips.class_names)
    harness.write_rows_csv(out / "crossval.csv", ("fold", "accuracy", "train_accuracy"),
                           [(f.fold, f.report.accuracy, f.train_accuracy) for f in res.folds])
    pooled = res.pooled_report()
    harness.write_report_csv(out / "crossval.report.csv", pooled)
    harness.write_matrix_csv(out / "confusion.csv", pooled.confusion, pooled.class_names)
    print(f"mean accuracy {res.mean_accuracy:.4f}")
    _summary(folds=len(res.folds), mean_accuracy=round(res.mean_accuracy, 4), out=str(out))
    return 0


def cmd_evaluate(args):
    net, std, side = _load_trained(args.checkpoint)
    clips = _select(_clips_for(args.features), args.fold, side["class_names"])
    report = harness.evaluate(net, clips, std)
    out = Path(args.out)
    harness.write_report_csv(out, report)
    harness.write_matrix_csv(out.with_suffix(".confusion.csv"), report.confusion, report.class_names)
    _summary(clips=len(report.clip_ids), accuracy=round(report.accuracy, 6), report=str(out))
    return 0


def cmd_predict(args):
    net, std, side = _load_trained(args.checkpoint)
    clips = _select(_clips_for(args.features), args.fold, side["class_names"])
    report = harness.evaluate(net, clips, std)
    n = report.n_classes
    print("clip_id,predicted_label," + ",".join(f"prob_{k}" for k in range(n)))
    for cid, p, pr in zip(report.clip_ids, report.pred, report.probs):
        print(",".join([cid, report.class_names[p]] + [repr(float(v)) for v in pr]))
    _summary(clips=len(report.clip_ids))
    return 0


def cmd_alpha_sweep(args):
    cfg = _config(args)
    clips = _clips_for(cfg.features)
    alphas = [float(a) for a in args.alphas.split(",")]
    rows = harness.alpha_sweep(clips, cfg.train_config(), alphas, jobs=cfg.effective_jobs)
    out = Path(args.out or Path(cfg.out) / "alpha_sweep.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    harness.write_rows_csv(out, ("alpha", "mean_accuracy"), rows)
    _summary(rows=len(rows), best_alpha=max(rows, key=lambda r: r[1])[0], out=str(out))
    return 0


def cmd_embed(args):
    net, std, side = _load_trained(args.checkpoint)
    clips = _select(_clips_for(args.features), args.fold, side["class_names"])
    _, proj, ratio = harness.embed_clips(net, clips, std)
    rows = [(cid, x, y, clips.class_names[t]) for cid, (x, y), t in zip(clips.clip_ids, proj, clips.labels)]
    harness.write_rows_csv(args.out, ("clip_id", "x", "y", "true_label"), rows)
    _summary(rows=len(rows), explained_variance=[round(float(r), 6) for r in ratio], out=str(args.out))
    return 0


def cmd_confusion(args):
    a = harness.read_report_csv(args.a)
    b = harness.read_report_csv(args.b, a.class_names)
    if a.clip_ids and sorted(a.clip_ids) != sorted(b.clip_ids):
        log.warning("reports cover different clips")
    diff = harness.confusion_diff(a, b)
    harness.write_matrix_csv(args.out, diff, a.class_names)
    _summary(classes=a.n_classes, max_abs=float(np.abs(diff).max()), out=str(args.out))
    return 0


def cmd_compare(args):
    cfg = _config(args)
    clips = _clips_for(cfg.features)
    results = harness.compare_architectures(clips, cfg.train_config(), jobs=cfg.effective_jobs)
    rows = [(arch.value, r.mean_accuracy, r.mean_train_accuracy) for arch, r in results.items()]
    out = Path(args.out or Path(cfg.out) / "compare.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    harness.write_rows_csv(out, ("arch", "mean_accuracy", "mean_train_accuracy"), rows)
    for arch, acc, _ in rows:
        print(f"{arch}: {acc:.4f}")
    digests = {arch.value: [f.data_digest for f in r.folds] for arch, r in results.items()}
    same = len({tuple(d) for d in digests.values()}) == 1
    _summary(accuracies={a: round(acc, 4) for a, acc, _ in rows}, identical_batches=same, out=str(out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="escnet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(sp):
        sp.add_argument("--config", required=True, help="key = value run config")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    s = sub.add_parser("synth", help="write the synthetic 4-class toy set")
    s.add_argument("--out", required=True)
    s.add_argument("--per-class", type=int, default=10)
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--duration", type=float, default=1.5)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("featurize", help="extract ESCF spectrograms for a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--kind", choices=[k.value for k in BandType], default=None)
    s.add_argument("--augment", action="store_true")
    s.add_argument("--config")
    s.add_argument("--set", action="append")
    s.set_defaults(func=cmd_featurize)

    s = sub.add_parser("train", help="train one fold")
    with_config(s)
    s.add_argument("--fold", type=int, required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("crossval", help="train and evaluate every fold")
    with_config(s)
    s.add_argument("--jobs", type=int)
    s.set_defaults(func=cmd_crossval)

    for name, func, helptext in (("evaluate", cmd_evaluate, "clip-level evaluation report"),
                                 ("predict", cmd_predict, "print clip probabilities"),
                                 ("embed", cmd_embed, "PCA of FC1 features")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--checkpoint", required=True)
        s.add_argument("--features", required=True)
        s.add_argument("--fold", type=int)
        if name != "predict":
            s.add_argument("--out", required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("alpha-sweep", help="cross-validate over mixup alphas")
    with_config(s)
    s.add_argument("--alphas", default="0.1,0.2,0.3,0.4,0.5")
    s.add_argument("--out")
    s.set_defaults(func=cmd_alpha_sweep)

    s = sub.add_parser("confusion", help="row-normalized confusion difference of two reports")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_confusion)

    s = sub.add_parser("compare", help="proposed CNN vs VGG10 on one config")
    with_config(s)
    s.add_argument("--out")
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EscError as exc:
        print(f"error: {exc}", file=sys.stderr)
        _summary("error", error=type(exc).__name__, message=str(exc))
        return exc.exit_code
    except (FileNotFoundError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _summary("error", error=type(exc).__name__, message=str(exc))
        return 2
    except FloatingPointError as exc:
        _summary("error", error="NumericalError", message=str(exc))
        return 3


if __name__ == "__main__":
    sys.exit(main())
