"""Training, k-fold evaluation and analysis helpers.

Training works on segments, evaluation on clips: a clip's probability
vector is the mean of its segments' softmax outputs.
"""
from __future__ import annotations

import csv
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import ClipSet
from .errors import DegenerateInput, FoldOutOfRange, NoSegments, NumericalError
from .features import Standardizer
from .mixup import MixupConfig, mix_batch
from .model import Arch, ModelConfig, build, extract_fc1
from .nn import SGDNesterov, lr_schedule, softmax, softmax_cross_entropy
from .nn.optim import BASE_LR, L2, TOTAL_EPOCHS, Profile

log = logging.getLogger(__name__)

LOG_HEADER = ("epoch", "lr", "train_loss", "train_acc", "val_acc")


@dataclass(frozen=True)
class TrainConfig:
    arch: Arch = Arch.PROPOSED
    mixup: MixupConfig = MixupConfig()
    profile: Profile = Profile.ESC
    epochs: int | None = None  # None: the profile's full schedule
    batch_size: int = 200
    base_lr: float = BASE_LR
    l2: float = L2
    init_std: float = 0.05
    dropout: float = 0.5
    seed: int = 0
    validate_every_epoch: bool = True
    # pool BN statistics over the training set once training ends
    recalibrate_bn: bool = True

    @property
    def n_epochs(self) -> int:
        return self.epochs if self.epochs is not None else TOTAL_EPOCHS[Profile(self.profile)]


def desk_config(**overrides) -> TrainConfig:
    """Settings that train stably on the 40-clip synthetic set on one CPU core.

    The full-scale lr 0.1 / batch 200 diverges at batch sizes this small,
    so the step size is scaled down and the epoch budget kept short.
    """
    base = dict(epochs=20, batch_size=8, base_lr=0.001, validate_every_epoch=False)
    base.update(overrides)
    return TrainConfig(**base)


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    val_acc: float


@dataclass
class EvalReport:
    clip_ids: list[str]
    true: np.ndarray
    pred: np.ndarray
    probs: np.ndarray
    class_names: list[str]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def confusion(self) -> np.ndarray:
        return confusion_matrix(self.true, self.pred, self.n_classes)

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.true == self.pred)) if len(self.true) else float("nan")


@dataclass
class FoldResult:
    fold: int
    net: object
    standardizer: Standardizer
    log: list[EpochLog]
    report: EvalReport
    train_accuracy: float
    train_clip_ids: list[str]
    data_digest: str


@dataclass
class CrossValResult:
    folds: list[FoldResult] = field(default_factory=list)

    @property
    def accuracies(self) -> list[float]:
        return [f.report.accuracy for f in self.folds]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def mean_train_accuracy(self) -> float:
        return float(np.mean([f.train_accuracy for f in self.folds]))

    def pooled_report(self) -> EvalReport:
        reps = [f.report for f in self.folds]
        return EvalReport(sum((r.clip_ids for r in reps), []),
                          np.concatenate([r.true for r in reps]),
                          np.concatenate([r.pred for r in reps]),
                          np.concatenate([r.probs for r in reps]),
                          list(reps[0].class_names))


# --------------------------------------------------------------------------
# Evaluation primitives

def confusion_matrix(true, pred, n_classes: int) -> np.ndarray:
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (np.asarray(true, dtype=int), np.asarray(pred, dtype=int)), 1)
    return m


def accuracy_from_confusion(conf: np.ndarray) -> float:
    return float(np.trace(conf) / conf.sum())


def predict_clip(net, segments: np.ndarray) -> np.ndarray:
    """Mean of per-segment softmax vectors for one clip's (standardized) segments."""
    segments = np.asarray(segments)
    if segments.ndim == 3:
        segments = segments[None]
    if len(segments) == 0:
        raise NoSegments("clip has no segments")
    return net.predict_proba(segments).mean(axis=0)


def evaluate(net, clips: ClipSet, standardizer: Standardizer) -> EvalReport:
    probs = np.stack([predict_clip(net, standardizer.transform(s)) for s in clips.segments]) \
        if len(clips) else np.zeros((0, clips.n_classes))
    return EvalReport(list(clips.clip_ids), np.asarray(clips.labels), probs.argmax(axis=1),
                      probs, list(clips.class_names))


def confusion_diff(a: EvalReport, b: EvalReport) -> np.ndarray:
    """Row-normalized confusion of ``a`` minus that of ``b``.

    Negative off-diagonal entries mean ``a`` confuses that pair less.
    """
    def rownorm(c):
        s = c.sum(axis=1, keepdims=True).astype(np.float64)
        return np.divide(c, s, out=np.zeros(c.shape), where=s > 0)
    return rownorm(a.confusion) - rownorm(b.confusion)


def pca_embed(features: np.ndarray, dims: int = 2):
    """Project rows onto the top principal axes.

    Returns ``(projection (n, dims), explained variance ratio (dims,))``.
    Each axis is signed so its largest-magnitude loading is positive.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise DegenerateInput(f"need at least 3 rows of features, got shape {x.shape}")
    xc = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    if s[0] <= 1e-12 * max(1.0, np.abs(x).max()):
        raise DegenerateInput("features have rank 0 after centering")
    comps = vt[:dims]
    flip = np.sign(comps[np.arange(len(comps)), np.abs(comps).argmax(axis=1)])
    comps = comps * flip[:, None]
    var = s ** 2
    return xc @ comps.T, var[:dims] / var.sum()


# --------------------------------------------------------------------------
# Training

def split_fold(clips: ClipSet, held_out: int):
    """Training clips (all derivatives of other folds) and validation originals."""
    if held_out not in set(clips.folds.tolist()):
        raise FoldOutOfRange(f"fold {held_out} not in {sorted(set(clips.folds.tolist()))}")
    val_idx = np.flatnonzero((clips.folds == held_out) & ~clips.augmented)
    val_sources = {clips.source_ids[i] for i in np.flatnonzero(clips.folds == held_out)}
    train_idx = [i for i in np.flatnonzero(clips.folds != held_out)
                 if clips.source_ids[i] not in val_sources]
    return clips.subset(train_idx), clips.subset(val_idx)


def _rngs(seed: int, fold: int):
    init, data = np.random.SeedSequence(seed + fold).spawn(2)
    return np.random.default_rng(init), np.random.default_rng(data)


def train_fold(clips: ClipSet, held_out: int, cfg: TrainConfig) -> FoldResult:
    """Train one model with ``held_out`` as the validation fold."""
    train, val = split_fold(clips, held_out)
    if len(train) == 0:
        raise FoldOutOfRange(f"no training clips left when holding out fold {held_out}")
    n_classes = clips.n_classes
    init_rng, data_rng = _rngs(cfg.seed, held_out)

    x_raw, y, _ = train.stacked()
    std = Standardizer.fit(x_raw)
    x = std.transform(x_raw)
    del x_raw

    mcfg = ModelConfig(Arch(cfg.arch), n_classes, init_std=cfg.init_std, dropout=cfg.dropout, l2=cfg.l2)
    net = build(mcfg, init_rng)
    opt = SGDNesterov(cfg.base_lr, l2=cfg.l2)
    digest = hashlib.sha256()
    history = []
    n = len(x)
    for epoch in range(cfg.n_epochs):
        opt.lr = lr_schedule(epoch, cfg.profile, cfg.base_lr)
        order = data_rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            batch = mix_batch(x, y, 0, n_classes, cfg.mixup, data_rng, first=order[start:start + cfg.batch_size])
            digest.update(batch.first.tobytes() + batch.second.tobytes() + batch.lambdas.tobytes())
            logits = net.forward(batch.inputs, train=True)
            loss, grad = softmax_cross_entropy(logits, batch.labels.astype(logits.dtype))
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}")
            net.backward(grad.astype(logits.dtype))
            opt.step(net)
            m = len(batch.first)
            loss_sum += loss * m
            correct += int(np.sum(logits.argmax(axis=1) == batch.labels.argmax(axis=1)))
        last = epoch == cfg.n_epochs - 1
        if last and cfg.recalibrate_bn:
            net.recalibrate_bn(x, min(cfg.batch_size, 32))
        val_acc = float("nan")
        if len(val) and (cfg.validate_every_epoch or last):
            val_acc = evaluate(net, val, std).accuracy
        history.append(EpochLog(epoch, opt.lr, loss_sum / n, correct / n, val_acc))
        log.info("fold %d epoch %d lr %.4g loss %.4f train_acc %.3f val_acc %.3f",
                 held_out, epoch, opt.lr, loss_sum / n, correct / n, val_acc)

    report = evaluate(net, val, std)
    train_acc = evaluate(net, train, std).accuracy
    return FoldResult(held_out, net, std, history, report, train_acc, list(train.clip_ids),
                      digest.hexdigest())


def _train_fold_job(args):
    clips, fold, cfg = args
    return train_fold(clips, fold, cfg)


def cross_validate(clips: ClipSet, cfg: TrainConfig, folds=None, jobs: int = 1) -> CrossValResult:
    """Train one model per fold, each validated on its held-out fold."""
    folds = sorted(set(clips.folds.tolist())) if folds is None else list(folds)
    jobs_args = [(clips, f, cfg) for f in folds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_train_fold_job, jobs_args))
    else:
        results = [_train_fold_job(a) for a in jobs_args]
    return CrossValResult(results)


def alpha_sweep(clips: ClipSet, cfg: TrainConfig, alphas=(0.1, 0.2, 0.3, 0.4, 0.5),
                folds=None, jobs: int = 1) -> list[tuple[float, float]]:
    rows = []
    for a in alphas:
        res = cross_validate(clips, replace(cfg, mixup=MixupConfig(a, True)), folds, jobs)
        rows.append((float(a), res.mean_accuracy))
    return rows


def compare_architectures(clips: ClipSet, cfg: TrainConfig, archs=(Arch.PROPOSED, Arch.VGG10),
                          folds=None, jobs: int = 1) -> dict[Arch, CrossValResult]:
    """Cross-validate each architecture from one shared config.

    Batch order and mixup draws come from a data RNG stream that does not
    depend on the architecture, so every model sees identical batches.
    """
    return {Arch(a): cross_validate(clips, replace(cfg, arch=Arch(a)), folds, jobs) for a in archs}


def embed_clips(net, clips: ClipSet, standardizer: Standardizer):
    """Clip-level FC1 features (mean over segments) and their 2-D PCA projection."""
    feats = np.stack([extract_fc1(net, standardizer.transform(s)).mean(axis=0) for s in clips.segments])
    proj, ratio = pca_embed(feats, 2)
    return feats, proj, ratio


# --------------------------------------------------------------------------
# CSV output

def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_log_csv(path, history: list[EpochLog]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_HEADER)
        for h in history:
            w.writerow([h.epoch, _fmt(h.lr), _fmt(h.train_loss), _fmt(h.train_acc), _fmt(h.val_acc)])


def write_report_csv(path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["clip_id", "true_label", "predicted_label"]
                   + [f"prob_{k}" for k in range(report.n_classes)])
        for cid, t, p, pr in zip(report.clip_ids, report.true, report.pred, report.probs):
            w.writerow([cid, report.class_names[t], report.class_names[p]] + [_fmt(v) for v in pr])


def read_report_csv(path, class_names: list[str] | None = None) -> EvalReport:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if class_names is None:
        class_names = sorted({r["true_label"] for r in rows} | {r["predicted_label"] for r in rows})
    idx = {c: i for i, c in enumerate(class_names)}
    n = len(class_names)
    probs = np.array([[float(r[f"prob_{k}"]) for k in range(n)] for r in rows]).reshape(len(rows), n)
    return EvalReport([r["clip_id"] for r in rows], np.array([idx[r["true_label"]] for r in rows], dtype=int),
                      np.array([idx[r["predicted_label"]] for r in rows], dtype=int), probs, list(class_names))


def write_matrix_csv(path, matrix: np.ndarray, class_names: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\pred"] + list(class_names))
        for name, row in zip(class_names, matrix):
            w.writerow([name] + [_fmt(v) if np.issubdtype(matrix.dtype, np.floating) else int(v) for v in row])


def write_rows_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


__all__ = [
    "CrossValResult", "EpochLog", "EvalReport", "FoldResult", "TrainConfig", "accuracy_from_confusion",
    "alpha_sweep", "compare_architectures", "confusion_diff", "confusion_matrix", "cross_validate",
    "embed_clips", "evaluate", "pca_embed", "predict_clip", "softmax", "split_fold", "train_fold",
]
