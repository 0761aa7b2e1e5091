"""Manifests, feature extraction over a manifest, and in-memory clip sets."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import audio
from .errors import DataError, EscError, MissingFeatures
from .escf import read_escf, write_escf
from .features import BandType, FeatureConfig, extract_spectrogram, segments_from_spectrogram

log = logging.getLogger(__name__)

MANIFEST_HEADER = ("path", "label", "fold")
FEATURE_HEADER = ("path", "label", "fold", "source_id", "deform")


@dataclass
class ManifestRow:
    path: Path
    label: str
    class_index: int
    fold: int
    source_id: str = ""
    deform: str = ""

    @property
    def clip_id(self) -> str:
        return self.path.stem

    @property
    def augmented(self) -> bool:
        return bool(self.deform)


@dataclass
class Manifest:
    rows: list[ManifestRow]
    class_names: list[str]

    @property
    def folds(self) -> list[int]:
        return sorted({r.fold for r in self.rows})

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def read_manifest(path) -> Manifest:
    """Parse a ``path,label,fold`` CSV; extra ``source_id,deform`` columns are optional.

    Paths are resolved relative to the manifest's directory. Class indices
    follow sorted label order.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames[:3]) != list(MANIFEST_HEADER):
            raise DataError(f"{path}: header must start with {','.join(MANIFEST_HEADER)}")
        raw = list(reader)
    if not raw:
        raise DataError(f"{path}: manifest has no rows")
    classes = sorted({r["label"] for r in raw})
    index = {c: i for i, c in enumerate(classes)}
    rows = []
    for lineno, r in enumerate(raw, start=2):
        try:
            fold = int(r["fold"])
        except ValueError:
            raise DataError(f"{path}:{lineno}: fold must be an integer, got {r['fold']!r}") from None
        if fold < 1:
            raise DataError(f"{path}:{lineno}: folds are numbered from 1")
        p = Path(r["path"])
        p = p if p.is_absolute() else path.parent / p
        rows.append(ManifestRow(p, r["label"], index[r["label"]], fold,
                                r.get("source_id") or p.stem, r.get("deform") or ""))
    folds = sorted({r.fold for r in rows})
    if folds != list(range(1, len(folds) + 1)):
        raise DataError(f"{path}: fold indices {folds} do not cover 1..K")
    return Manifest(rows, classes)


def write_feature_manifest(path, rows: list[ManifestRow]) -> None:
    base = Path(path).parent
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FEATURE_HEADER)
        for r in rows:
            try:
                rel = r.path.relative_to(base)
            except ValueError:
                rel = r.path
            w.writerow([rel.as_posix(), r.label, r.fold, r.source_id, r.deform])


def featurize_manifest(manifest: Manifest, out_dir, kind: BandType | str = BandType.MEL,
                       augment: bool = False, cfg: FeatureConfig = FeatureConfig(),
                       deformations=audio.DEFAULT_DEFORMATIONS):
    """Write one ESCF file per clip (and per deformation when ``augment``).

    Returns ``(feature manifest path, list of (input path, error message))``.
    Per-file failures are collected rather than raised.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = BandType(kind)
    out_rows, failures = [], []
    for row in manifest.rows:
        try:
            clip = audio.prepare(audio.load_wav(row.path))
            variants = [("", clip)]
            if augment:
                variants += [(d.tag, audio.normalize(audio.deform(clip, d))) for d in deformations]
            for tag, c in variants:
                spec = extract_spectrogram(c, kind, cfg)
                clip_id = row.clip_id if not tag else f"{row.clip_id}__{tag}"
                dest = out_dir / f"{clip_id}.escf"
                meta = {"clip_id": clip_id, "source_id": row.clip_id, "label": row.label,
                        "deform": tag, "band_type": kind.value, "sample_rate": c.sample_rate,
                        "hop": cfg.hop, "n_fft": cfg.n_fft}
                write_escf(dest, spec.values.astype(np.float32), meta)
                out_rows.append(ManifestRow(dest, row.label, row.class_index, row.fold, row.clip_id, tag))
        except (EscError, OSError, ValueError) as exc:
            log.error("featurize failed for %s: %s", row.path, exc)
            failures.append((str(row.path), str(exc)))
    feature_manifest = out_dir / "features.csv"
    write_feature_manifest(feature_manifest, out_rows)
    return feature_manifest, failures


@dataclass
class ClipSet:
    """Segmented features for a set of clips, one ``(n_seg, 128, 128, 2)`` array per clip."""

    clip_ids: list[str]
    labels: np.ndarray
    folds: np.ndarray
    source_ids: list[str]
    augmented: np.ndarray
    segments: list[np.ndarray]
    class_names: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.clip_ids)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def subset(self, idx) -> "ClipSet":
        idx = list(np.asarray(idx, dtype=int))
        return ClipSet([self.clip_ids[i] for i in idx], self.labels[idx], self.folds[idx],
                       [self.source_ids[i] for i in idx], self.augmented[idx],
                       [self.segments[i] for i in idx], list(self.class_names))

    def stacked(self):
        """All segments as one array, with labels and owning-clip index per segment."""
        x = np.concatenate(self.segments, axis=0)
        counts = [len(s) for s in self.segments]
        owner = np.repeat(np.arange(len(self)), counts)
        return x, self.labels[owner], owner


def _segments_array(values: np.ndarray, clip_id: str, cfg: FeatureConfig) -> np.ndarray:
    return np.stack([t.values for t in segments_from_spectrogram(values, clip_id, cfg)]).astype(np.float32)


def load_clipset(manifest: Manifest, cfg: FeatureConfig = FeatureConfig()) -> ClipSet:
    """Load ESCF files listed in a feature manifest and segment them."""
    ids, segs = [], []
    for row in manifest.rows:
        if not row.path.exists():
            raise MissingFeatures(f"feature file not found: {row.path}")
        values, _ = read_escf(row.path)
        ids.append(row.clip_id)
        segs.append(_segments_array(values[:, :, 0].astype(np.float64), row.clip_id, cfg))
    rows = manifest.rows
    return ClipSet(ids, np.array([r.class_index for r in rows]), np.array([r.fold for r in rows]),
                   [r.source_id for r in rows], np.array([r.augmented for r in rows]),
                   segs, list(manifest.class_names))


def clipset_from_audio(clips, labels, folds, class_names, kind: BandType | str = BandType.MEL,
                       cfg: FeatureConfig = FeatureConfig()) -> ClipSet:
    """Build a ClipSet straight from AudioClips, skipping the file round trip."""
    ids, segs = [], []
    for c in clips:
        spec = extract_spectrogram(audio.prepare(c), kind, cfg)
        ids.append(c.source_id)
        segs.append(_segments_array(spec.values, c.source_id, cfg))
    n = len(ids)
    return ClipSet(ids, np.asarray(labels), np.asarray(folds), list(ids), np.zeros(n, dtype=bool),
                   segs, list(class_names))
