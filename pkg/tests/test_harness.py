import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from escnet.dataset import ClipSet
from escnet.errors import DegenerateInput, FoldOutOfRange, NoSegments
from escnet.features import Standardizer
from escnet.harness import (
    EvalReport, TrainConfig, accuracy_from_confusion, confusion_diff, confusion_matrix,
    pca_embed, predict_clip, read_report_csv, split_fold, train_fold, write_report_csv,
)
from escnet.mixup import MixupConfig
from escnet.nn import softmax


class LinearProbe:
    """Stand-in network: softmax of a fixed linear map of the mean segment value."""

    def __init__(self, n_classes=3, seed=0):
        self.w = np.random.default_rng(seed).standard_normal((2, n_classes))

    def predict_proba(self, x):
        return softmax(x.mean(axis=(1, 2)) @ self.w)


def _clipset(n_clips=12, n_classes=3, seed=0):
    rng = np.random.default_rng(seed)
    segs = [rng.standard_normal((rng.integers(1, 4), 128, 128, 2)).astype(np.float32) for _ in range(n_clips)]
    ids = [f"c{i}" for i in range(n_clips)]
    return ClipSet(ids, np.arange(n_clips) % n_classes, np.arange(n_clips) % 3 + 1, list(ids),
                   np.zeros(n_clips, bool), segs, [f"k{i}" for i in range(n_classes)])


def test_clip_probability_is_segment_mean():
    net = LinearProbe()
    segs = np.random.default_rng(1).standard_normal((5, 128, 128, 2))
    p = predict_clip(net, segs)
    np.testing.assert_allclose(p, net.predict_proba(segs).mean(axis=0), atol=1e-15)
    assert abs(p.sum() - 1) <= 1e-6
    with pytest.raises(NoSegments):
        predict_clip(net, np.zeros((0, 128, 128, 2)))


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=60))
def test_confusion_accuracy_identity(pairs):
    true, pred = map(np.array, zip(*pairs))
    conf = confusion_matrix(true, pred, 5)
    assert conf.sum() == len(pairs)
    assert accuracy_from_confusion(conf) == float(np.mean(true == pred))


def _report(seed=0, n=20, k=4):
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(k), n)
    return EvalReport([f"c{i}" for i in range(n)], rng.integers(0, k, n), probs.argmax(1), probs,
                      [f"k{i}" for i in range(k)])


def test_confusion_diff_self_is_zero():
    r = _report()
    assert not confusion_diff(r, r).any()


def test_confusion_diff_rows():
    a = EvalReport(["a", "b"], np.array([0, 1]), np.array([0, 1]), np.eye(2), ["x", "y"])
    b = EvalReport(["a", "b"], np.array([0, 1]), np.array([1, 1]), np.eye(2), ["x", "y"])
    np.testing.assert_array_equal(confusion_diff(a, b), [[1, -1], [0, 0]])


def test_report_csv_round_trip(tmp_path):
    r = _report(3)
    write_report_csv(tmp_path / "r.csv", r)
    back = read_report_csv(tmp_path / "r.csv", r.class_names)
    np.testing.assert_array_equal(back.true, r.true)
    np.testing.assert_array_equal(back.pred, r.pred)
    np.testing.assert_array_equal(back.probs, r.probs)
    assert back.clip_ids == r.clip_ids


def _eig_oracle(x):
    xc = x - x.mean(axis=0)
    vals, vecs = np.linalg.eigh(np.cov(xc, rowvar=False))
    order = np.argsort(vals)[::-1][:2]
    return xc @ vecs[:, order], vals[order] / vals.sum()


def test_pca_matches_eigendecomposition():
    x = np.random.default_rng(0).standard_normal((100, 512))
    proj, ratio = pca_embed(x)
    ref, ref_ratio = _eig_oracle(x)
    for k in range(2):
        sign = np.sign(proj[:, k] @ ref[:, k])
        np.testing.assert_allclose(proj[:, k], sign * ref[:, k], atol=1e-8)
    np.testing.assert_allclose(ratio, ref_ratio, atol=1e-10)


def test_pca_rank_two_reconstruction():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((50, 2)) @ rng.standard_normal((2, 40)) + rng.standard_normal(40)
    proj, ratio = pca_embed(x)
    xc = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(xc, full_matrices=False)
    basis = vt[:2]
    # the projection spans the same plane, so mapping back recovers the data
    coef, *_ = np.linalg.lstsq(proj, xc, rcond=None)
    assert np.max(np.abs(proj @ coef - xc)) <= 1e-9
    assert np.max(np.abs(xc @ basis.T @ basis - xc)) <= 1e-9
    assert ratio.sum() == pytest.approx(1.0, abs=1e-12)


def test_pca_degenerate():
    with pytest.raises(DegenerateInput):
        pca_embed(np.ones((10, 4)))
    with pytest.raises(DegenerateInput):
        pca_embed(np.zeros((2, 4)))


def test_split_fold_excludes_validation_derivatives():
    base = _clipset(6)
    # add an augmented copy of clip c0 (fold 1) and of c1 (fold 2)
    ids = base.clip_ids + ["c0__shift+1", "c1__shift+1"]
    clips = ClipSet(ids, np.r_[base.labels, base.labels[:2]], np.r_[base.folds, base.folds[:2]],
                    base.source_ids + ["c0", "c1"], np.r_[np.zeros(6, bool), [True, True]],
                    base.segments + base.segments[:2], base.class_names)
    train, val = split_fold(clips, 1)
    assert set(val.clip_ids) == {"c0", "c3"}
    assert "c0__shift+1" not in train.clip_ids
    assert "c1__shift+1" in train.clip_ids
    with pytest.raises(FoldOutOfRange):
        split_fold(clips, 9)


def test_standardizer_fit_transform():
    x = np.random.default_rng(0).standard_normal((10, 4, 4, 2)) * [1.0, 5.0] + [3.0, -1.0]
    s = Standardizer.fit(x)
    z = s.transform(x, np.float64)
    np.testing.assert_allclose(z.mean(axis=(0, 1, 2)), 0, atol=1e-12)
    np.testing.assert_allclose(z.std(axis=(0, 1, 2)), 1, atol=1e-12)
    back = Standardizer.from_dict(s.to_dict())
    np.testing.assert_array_equal(back.mean, s.mean)


@pytest.fixture(scope="module")
def tiny_runs():
    clips = _clipset(6, 3, seed=4)
    cfg = TrainConfig(epochs=2, batch_size=4, base_lr=0.002, mixup=MixupConfig(0.2), seed=3)
    return clips, cfg, train_fold(clips, 1, cfg), train_fold(clips, 1, cfg)


def test_train_fold_is_deterministic(tiny_runs):
    _, _, a, b = tiny_runs
    assert a.data_digest == b.data_digest
    for la, lb in zip(a.net.layers, b.net.layers):
        for x, y in zip(la.state_arrays(), lb.state_arrays()):
            assert x.tobytes() == y.tobytes()
    rows = lambda r: np.array([list(vars(h).values()) for h in r.log], dtype=float)
    np.testing.assert_array_equal(rows(a), rows(b))


def test_train_fold_outputs(tiny_runs):
    clips, cfg, res, _ = tiny_runs
    assert len(res.log) == cfg.n_epochs
    assert res.report.clip_ids == ["c0", "c3"]
    np.testing.assert_allclose(res.report.probs.sum(axis=1), 1, atol=1e-6)
    assert res.report.accuracy == accuracy_from_confusion(res.report.confusion)


def test_data_exposure_independent_of_arch(tiny_runs):
    from escnet.model import Arch
    from dataclasses import replace
    clips, cfg, res, _ = tiny_runs
    vgg = train_fold(clips, 1, replace(cfg, arch=Arch.VGG10, epochs=2))
    assert vgg.data_digest == res.data_digest


def _stub_build(cfg, rng, dtype=np.float32):
    """A few-hundred-parameter network with the real layer types."""
    from escnet.nn import BatchNorm, Dense, Flatten, MaxPool, Network, ReLU
    d = Dense(2 * 8 * 8, cfg.n_classes, name="fc2")
    d.params["W"][...] = rng.normal(0, 0.05, d.params["W"].shape)
    layers = [MaxPool((16, 16), name="pool"), BatchNorm(2, name="bn"), Flatten(name="flatten"),
              ReLU(name="relu_fc1"), d]
    return Network(layers, cfg.input_shape, {"arch": cfg.arch.value, "n_classes": cfg.n_classes})


def test_urban_schedule_recorded_in_log(monkeypatch):
    monkeypatch.setattr("escnet.harness.build", _stub_build)
    clips = _clipset(6, 3, seed=5)
    res = train_fold(clips, 1, TrainConfig(profile="urban", epochs=None, batch_size=4,
                                           base_lr=0.1, validate_every_epoch=False))
    lrs = np.array([h.lr for h in res.log])
    assert len(lrs) == 200
    assert [h.epoch for h in res.log] == list(range(200))
    drops = np.flatnonzero(np.diff(lrs) != 0) + 1
    np.testing.assert_array_equal(drops, [80, 160])
    np.testing.assert_allclose(lrs[[0, 80, 160]], [0.1, 0.01, 0.001])
