import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import Pipeline

from maskpool.audio import AudioClip
from maskpool.errors import ShapeError
from maskpool.estimators import (
    MaskedConvNetClassifier,
    SpectrogramExtractor,
    SpectrogramStandardizer,
)


def feature_problem(seed=0, n_per_class=6, bins=8, classes=3):
    rng = np.random.default_rng(seed)
    X, y = [], []
    for k in range(classes):
        for _ in range(n_per_class):
            h = int(rng.integers(9, 15))
            mat = rng.normal(scale=0.1, size=(h, bins)).astype(np.float32)
            mat[:, k] += 2.0
            X.append(mat)
            y.append(k)
    return X, np.array(y)


def small_clf(**kw):
    defaults = dict(task="scene", channels=4, num_temporal_layers=1,
                    batch_size=6, lr=3e-3, max_epochs=25, seed=0)
    defaults.update(kw)
    return MaskedConvNetClassifier(**defaults)


class TestSklearnProtocol:
    def test_get_set_params_round_trip(self):
        clf = small_clf()
        params = clf.get_params()
        assert params["channels"] == 4
        clf.set_params(channels=8, lr=1e-4)
        assert clf.channels == 8 and clf.lr == 1e-4

    def test_clone_preserves_params(self):
        clf = small_clf(crop_min=15, crop_max=40)
        cloned = clone(clf)
        assert cloned.get_params() == clf.get_params()

    def test_unfitted_predict_raises(self):
        with pytest.raises(NotFittedError):
            small_clf().predict([np.zeros((9, 8), dtype=np.float32)])


class TestSceneClassifier:
    def test_fit_predict_separable(self):
        X, y = feature_problem()
        clf = small_clf().fit(X, y)
        assert np.array_equal(clf.predict(X), y)
        proba = clf.predict_proba(X)
        assert proba.shape == (len(X), 3)
        assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-6)
        assert clf.score(X, y) == 1.0

    def test_string_labels_preserved(self):
        X, y_int = feature_problem(n_per_class=4)
        names = np.array(["beach", "bus", "car"])
        clf = small_clf(max_epochs=20).fit(X, names[y_int])
        assert set(clf.classes_) == set(names)
        assert set(clf.predict(X)) <= set(names)

    def test_validation_data_used_for_schedule(self):
        X, y = feature_problem(n_per_class=5)
        clf = small_clf(max_epochs=10).fit(X[:-3], y[:-3], X_val=X[-3:], y_val=y[-3:])
        assert len(clf.history_) <= 10

    def test_invalid_inputs_rejected(self):
        clf = small_clf()
        with pytest.raises(ShapeError):
            clf.fit([np.zeros((5, 4, 2), dtype=np.float32)], np.array([0]))
        with pytest.raises(ShapeError):
            clf.fit([], np.array([]))


class TestTaggingClassifier:
    def test_multi_label_fit_predict(self):
        rng = np.random.default_rng(1)
        X, Y = [], []
        for _ in range(24):
            tags = rng.integers(0, 2, size=2)
            mat = rng.normal(scale=0.1, size=(10, 6)).astype(np.float32)
            if tags[0]:
                mat[:, 1] += 2.0
            if tags[1]:
                mat[:, 4] += 2.0
            X.append(mat)
            Y.append(tags)
        Y = np.array(Y)
        if Y[:, 0].min() == Y[:, 0].max() or Y[:, 1].min() == Y[:, 1].max():
            pytest.skip("degenerate random draw")
        clf = small_clf(task="tagging", max_epochs=30).fit(X, Y)
        proba = clf.predict_proba(X)
        assert proba.shape == Y.shape
        assert np.all((proba >= 0.0) & (proba <= 1.0))
        pred = clf.predict(X)
        assert pred.shape == Y.shape
        assert np.mean(pred == Y) > 0.9


class TestTransformers:
    def test_extractor_output_shapes(self):
        fs = 16000
        t = np.arange(fs // 2) / fs
        clips = [AudioClip(0.4 * np.sin(2 * np.pi * 1000 * t), fs),
                 (0.4 * np.sin(2 * np.pi * 500 * t), fs)]
        mats = SpectrogramExtractor().transform(clips)
        assert all(m.shape[1] == 201 for m in mats)

    def test_standardizer_fit_transform(self):
        rng = np.random.default_rng(2)
        X = [np.abs(rng.normal(loc=2.0, size=(30, 5))).astype(np.float32) for _ in range(3)]
        std = SpectrogramStandardizer().fit(X)
        out = np.vstack(std.transform(X))
        assert np.max(np.abs(out.mean(axis=0))) < 1e-5
        assert std.mean_.shape == (5,)

    def test_standardizer_unfitted(self):
        with pytest.raises(NotFittedError):
            SpectrogramStandardizer().transform([np.ones((4, 3), dtype=np.float32)])

    def test_full_pipeline(self):
        fs = 16000
        rng = np.random.default_rng(3)
        freqs = [500.0, 2000.0]
        clips, labels = [], []
        for k, f in enumerate(freqs):
            for _ in range(6):
                t = np.arange(fs // 2) / fs
                phase = rng.uniform(0, 2 * np.pi)
                clips.append((0.5 * np.sin(2 * np.pi * f * t + phase), fs))
                labels.append(k)
        pipe = Pipeline([
            ("stft", SpectrogramExtractor()),
            ("standardize", SpectrogramStandardizer()),
            ("net", small_clf(max_epochs=20, lr=5e-3)),
        ])
        pipe.fit(clips, np.array(labels))
        assert np.array_equal(pipe.predict(clips), labels)
