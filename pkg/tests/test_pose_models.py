import numpy as np
import pytest

from palmgrasp.datasets import sample_contacts
from palmgrasp.geometry import ShapeClass, default_catalog
from palmgrasp.pose_models import (
    ClassRegressor, ClassUnderflow, GroundTruthEstimator, LocalSubspaceClassifier, ModelSet, ModelSetSpec,
    NeighbourKernelRegressor, PoseEstimate, TrainConfig, evaluate_mae, evaluate_predictions, mae_csv,
    load_model, predictions_table, read_model_header, rows_from_predictions, save_model, train_model_set,
)


@pytest.fixture(scope="module")
def tiny_train(sim):
    out = []
    for i, shape in enumerate(default_catalog()["train"]):
        out += sample_contacts(shape, 30, sim=sim, seed=i, render=False)
    return out


@pytest.fixture(scope="module")
def tiny_test(sim):
    out = []
    for shape in default_catalog()["test"]:
        out += sample_contacts(shape, 5, sim=sim, seed=99, render=False)
    return out


def test_class_lists():
    assert [len(ModelSetSpec(v).class_list) for v in ("M1", "M2", "M3")] == [2, 4, 7]
    m3 = ModelSetSpec("M3")
    assert m3.class_of(ShapeClass.LATERAL_CYLINDER, 0.0) == "lateral_cylinder+"
    assert m3.class_of(ShapeClass.LATERAL_CYLINDER, -0.1) == "lateral_cylinder-"
    assert m3.class_of(ShapeClass.HEMISPHERE, None) == "hemisphere"


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(split_fraction=1.0)
    with pytest.raises(ValueError):
        TrainConfig(estimator_kind="cnn")


def test_regressor_counts(tiny_train):
    m1 = train_model_set(ModelSetSpec("M1"), tiny_train)
    assert m1.n_regressors == 2
    m3 = train_model_set(ModelSetSpec("M3"), tiny_train)
    assert m3.n_regressors == 7  # one per class, including both edge signs
    assert m3.regressors["hemisphere"].dims == ("x", "y")
    assert m3.regressors["edge-"].dims == ("x", "yaw")


def test_k1_memorises_training_set(tiny_train):
    ms = train_model_set(ModelSetSpec("M3"), tiny_train, TrainConfig(k=1, k_regress=1, k_regress_edge=1))
    rows = evaluate_mae(ms, tiny_train)
    assert max(r.mae for r in rows) == pytest.approx(0.0, abs=1e-9)


def test_class_underflow(tiny_train):
    few = [s for s in tiny_train if s.shape_class is not ShapeClass.ELLIPSOID]
    with pytest.raises(ClassUnderflow):
        train_model_set(ModelSetSpec("M2"), few)
    with pytest.raises(ClassUnderflow):
        train_model_set(ModelSetSpec("M2"), [])


def test_predictions_respect_class_list_and_masks(tiny_train, tiny_test):
    for v in ("M1", "M2", "M3"):
        ms = train_model_set(ModelSetSpec(v), tiny_train)
        for s in tiny_test[::3]:
            p = ms.predict(s)
            assert p.shape_class in ms.spec.class_list
            if p.shape_class == "hemisphere":
                assert p.yaw is None
            if p.shape_class.startswith("lateral_cylinder"):
                assert p.x is None
            if p.shape_class.startswith("edge"):
                assert p.y is None


class _Const:
    def __init__(self, v):
        self.v = np.asarray(v, dtype=float)

    def predict(self, X):
        return np.tile(self.v, (len(X), 1)) if self.v.ndim else np.full(len(X), self.v)


class _Clf:
    def __init__(self, c):
        self.c = c

    def predict(self, X):
        return np.array([self.c] * len(X))


def _fake(variant, cls, values, dims, tiny_train):
    ms = ModelSet(ModelSetSpec(variant), TrainConfig(), _Clf(cls),
                  {cls: ClassRegressor([(dims, (1,) * len(dims), _Const(values))])})
    return ms.predict(tiny_train[0])


def test_sign_composition(tiny_train):
    p = _fake("M3", "lateral_cylinder-", [2.0, 30.0], ("y", "yaw"), tiny_train)
    assert p.yaw == -30.0 and p.y == 2.0


def test_magnitude_clipped_to_class_range(tiny_train):
    assert _fake("M3", "edge-", [5.0, 195.0], ("x", "yaw"), tiny_train).yaw == 180.0
    assert _fake("M3", "ellipsoid+", [0.0, 0.0, -2.0], ("x", "y", "yaw"), tiny_train).yaw == 0.0


def test_flat_surface_rule(tiny_train):
    assert _fake("M3", "edge+", [14.0, 10.0], ("x", "yaw"), tiny_train).flat_surface
    assert not _fake("M3", "edge+", [11.9, 10.0], ("x", "yaw"), tiny_train).flat_surface


def test_ground_truth_flat_at_14mm(sim):
    from palmgrasp.geometry import EdgedDisk, Pose
    shape = EdgedDisk(80, 20)
    obs = sim.observe(shape, Pose(), Pose(40 - 14.0, 0, 16.0, 0), label=None)
    from palmgrasp.geometry import relative_feature_pose
    lab = relative_feature_pose(shape, Pose(), Pose(40 - 14.0, 0, 0, 0))
    est = GroundTruthEstimator("M3").predict(type(obs)(obs.depth, obs.markers, obs.image, lab))
    assert lab.x == pytest.approx(14.0) and est.flat_surface


def test_evaluate_examples(tiny_test):
    perfect = evaluate_mae(GroundTruthEstimator("M3"), tiny_test)
    assert all(r.mae == 0.0 for r in perfect)
    recs = []
    for s in tiny_test:
        p = PoseEstimate("x", None if s.x is None else s.x + 1.0, s.y, s.yaw)
        recs.append((s.object_id, s.shape_class, {"x": s.x, "y": s.y, "yaw": s.yaw}, p))
    for r in evaluate_predictions(recs):
        assert r.mae == pytest.approx(1.0 if r.dimension == "x" else 0.0)
    assert mae_csv(perfect).splitlines()[0] == "object_id,dimension,mae,extreme_band_mae"


def test_predictions_csv_roundtrip(tiny_test, tmp_path):
    from palmgrasp.pose_models import predictions_csv, read_predictions_csv
    table = predictions_table(GroundTruthEstimator("M2"), tiny_test)
    p = tmp_path / "p.csv"
    p.write_text(predictions_csv(table))
    rows = rows_from_predictions(read_predictions_csv(p))
    assert all(r.mae == 0.0 for r in rows)


def test_extreme_band_split():
    recs = [("o", ShapeClass.LATERAL_CYLINDER, {"x": None, "y": 0.0, "yaw": 85.0}, PoseEstimate("c", None, 0.0, 75.0)),
            ("o", ShapeClass.LATERAL_CYLINDER, {"x": None, "y": 0.0, "yaw": 10.0}, PoseEstimate("c", None, 0.0, 11.0))]
    yaw = [r for r in evaluate_predictions(recs) if r.dimension == "yaw"][0]
    assert (yaw.extreme_band_mae, yaw.mid_band_mae, yaw.mae) == (10.0, 1.0, 5.5)


def test_save_load_deterministic(tiny_train, tiny_test, tmp_path):
    a = train_model_set(ModelSetSpec("M2"), tiny_train, seed=3, config_hash="cafe")
    b = train_model_set(ModelSetSpec("M2"), tiny_train, seed=3, config_hash="cafe")
    save_model(a, tmp_path / "a.pgm")
    save_model(b, tmp_path / "b.pgm")
    assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()
    hdr = read_model_header(tmp_path / "a.pgm")
    assert hdr["config_hash"] == "cafe" and hdr["variant"] == "M2"
    c = load_model(tmp_path / "a.pgm")
    for s in tiny_test:
        assert c.predict(s) == a.predict(s)
    (tmp_path / "bad.pgm").write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_model(tmp_path / "bad.pgm")


def test_local_subspace_classifier_k1_is_1nn():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 5))
    y = np.array(["a", "b"] * 20)
    clf = LocalSubspaceClassifier(k=1).fit(X, y)
    q = rng.normal(size=(10, 5))
    nn = y[np.argmin(((q[:, None] - X[None]) ** 2).sum(-1), axis=1)]
    assert list(clf.predict(q)) == list(nn)


def test_kernel_regressor_fits_smooth_function():
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, (400, 3))
    y = np.sin(2 * X[:, 0]) + X[:, 1] ** 2
    reg = NeighbourKernelRegressor(k=100, n_components=3, gamma=0.3).fit(X, y)
    q = rng.uniform(-0.8, 0.8, (50, 3))
    truth = np.sin(2 * q[:, 0]) + q[:, 1] ** 2
    assert np.abs(reg.predict(q) - truth).mean() < 0.02
    assert reg.predict(X[:5]) == pytest.approx(y[:5])


def test_error_shrinks_with_training_density(ctx):
    # every class subsampled to 250 samples per object vs the full 1000
    train = ctx.dataset.splits["train"]
    test = [s for s in ctx.dataset.splits["test"] if s.object_id == "hemisphere-45"]
    per_obj: dict[str, int] = {}
    sparse = []
    for s in train:
        per_obj[s.object_id] = per_obj.get(s.object_id, 0) + 1
        if per_obj[s.object_id] <= 250:
            sparse.append(s)
    errs = []
    for subset in (sparse, train):
        rows = evaluate_mae(train_model_set(ModelSetSpec("M3"), subset), test)
        errs.append(sum(r.mae for r in rows))
    assert errs[1] < errs[0]
