"""Classifier plus per-class regressor model sets (M1, M2, M3) and their evaluation.

M1 separates curved surfaces from edges, M2 separates the four feature
types, and M3 further splits the yaw-carrying classes by the sign of yaw so
each regressor only sees yaw magnitudes.  Two interchangeable backbones are
provided: ``knn_oracle`` works on the simulator's marker displacements and
``learned`` is a small multilayer perceptron on downsampled images.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import pickle
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg
from sklearn.decomposition import PCA
from sklearn.neighbors import NearestNeighbors
from sklearn.neural_network import MLPClassifier, MLPRegressor
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from .geometry import WORKSPACE_HALF_WIDTH, ShapeClass, fold_deg, wrap_deg
from .tactile import Observation, TactileImage

MODEL_MAGIC = b"PGMODEL\0"
MODEL_VERSION = 1
MIN_CLASS_SAMPLES = 10
EXTREME_BAND = 10.0  # degrees from the yaw range boundary
NORM_SCALE = 0.03  # per mm of total marker displacement


class ClassUnderflow(ValueError):
    pass


class Variant(str, enum.Enum):
    M1 = "M1"
    M2 = "M2"
    M3 = "M3"


# valid regression dimensions per feature type
DIMS = {
    ShapeClass.HEMISPHERE: ("x", "y"),
    ShapeClass.ELLIPSOID: ("x", "y", "yaw"),
    ShapeClass.LATERAL_CYLINDER: ("y", "yaw"),
    ShapeClass.EDGED_FLAT: ("x", "yaw"),
}
_CURVED = (ShapeClass.HEMISPHERE, ShapeClass.ELLIPSOID, ShapeClass.LATERAL_CYLINDER)
_SHORT = {
    ShapeClass.HEMISPHERE: "hemisphere",
    ShapeClass.ELLIPSOID: "ellipsoid",
    ShapeClass.LATERAL_CYLINDER: "lateral_cylinder",
    ShapeClass.EDGED_FLAT: "edge",
}


@dataclass(frozen=True)
class ModelSetSpec:
    variant: Variant

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))

    @property
    def class_list(self) -> tuple[str, ...]:
        if self.variant is Variant.M1:
            return ("curved", "edge")
        if self.variant is Variant.M2:
            return tuple(_SHORT[c] for c in ShapeClass)
        return ("hemisphere", "ellipsoid+", "ellipsoid-", "lateral_cylinder+", "lateral_cylinder-", "edge+", "edge-")

    def class_of(self, shape_class: ShapeClass, yaw: float | None) -> str:
        shape_class = ShapeClass(shape_class)
        if self.variant is Variant.M1:
            return "curved" if shape_class in _CURVED else "edge"
        name = _SHORT[shape_class]
        if self.variant is Variant.M2 or yaw is None:
            return name
        return name + ("+" if yaw >= 0 else "-")  # yaw == 0 goes to the positive class

    def dims(self, cls: str) -> tuple[str, ...]:
        if cls == "curved":
            return ("x", "y", "yaw")
        return DIMS[feature_type(cls)]

    def is_edge(self, cls: str) -> bool:
        return cls.startswith("edge")


def feature_type(cls: str) -> ShapeClass | None:
    base = cls.rstrip("+-")
    for k, v in _SHORT.items():
        if v == base:
            return k
    return None  # M1 "curved"


def yaw_sign(cls: str) -> float:
    return -1.0 if cls.endswith("-") else 1.0


@dataclass(frozen=True)
class TrainConfig:
    split_fraction: float = 0.8
    max_epochs: int = 100
    early_stop_patience: int = 10
    estimator_kind: str = "knn_oracle"
    k: int = 20  # classifier neighbours per class
    subspace_dim: int = 6  # local affine patch used by the classifier
    k_regress: int = 200  # regressor neighbours, curved classes
    k_regress_edge: int = 100  # edges: two labelled dims, so a tighter neighbourhood pays off
    n_components: int = 30  # PCA subspace for the regressor's neighbour search
    kernel_gamma: float = 0.003  # relative to the mean PCA-score variance
    kernel_alpha: float = 1e-6
    yaw_encoding: str = "linear"  # or "circular" (sin/cos of the symmetry-scaled angle)
    hidden: tuple[int, ...] = (128,)
    image_stride: int = 4

    def __post_init__(self):
        if not 0 < self.split_fraction < 1:
            raise ValueError("split_fraction must lie in (0, 1)")
        if self.estimator_kind not in ("knn_oracle", "learned"):
            raise ValueError(f"unknown estimator kind {self.estimator_kind!r}")
        if self.yaw_encoding not in ("linear", "circular"):
            raise ValueError(f"unknown yaw encoding {self.yaw_encoding!r}")
        if min(self.k, self.k_regress, self.k_regress_edge) < 1:
            raise ValueError("k must be >= 1")
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if self.kernel_gamma <= 0 or self.kernel_alpha <= 0:
            raise ValueError("kernel parameters must be positive")


@dataclass(frozen=True)
class PoseEstimate:
    shape_class: str
    x: float | None
    y: float | None
    yaw: float | None
    flat_surface: bool = False

    @property
    def is_edge(self) -> bool:
        return self.shape_class.startswith("edge") or self.shape_class == ShapeClass.EDGED_FLAT.value


# --------------------------------------------------------------------------
# features
# --------------------------------------------------------------------------

def image_features(img, stride: int = 4) -> np.ndarray:
    px = np.asarray(img.pixels if isinstance(img, TactileImage) else img, dtype=np.float32)
    h, w = px.shape
    px = px[: h - h % stride, : w - w % stride]
    return px.reshape(h // stride, stride, w // stride, stride).mean(axis=(1, 3)).ravel() / 255.0


def displacement_features(disp) -> np.ndarray:
    """Unit-norm displacement field plus its (scaled) norm.

    Splitting shape from magnitude makes neighbours agree on the feature
    pose rather than on how deep the press was.
    """
    v = np.asarray(disp, dtype=float).ravel()
    n = float(np.linalg.norm(v))
    unit = v / n if n > 0 else v
    return np.append(unit, NORM_SCALE * n)


def features_of(item, kind: str, stride: int = 4) -> np.ndarray:
    """Feature vector for an Observation, ContactSample or TactileImage."""
    if kind == "knn_oracle":
        markers = getattr(item, "markers", None)
        if markers is None:
            raise ValueError("the oracle estimator needs marker displacements")
        return displacement_features(markers.displacement)
    img = item if isinstance(item, TactileImage) else getattr(item, "image", None)
    if img is None:
        raise ValueError("the learned estimator needs an image")
    return image_features(img, stride)


# --------------------------------------------------------------------------
# yaw encodings
# --------------------------------------------------------------------------

def _yaw_period(cls: str, spec: ModelSetSpec) -> float:
    return 360.0 if spec.is_edge(cls) else 180.0


def _encode_yaw(yaw: np.ndarray, period: float, encoding: str) -> np.ndarray:
    if encoding == "linear":
        return yaw[:, None]
    t = np.radians(yaw) * (360.0 / period)
    return np.column_stack([np.sin(t), np.cos(t)])


def _decode_yaw(v: np.ndarray, period: float, encoding: str) -> float:
    if encoding == "linear":
        return float(v[0])
    a = math.degrees(math.atan2(v[0], v[1])) * (period / 360.0)
    return fold_deg(a) if period == 180.0 else wrap_deg(a)


# --------------------------------------------------------------------------
# model set
# --------------------------------------------------------------------------

class LocalSubspaceClassifier:
    """Nearest local patch classifier.

    For every class the query's k nearest same-class samples are reduced to
    their mean plus top ``dim`` principal directions; the class whose affine
    patch passes closest to the query wins.  This follows each class's
    sample manifold much more closely than a neighbour vote when samples are
    sparse.  With k = 1 it is plain 1-NN.
    """

    def __init__(self, k: int = 20, dim: int = 6):
        self.k, self.dim = k, dim

    def fit(self, X, labels):
        X = np.asarray(X, dtype=float)
        labels = np.asarray(labels)
        self.classes_ = np.array(sorted(set(labels.tolist())))
        self.X_ = {c: X[labels == c] for c in self.classes_}
        self.nn_ = {c: NearestNeighbors(n_neighbors=min(self.k, len(Xc)), algorithm="brute").fit(Xc)
                    for c, Xc in self.X_.items()}
        return self

    def residuals(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        res = np.empty((len(X), len(self.classes_)))
        for j, c in enumerate(self.classes_):
            dist, idx = self.nn_[c].kneighbors(X)
            for q in range(len(X)):
                if dist[q, 0] == 0:
                    res[q, j] = 0.0
                    continue
                nb = self.X_[c][idx[q]]
                mu = nb.mean(axis=0)
                v = X[q] - mu
                r = min(self.dim, len(nb) - 1)
                if r > 0:
                    basis = np.linalg.svd(nb - mu, full_matrices=False)[2][:r]
                    v = v - basis.T @ (basis @ v)
                res[q, j] = np.linalg.norm(v) if len(nb) > 1 else dist[q, 0]
        return res

    def predict(self, X):
        return self.classes_[np.argmin(self.residuals(X), axis=1)]


def _make_classifier(cfg: TrainConfig, seed: int, n: int):
    if cfg.estimator_kind == "knn_oracle":
        return LocalSubspaceClassifier(cfg.k, cfg.subspace_dim)
    return make_pipeline(StandardScaler(), MLPClassifier(
        hidden_layer_sizes=cfg.hidden, max_iter=cfg.max_epochs, early_stopping=True,
        validation_fraction=1 - cfg.split_fraction, n_iter_no_change=cfg.early_stop_patience,
        random_state=seed))


class NeighbourKernelRegressor:
    """k-NN regression with a kernel-ridge fit over each query's neighbours.

    Neighbours are found in a PCA subspace of the training features.  On
    those k samples a Gaussian-kernel ridge model of the targets (about
    their neighbourhood mean) is solved and evaluated at the query, which
    interpolates far more smoothly than a weighted neighbour average when
    the label space is sparsely sampled.  Exact feature matches return the
    matched targets.
    """

    def __init__(self, k: int = 100, n_components: int = 30, gamma: float = 0.003, alpha: float = 1e-6):
        self.k, self.n_components, self.gamma, self.alpha = k, n_components, gamma, alpha

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self._1d = y.ndim == 1
        self.y_ = y[:, None] if self._1d else y
        self.k_ = min(self.k, len(X))
        nc = min(self.n_components, X.shape[1], len(X))
        self.pca_ = PCA(nc, svd_solver="full").fit(X)
        self.Z_ = self.pca_.transform(X)
        scale = float(self.Z_.std(axis=0).mean()) or 1.0
        self.gamma_ = self.gamma / scale**2
        self.nn_ = NearestNeighbors(n_neighbors=self.k_, algorithm="brute").fit(self.Z_)
        return self

    def predict(self, X):
        Zq = self.pca_.transform(np.asarray(X, dtype=float))
        dist, idx = self.nn_.kneighbors(Zq)
        out = np.empty((len(Zq), self.y_.shape[1]))
        for q in range(len(Zq)):
            ix = idx[q]
            exact = dist[q] == 0
            if exact.any():
                out[q] = self.y_[ix[exact]].mean(axis=0)
                continue
            Zn, Yn = self.Z_[ix], self.y_[ix]
            mean = Yn.mean(axis=0)
            sq = (Zn * Zn).sum(axis=1)
            K = np.exp(-self.gamma_ * np.maximum(sq[:, None] + sq[None] - 2 * Zn @ Zn.T, 0.0))
            K[np.diag_indices_from(K)] += self.alpha
            coef = linalg.solve(K, Yn - mean, assume_a="pos")
            kq = np.exp(-self.gamma_ * ((Zn - Zq[q]) ** 2).sum(axis=1))
            out[q] = mean + kq @ coef
        return out[:, 0] if self._1d else out


def _make_regressor(cfg: TrainConfig, seed: int, n: int, edge: bool = False):
    if cfg.estimator_kind == "knn_oracle":
        k = cfg.k_regress_edge if edge else cfg.k_regress
        return NeighbourKernelRegressor(k, cfg.n_components, cfg.kernel_gamma, cfg.kernel_alpha)
    return make_pipeline(StandardScaler(), MLPRegressor(
        hidden_layer_sizes=cfg.hidden, max_iter=cfg.max_epochs, early_stopping=True,
        validation_fraction=1 - cfg.split_fraction, n_iter_no_change=cfg.early_stop_patience,
        random_state=seed))


@dataclass
class ClassRegressor:
    """A class's regressor: one multi-output fit per group of dimensions
    sharing a validity mask (a single group except in mixed M1 classes).
    Each part is ``(dims, columns per dim, model)``."""

    parts: list[tuple[tuple[str, ...], tuple[int, ...], object]]

    @property
    def dims(self) -> tuple[str, ...]:
        return tuple(d for dims, _, _ in self.parts for d in dims)


@dataclass
class ModelSet:
    spec: ModelSetSpec
    cfg: TrainConfig
    classifier: object
    regressors: dict[str, ClassRegressor]
    seed: int = 0
    config_hash: str = ""
    train_counts: dict[str, int] = field(default_factory=dict)

    @property
    def n_regressors(self) -> int:
        return len(self.regressors)

    def predict(self, item) -> PoseEstimate:
        return predict_pose(self, item)


def train_model_set(spec: ModelSetSpec, samples, cfg: TrainConfig = TrainConfig(), seed: int = 0,
                    config_hash: str = "") -> ModelSet:
    """Fit one classifier over ``spec.class_list`` and one regressor per class.

    Each regressor sees only its own class's samples and predicts all of
    the class's valid dimensions jointly.  M3 regressors fit yaw
    magnitudes.
    """
    samples = list(samples)
    if not samples:
        raise ClassUnderflow("empty training set")
    X = np.stack([features_of(s, cfg.estimator_kind, cfg.image_stride) for s in samples])
    classes = np.array([spec.class_of(s.shape_class, s.yaw) for s in samples])
    counts = {c: int((classes == c).sum()) for c in spec.class_list}
    short = {c: n for c, n in counts.items() if n < MIN_CLASS_SAMPLES}
    if short:
        raise ClassUnderflow(f"classes with fewer than {MIN_CLASS_SAMPLES} samples: {short}")
    unknown = set(classes) - set(spec.class_list)
    if unknown:
        raise ValueError(f"samples outside the class list: {sorted(unknown)}")

    clf = _make_classifier(cfg, seed, len(X)).fit(X, classes)
    regs: dict[str, ClassRegressor] = {}
    for c in spec.class_list:
        idx = np.flatnonzero(classes == c)
        groups: dict[tuple, list[str]] = {}
        for dim in spec.dims(c):
            mask = tuple(getattr(samples[i], dim) is not None for i in idx)
            if any(mask):
                groups.setdefault(mask, []).append(dim)
        parts = []
        for mask, dims in groups.items():
            sel = idx[np.array(mask)]
            cols = []
            for dim in dims:
                y = np.array([getattr(samples[i], dim) for i in sel], dtype=float)
                if dim == "yaw":
                    y = np.abs(y)[:, None] if spec.variant is Variant.M3 else \
                        _encode_yaw(y, _yaw_period(c, spec), cfg.yaw_encoding)
                else:
                    y = y[:, None]
                cols.append(y)
            model = _make_regressor(cfg, seed, len(sel), spec.is_edge(c)).fit(X[sel], np.hstack(cols))
            parts.append((tuple(dims), tuple(y.shape[1] for y in cols), model))
        regs[c] = ClassRegressor(parts)
    return ModelSet(spec, cfg, clf, regs, seed, config_hash, counts)


def predict_pose(model_set: ModelSet, item) -> PoseEstimate:
    """Classify, then regress with the chosen class's regressor."""
    cfg, spec = model_set.cfg, model_set.spec
    f = features_of(item, cfg.estimator_kind, cfg.image_stride)[None]
    cls = str(model_set.classifier.predict(f)[0])
    out: dict[str, float | None] = {"x": None, "y": None, "yaw": None}
    for dims, widths, model in model_set.regressors[cls].parts:
        v = np.atleast_1d(np.asarray(model.predict(f), dtype=float)[0])
        start = 0
        for dim, w in zip(dims, widths):
            part = v[start:start + w]
            start += w
            if dim != "yaw":
                out[dim] = float(part[0])
            elif spec.variant is Variant.M3:
                # magnitude stays inside the class's trained half range
                top = 180.0 if spec.is_edge(cls) else 90.0
                out[dim] = yaw_sign(cls) * float(np.clip(part[0], 0.0, top))
                if out[dim] == -180.0:
                    out[dim] = 180.0
            else:
                out[dim] = _decode_yaw(part, _yaw_period(cls, spec), cfg.yaw_encoding)
    flat = spec.is_edge(cls) and out["x"] is not None and out["x"] >= WORKSPACE_HALF_WIDTH
    return PoseEstimate(cls, out["x"], out["y"], out["yaw"], bool(flat))


class GroundTruthEstimator:
    """Returns the simulator's label as the estimate (exact predictions)."""

    def __init__(self, variant: Variant | str = Variant.M2):
        self.spec = ModelSetSpec(Variant(variant))

    def predict(self, obs: Observation) -> PoseEstimate:
        lab = obs.label
        if lab is None:
            raise ValueError("observation carries no ground-truth label")
        cls = self.spec.class_of(lab.shape_class, lab.yaw)
        yaw = lab.yaw
        flat = lab.shape_class is ShapeClass.EDGED_FLAT and lab.x >= WORKSPACE_HALF_WIDTH
        return PoseEstimate(cls, lab.x, lab.y, yaw, bool(flat))


# --------------------------------------------------------------------------
# serialisation
# --------------------------------------------------------------------------

def save_model(model_set: ModelSet, path) -> None:
    header = json.dumps({
        "version": MODEL_VERSION,
        "variant": model_set.spec.variant.value,
        "config_hash": model_set.config_hash,
        "train_config": asdict(model_set.cfg),
        "seed": model_set.seed,
    }, sort_keys=True).encode()
    payload = pickle.dumps(model_set, protocol=4)
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<HI", MODEL_VERSION, len(header)))
        fh.write(header)
        fh.write(payload)


def read_model_header(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(len(MODEL_MAGIC)) != MODEL_MAGIC:
            raise ValueError(f"{path}: not a model file")
        version, n = struct.unpack("<HI", fh.read(6))
        if version != MODEL_VERSION:
            raise ValueError(f"{path}: unsupported model version {version}")
        return json.loads(fh.read(n))


def load_model(path) -> ModelSet:
    read_model_header(path)
    with open(path, "rb") as fh:
        fh.seek(len(MODEL_MAGIC))
        _, n = struct.unpack("<HI", fh.read(6))
        fh.seek(n, 1)
        return pickle.loads(fh.read())


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def _boundary(shape_class: ShapeClass) -> float | None:
    if shape_class is ShapeClass.HEMISPHERE:
        return None
    return 180.0 if shape_class is ShapeClass.EDGED_FLAT else 90.0


def sample_errors(shape_class: ShapeClass, truth: dict, pred: PoseEstimate) -> dict[str, float]:
    """Absolute errors per valid dimension; missing predictions count as 0.

    Yaw is compared modulo the feature's symmetry period.  When a symmetric
    feature's predicted yaw sits on the other half-turn, positions are
    compared with the equivalent flipped label.
    """
    shape_class = ShapeClass(shape_class)
    p = {k: (v if v is not None else 0.0) for k, v in (("x", pred.x), ("y", pred.y), ("yaw", pred.yaw))}
    sign = 1.0
    errs = {}
    if truth.get("yaw") is not None:
        raw = wrap_deg(p["yaw"] - truth["yaw"])
        if shape_class is ShapeClass.EDGED_FLAT:
            errs["yaw"] = abs(raw)
        else:
            errs["yaw"] = abs(fold_deg(raw))
            if abs(raw) > 90.0:
                sign = -1.0
    for dim in ("x", "y"):
        if truth.get(dim) is not None:
            errs[dim] = abs(p[dim] - sign * truth[dim])
    return errs


@dataclass
class EvalRow:
    object_id: str
    dimension: str
    mae: float
    extreme_band_mae: float | None
    mid_band_mae: float | None
    n: int


def _ordered_dims(errs_list):
    seen = []
    for e in errs_list:
        for k in ("x", "y", "yaw"):
            if k in e and k not in seen:
                seen.append(k)
    return [k for k in ("x", "y", "yaw") if k in seen]


def evaluate_predictions(records) -> list[EvalRow]:
    """records: iterable of (object_id, shape_class, truth_dict, PoseEstimate)."""
    groups: dict[str, list] = {}
    for oid, sc, truth, pred in records:
        groups.setdefault(oid, []).append((ShapeClass(sc), truth, pred))
    rows = []
    for oid in sorted(groups):
        items = groups[oid]
        errs = [sample_errors(sc, t, p) for sc, t, p in items]
        bound = _boundary(items[0][0])
        extreme = np.array([
            bound is not None and t.get("yaw") is not None and abs(t["yaw"]) >= bound - EXTREME_BAND
            for _, t, _ in items
        ])
        for dim in _ordered_dims(errs):
            e = np.array([x[dim] for x in errs])
            ext = float(e[extreme].mean()) if bound is not None and extreme.any() else None
            mid = float(e[~extreme].mean()) if bound is not None and (~extreme).any() else None
            rows.append(EvalRow(oid, dim, float(e.mean()), ext, mid, len(e)))
    return rows


def evaluate_mae(model_set, test_samples) -> list[EvalRow]:
    """Per-object, per-dimension MAE with extreme- and mid-band yaw splits."""
    return evaluate_predictions(_predict_all(model_set, test_samples))


def _predict_all(model_set, test_samples):
    out = []
    for s in test_samples:
        truth = {"x": s.x, "y": s.y, "yaw": s.yaw}
        out.append((s.object_id, s.shape_class, truth, model_set.predict(s)))
    return out


def predictions_table(model_set, test_samples) -> list[dict]:
    rows = []
    for oid, sc, truth, p in _predict_all(model_set, test_samples):
        rows.append({
            "object_id": oid, "shape_class": ShapeClass(sc).value,
            "x_true": truth["x"], "y_true": truth["y"], "yaw_true": truth["yaw"],
            "class_pred": p.shape_class, "x_pred": p.x, "y_pred": p.y, "yaw_pred": p.yaw,
        })
    return rows


def rows_from_predictions(table: list[dict]) -> list[EvalRow]:
    def f(v):
        return None if v in (None, "") else float(v)

    recs = []
    for r in table:
        truth = {"x": f(r["x_true"]), "y": f(r["y_true"]), "yaw": f(r["yaw_true"])}
        pred = PoseEstimate(r["class_pred"], f(r["x_pred"]), f(r["y_pred"]), f(r["yaw_pred"]))
        recs.append((r["object_id"], r["shape_class"], truth, pred))
    return evaluate_predictions(recs)


def _fmt(v):
    return "" if v is None else repr(float(v))


def mae_csv(rows: list[EvalRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["object_id", "dimension", "mae", "extreme_band_mae"])
    for r in rows:
        w.writerow([r.object_id, r.dimension, _fmt(r.mae), _fmt(r.extreme_band_mae)])
    return buf.getvalue()


def predictions_csv(table: list[dict]) -> str:
    cols = ["object_id", "shape_class", "x_true", "y_true", "yaw_true", "class_pred", "x_pred", "y_pred", "yaw_pred"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in table:
        w.writerow([_fmt(r[c]) if c not in ("object_id", "shape_class", "class_pred") else r[c] for c in cols])
    return buf.getvalue()


def read_predictions_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))

