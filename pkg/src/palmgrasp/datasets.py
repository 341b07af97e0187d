"""Synthetic contact datasets over the workspace pose ranges, and their on-disk format.

A dataset directory holds one JSON-lines manifest per split, a
``meta.json`` with the seed and configuration hash, binary PGM images and
per-sample marker CSVs::

    root/
      meta.json
      train.jsonl  test.jsonl
      images/<split>/<object_id>/00000.pgm
      markers/<split>/<object_id>/00000.csv

Each sample is drawn from its own generator seeded by
``(seed, crc32(object_id), index)``, so any sample can be regenerated in
isolation and generation parallelises over objects without changing bytes.
"""

from __future__ import annotations

import json
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .geometry import (
    WORKSPACE_HALF_WIDTH,
    EdgedPrism,
    FeatureLabel,
    FeatureOutOfWorkspace,
    Pose,
    Shape,
    ShapeClass,
    contact_depth,
    object_id as make_object_id,
    palm_pose_for_label,
    relative_feature_pose,
)
from .tactile import MarkerField, TactileImage, TactileSim

log = logging.getLogger(__name__)

REFERENCE_DEPTH = 3.0
FORMAT_VERSION = 1
FIELDS = ("object_id", "shape_class", "x_mm", "y_mm", "z_mm", "yaw_deg", "depth_mm", "image", "markers")

_W = WORKSPACE_HALF_WIDTH
TABLE_RANGES = {
    ShapeClass.HEMISPHERE: {"x": (-_W, _W), "y": (-_W, _W), "z": (-1.0, 1.0), "yaw": None},
    ShapeClass.LATERAL_CYLINDER: {"x": None, "y": (-_W, _W), "z": (-1.0, 1.0), "yaw": (-90.0, 90.0)},
    ShapeClass.ELLIPSOID: {"x": (-_W, _W), "y": (-_W, _W), "z": (-1.0, 1.0), "yaw": (-90.0, 90.0)},
    ShapeClass.EDGED_FLAT: {"x": (-_W, _W), "y": None, "z": (-1.0, 1.0), "yaw": (-180.0, 180.0)},
}


class CorruptManifest(ValueError):
    pass


class MissingImage(FileNotFoundError):
    pass


class NoOverlap(ValueError):
    """The palm footprint never meets the object at this lateral pose."""


# --------------------------------------------------------------------------
# palm placement
# --------------------------------------------------------------------------

def set_depth(sim: TactileSim, shape: Shape, object_pose: Pose, palm: Pose, depth: float) -> Pose:
    """Return ``palm`` lowered or raised so the contact depth equals ``depth``."""
    d0 = contact_depth(shape, object_pose, sim.geom, Pose(palm.x, palm.y, 0.0, palm.yaw))
    if not math.isfinite(d0):
        raise NoOverlap(f"no overlap between palm and object at ({palm.x:.2f}, {palm.y:.2f})")
    return Pose(palm.x, palm.y, d0 - depth, palm.yaw)


def configure_palm(sim: TactileSim, shape: Shape, object_pose: Pose, label: FeatureLabel,
                   depth: float, along: float = 0.0, azimuth: float = 0.0) -> Pose:
    palm = palm_pose_for_label(shape, label, object_pose, 0.0, along, azimuth)
    return set_depth(sim, shape, object_pose, palm, depth)


def _check_ranges(cls: ShapeClass, ranges: dict) -> dict:
    table = TABLE_RANGES[cls]
    out = dict(table)
    for k, v in (ranges or {}).items():
        if k not in table:
            raise ValueError(f"unknown pose dimension {k!r}")
        if (table[k] is None) != (v is None):
            raise ValueError(f"{cls.value}: dimension {k} validity does not match the class")
        if v is not None:
            lo, hi = v
            tlo, thi = table[k]
            if not (tlo <= lo <= hi <= thi):
                raise ValueError(f"{cls.value}: range {k}={v} outside {table[k]}")
        out[k] = v
    return out


def random_label(shape: Shape, rng: np.random.Generator, ranges: dict | None = None):
    """Draw a feature label uniformly over the ranges.

    Returns ``(label, along, azimuth)``; the last two are nuisance placement
    coordinates (position along a cylinder axis or prism side, and palm yaw
    for rotationally symmetric features).
    """
    cls = shape.shape_class
    r = _check_ranges(cls, ranges) if ranges else TABLE_RANGES[cls]

    def u(k):
        return None if r[k] is None else float(rng.uniform(*r[k]))

    x, y, yaw = u("x"), u("y"), u("yaw")
    along, azimuth = 0.0, float(rng.uniform(-180.0, 180.0))
    if cls is ShapeClass.LATERAL_CYLINDER:
        along = float(rng.uniform(-_W, _W))
    if isinstance(shape, EdgedPrism):
        side = int(rng.integers(4))
        azimuth = 90.0 * side
        half = (shape.width if side % 2 == 0 else shape.depth) / 2
        # keep the palm far enough from the corners that this side stays nearest
        lim = max(half - _W, 0.0)
        along = float(rng.uniform(-lim, lim))
    label = FeatureLabel(cls, x, y, yaw)
    return label, along, azimuth


# --------------------------------------------------------------------------
# samples
# --------------------------------------------------------------------------

@dataclass(eq=False)
class ContactSample:
    object_id: str
    shape_class: ShapeClass
    x: float | None
    y: float | None
    z: float
    yaw: float | None
    depth: float
    image_path: str = ""
    marker_csv_path: str = ""
    image: TactileImage | None = None
    markers: MarkerField | None = None

    @property
    def label(self) -> FeatureLabel:
        return FeatureLabel(self.shape_class, self.x, self.y, self.yaw)

    def features(self) -> np.ndarray:
        """Flattened marker displacement, the oracle feature vector."""
        if self.markers is None:
            raise ValueError(f"{self.object_id}: marker field not loaded")
        return self.markers.displacement.ravel()

    def record(self) -> dict:
        return {
            "object_id": self.object_id,
            "shape_class": ShapeClass(self.shape_class).value,
            "x_mm": self.x,
            "y_mm": self.y,
            "z_mm": self.z,
            "yaw_deg": self.yaw,
            "depth_mm": self.depth,
            "image": self.image_path,
            "markers": self.marker_csv_path,
        }

    def __eq__(self, other):
        if not isinstance(other, ContactSample):
            return NotImplemented
        same = (self.object_id, ShapeClass(self.shape_class), self.x, self.y, self.z, self.yaw, self.depth) == (
            other.object_id, ShapeClass(other.shape_class), other.x, other.y, other.z, other.yaw, other.depth)
        return same and self.image == other.image and self.markers == other.markers


def _sample_rng(seed: int, oid: str, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(oid.encode()), int(index)])


def make_sample(sim: TactileSim, shape: Shape, oid: str, seed: int, index: int,
                ranges: dict | None = None, render: bool = True, max_tries: int = 100):
    """Generate sample ``index`` of an object; returns ``(sample, rejections)``."""
    rng = _sample_rng(seed, oid, index)
    origin = Pose()
    for attempt in range(max_tries):
        label, along, azimuth = random_label(shape, rng, ranges)
        z = float(rng.uniform(*(ranges or {}).get("z", TABLE_RANGES[shape.shape_class]["z"])))
        depth = REFERENCE_DEPTH + z
        try:
            palm = configure_palm(sim, shape, origin, label, depth, along, azimuth)
            check = relative_feature_pose(shape, origin, palm, margin=0.0)
        except (NoOverlap, FeatureOutOfWorkspace):
            continue
        if not _labels_close(check, label):
            continue
        if render:
            obs = sim.observe(shape, origin, palm, depth=depth)
            markers, image = obs.markers, obs.image
        else:
            markers, image = sim.deform(shape, origin, palm, depth=depth), None
        s = ContactSample(oid, shape.shape_class, label.x, label.y, z, label.yaw, depth,
                          image=image, markers=markers)
        return s, attempt
    raise RuntimeError(f"{oid}: could not place a contact within {max_tries} tries")


def _labels_close(a: FeatureLabel, b: FeatureLabel, tol=1e-6) -> bool:
    for f in ("x", "y", "yaw"):
        va, vb = getattr(a, f), getattr(b, f)
        if (va is None) != (vb is None):
            return False
        if va is not None and abs(va - vb) > tol:
            return False
    return True


def sample_contacts(shape: Shape, n: int, ranges: dict | None = None, seed: int = 0,
                    sim: TactileSim | None = None, object_id: str | None = None,
                    render: bool = True) -> list[ContactSample]:
    """``n`` independent uniform contacts on one object at 3 +/- 1 mm depth."""
    if n < 0:
        raise ValueError("n must be >= 0")
    sim = sim or TactileSim()
    oid = object_id or make_object_id(shape)
    out, rejected = [], 0
    for i in range(n):
        s, r = make_sample(sim, shape, oid, seed, i, ranges, render)
        out.append(s)
        rejected += r
    if n:
        log.info("%s: %d samples, rejection rate %.3f", oid, n, rejected / (n + rejected))
    return out


def ks_uniformity(values, lo: float, hi: float, alpha: float = 0.01) -> tuple[float, bool]:
    """KS statistic against U(lo, hi) and whether it passes at ``alpha``."""
    res = stats.kstest(np.asarray(values, dtype=float), stats.uniform(loc=lo, scale=hi - lo).cdf)
    return float(res.statistic), bool(res.pvalue > alpha)


# --------------------------------------------------------------------------
# manifest IO
# --------------------------------------------------------------------------

@dataclass
class DatasetManifest:
    splits: dict[str, list[ContactSample]]
    seed: int = 0
    config_hash: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        check_disjoint(self.splits)

    def __eq__(self, other):
        if not isinstance(other, DatasetManifest):
            return NotImplemented
        return (self.seed, self.config_hash) == (other.seed, other.config_hash) and self.splits == other.splits

    def object_ids(self, split: str) -> list[str]:
        return list(dict.fromkeys(s.object_id for s in self.splits.get(split, [])))


def check_disjoint(splits: dict[str, list[ContactSample]]) -> None:
    _check_disjoint_ids({name: [s.object_id for s in samples] for name, samples in splits.items()})


def _check_disjoint_ids(ids: dict[str, list[str]]) -> None:
    seen: dict[str, str] = {}
    for name, oids in ids.items():
        for oid in sorted(set(oids)):
            if oid in seen:
                raise CorruptManifest(f"object {oid} appears in both {seen[oid]} and {name}")
            seen[oid] = name


def _rel_paths(split: str, oid: str, index: int) -> tuple[str, str]:
    return (f"images/{split}/{oid}/{index:05d}.pgm", f"markers/{split}/{oid}/{index:05d}.csv")


def _write_sample_files(root: Path, s: ContactSample) -> None:
    img, mk = root / s.image_path, root / s.marker_csv_path
    img.parent.mkdir(parents=True, exist_ok=True)
    mk.parent.mkdir(parents=True, exist_ok=True)
    if s.image is None or s.markers is None:
        raise ValueError(f"{s.object_id}: sample has no image or markers to write")
    s.image.save(img)
    mk.write_text(s.markers.to_csv())


def _assign_paths(split: str, samples: list[ContactSample]) -> list[ContactSample]:
    counters: dict[str, int] = {}
    out = []
    for s in samples:
        i = counters.get(s.object_id, 0)
        counters[s.object_id] = i + 1
        ip, mp = _rel_paths(split, s.object_id, i)
        out.append(replace(s, image_path=ip, marker_csv_path=mp))
    return out


def _write_index(root: Path, manifest: DatasetManifest) -> None:
    for split, samples in manifest.splits.items():
        with open(root / f"{split}.jsonl", "w") as fh:
            for s in samples:
                fh.write(json.dumps(s.record()) + "\n")
    meta = dict(manifest.meta)
    meta.update({
        "format_version": FORMAT_VERSION,
        "seed": manifest.seed,
        "config_hash": manifest.config_hash,
        "splits": {k: len(v) for k, v in manifest.splits.items()},
    })
    (root / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def write_dataset(manifest: DatasetManifest, root) -> DatasetManifest:
    """Write every sample's image and markers plus the manifests.

    Returns the manifest with file paths filled in.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    check_disjoint(manifest.splits)
    splits = {}
    for split, samples in manifest.splits.items():
        samples = _assign_paths(split, samples)
        for s in samples:
            _write_sample_files(root, s)
        splits[split] = samples
    out = DatasetManifest(splits, manifest.seed, manifest.config_hash, dict(manifest.meta))
    _write_index(root, out)
    return out


def _parse_record(rec: dict, where: str) -> ContactSample:
    if not isinstance(rec, dict) or set(rec) != set(FIELDS):
        raise CorruptManifest(f"{where}: expected fields {sorted(FIELDS)}")
    try:
        cls = ShapeClass(rec["shape_class"])
        s = ContactSample(
            rec["object_id"], cls,
            None if rec["x_mm"] is None else float(rec["x_mm"]),
            None if rec["y_mm"] is None else float(rec["y_mm"]),
            float(rec["z_mm"]),
            None if rec["yaw_deg"] is None else float(rec["yaw_deg"]),
            float(rec["depth_mm"]), rec["image"], rec["markers"],
        )
        s.label  # validity mask check
    except (ValueError, TypeError) as exc:
        raise CorruptManifest(f"{where}: {exc}") from exc
    return s


def read_dataset(root, load_images: bool = True, load_markers: bool = True,
                 splits: tuple[str, ...] | None = None) -> DatasetManifest:
    root = Path(root)
    meta_path = root / "meta.json"
    if not meta_path.exists():
        raise CorruptManifest(f"{root}: no meta.json")
    try:
        meta = json.loads(meta_path.read_text())
        seed, chash, counts = int(meta["seed"]), meta["config_hash"], meta["splits"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptManifest(f"{meta_path}: {exc}") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise CorruptManifest(f"{meta_path}: unsupported format version {meta.get('format_version')}")

    out: dict[str, list[ContactSample]] = {}
    for split in counts:
        path = root / f"{split}.jsonl"
        if not path.exists():
            raise CorruptManifest(f"missing manifest {path}")
        samples = []
        for ln, line in enumerate(path.read_text().splitlines(), 1):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptManifest(f"{path}:{ln}: {exc}") from exc
            s = _parse_record(rec, f"{path}:{ln}")
            img = root / s.image_path
            if not img.is_file():
                raise MissingImage(f"missing image {img}")
            if splits is None or split in splits:
                if load_images:
                    s.image = TactileImage.load(img)
                if load_markers:
                    mk = root / s.marker_csv_path
                    if not mk.is_file():
                        raise CorruptManifest(f"missing marker file {mk}")
                    s.markers = MarkerField.from_csv(mk.read_text())
            samples.append(s)
        if len(samples) != counts[split]:
            raise CorruptManifest(f"{path}: {len(samples)} samples, meta says {counts[split]}")
        out[split] = samples
    check_disjoint(out)
    extra = {k: v for k, v in meta.items() if k not in ("format_version", "seed", "config_hash", "splits")}
    return DatasetManifest(out, seed, chash, extra)


# --------------------------------------------------------------------------
# streaming generation
# --------------------------------------------------------------------------

def _generate_object(args):
    root, split, shape, oid, n, seed, sim, ranges = args
    samples, rejected = [], 0
    for i in range(n):
        s, r = make_sample(sim, shape, oid, seed, i, ranges)
        ip, mp = _rel_paths(split, oid, i)
        s = replace(s, image_path=ip, marker_csv_path=mp)
        _write_sample_files(Path(root), s)
        s.image = None  # already on disk; keep memory flat
        samples.append(s)
        rejected += r
    return samples, rejected


def generate_dataset(root, catalog: dict[str, list[Shape]], n_per_object: dict[str, int], seed: int = 0,
                     sim: TactileSim | None = None, config_hash: str = "", workers: int = 1,
                     ranges: dict | None = None) -> DatasetManifest:
    """Generate and write a full dataset, one object at a time.

    Images are written as they are produced and dropped from memory; the
    returned manifest keeps labels and marker fields only.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    sim = sim or TactileSim()
    jobs = []
    for split, shapes in catalog.items():
        for shape in shapes:
            jobs.append((str(root), split, shape, make_object_id(shape), n_per_object.get(split, 0), seed, sim, ranges))
    _check_disjoint_ids({split: [make_object_id(s) for s in shapes] for split, shapes in catalog.items()})

    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_generate_object, jobs))
    else:
        results = [_generate_object(j) for j in jobs]

    splits: dict[str, list[ContactSample]] = {split: [] for split in catalog}
    rejections = {}
    for job, (samples, rejected) in zip(jobs, results):
        splits[job[1]].extend(samples)
        n = len(samples)
        rejections[job[3]] = round(rejected / (n + rejected), 6) if n else 0.0
        if rejected:
            log.info("%s: rejection rate %.3f", job[3], rejections[job[3]])
    manifest = DatasetManifest(splits, seed, config_hash, {"rejection_rate": rejections})
    _write_index(root, manifest)
    return manifest

