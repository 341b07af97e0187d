"""Acceptance suite shared by ``palmgrasp --check`` and the test suite.

Each check returns a :class:`CheckResult`.  Expensive artifacts (the
calibrated thresholds, the dataset and the trained model sets) are built
once per :class:`Context` and reused by the checks that need them.
"""

from __future__ import annotations

import filecmp
import math
import sys
import tempfile
import time
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .control import (
    ABLATION_GROUPS, EdgeNotFound, EpisodeLog, Perturbation, SceneState, StrategyConfig, adjust_curved,
    detect_light_contact, explore_edges, loss_detection_depths, make_scene, pose_error, run_episode,
)
from .datasets import generate_dataset, read_dataset
from .geometry import EdgedDisk, EdgedPrism, Pose, ShapeClass, default_catalog, object_id
from .pose_models import GroundTruthEstimator, ModelSetSpec, TrainConfig, evaluate_mae, train_model_set
from .similarity import calibrate, ssim
from .tactile import TactileSim

N_TRAIN, N_TEST = 1000, 200
EXPLORE_SHAPES = (EdgedDisk(60.0, 20.0), EdgedDisk(80.0, 20.0),
                  EdgedPrism(30.0, 30.0, 20.0), EdgedPrism(50.0, 50.0, 20.0))
PULL = Perturbation(rate=0.05, total=2.0, settle_ticks=20)


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] C{self.number} {self.name}: {self.detail} ({self.seconds:.1f} s)"


class Context:
    """Lazily built shared state: simulator, thresholds, dataset, models."""

    def __init__(self, seed: int = 0, workers: int = 1, n_train: int = N_TRAIN, n_test: int = N_TEST):
        self.seed, self.workers, self.n_train, self.n_test = seed, workers, n_train, n_test
        self.sim = TactileSim()
        self.catalog = default_catalog()
        self._tmp = tempfile.TemporaryDirectory(prefix="palmgrasp-check-")
        self.root = Path(self._tmp.name)
        self.timings: dict[str, float] = {}

    @cached_property
    def thresholds(self):
        t = time.perf_counter()
        th = calibrate(self.sim, self.catalog["train"], seed=self.seed)
        self.timings["calibrate"] = time.perf_counter() - t
        return th

    @cached_property
    def dataset(self):
        t = time.perf_counter()
        generate_dataset(self.root / "dataset", self.catalog, {"train": self.n_train, "test": self.n_test},
                         seed=self.seed, sim=self.sim, workers=self.workers)
        ds = read_dataset(self.root / "dataset", load_images=False)
        self.timings["dataset"] = time.perf_counter() - t
        return ds

    def model(self, variant: str):
        key = f"model_{variant}"
        if key not in self.__dict__:
            ds = self.dataset
            t = time.perf_counter()
            self.__dict__[key] = train_model_set(ModelSetSpec(variant), ds.splits["train"], TrainConfig(),
                                                 seed=self.seed)
            self.timings[key] = time.perf_counter() - t
        return self.__dict__[key]

    def mae(self, variant: str):
        key = f"mae_{variant}"
        if key not in self.__dict__:
            t = time.perf_counter()
            self.__dict__[key] = evaluate_mae(self.model(variant), self.dataset.splits["test"])
            self.timings[key] = time.perf_counter() - t
        return self.__dict__[key]

    def close(self):
        self._tmp.cleanup()


def _shape_by_class(ctx, *classes):
    return [s for s in ctx.catalog["test"] if s.shape_class in classes]


# --------------------------------------------------------------------------
# criteria
# --------------------------------------------------------------------------

def check_ssim_kernel(ctx: Context) -> tuple[bool, str]:
    rng = np.random.default_rng(ctx.seed)
    shapes = ctx.catalog["test"]
    imgs = []
    for i in range(200):
        scene = make_scene(ctx.sim, shapes[i % len(shapes)], rng)
        scene.move(dz=-(5.0 + rng.uniform(0.5, 3.5)))  # 0.5 to 3.5 mm past first contact
        imgs.append(scene.observe().image)
    pairs = list(zip(imgs[::2], imgs[1::2]))
    ident = all(ssim(a, a) == 1.0 for a, _ in pairs)
    sym = all(ssim(a, b) == ssim(b, a) for a, b in pairs)
    t = time.perf_counter()
    for a, b in pairs:
        ssim(a, b)
    ms = (time.perf_counter() - t) / len(pairs) * 1e3
    return ident and sym and ms < 5.0, f"identity {ident}, symmetry {sym} on {len(pairs)} pairs, {ms:.2f} ms/pair"


def check_threshold_ordering(ctx: Context) -> tuple[bool, str]:
    th = ctx.thresholds
    again = calibrate(ctx.sim, ctx.catalog["train"], seed=ctx.seed)
    same = (again.contact, again.loss_of_contact) == (th.contact, th.loss_of_contact)
    ok = th.contact <= th.loss_of_contact and same
    return ok, f"contact {th.contact:.4f} <= loss {th.loss_of_contact:.4f}, deterministic {same}"


def check_detection_band(ctx: Context) -> tuple[bool, str]:
    t = time.perf_counter()
    cfg = StrategyConfig(ctx.thresholds)
    depths, limited = [], 0
    for shape in ctx.catalog["test"]:
        for i in range(20):
            scene = make_scene(ctx.sim, shape, np.random.default_rng(ctx.seed * 1000 + i))
            ev = detect_light_contact(scene, cfg)
            depths.append(ev.depth)
            limited += ev.limit
    d = np.array(depths)
    dt = time.perf_counter() - t
    pos = bool((d > 0).all())
    band = float(np.mean((d >= 2) & (d <= 4)))
    ok = pos and band >= 0.95 and 2.5 <= d.mean() <= 3.5 and dt < 120 and limited == 0
    return ok, (f"{len(d)} detections, positive {pos}, in [2,4] {band:.0%}, mean {d.mean():.3f} mm, "
                f"depth-guard stops {limited}, {dt:.1f} s")


def check_pose_estimation(ctx: Context) -> tuple[bool, str]:
    t = time.perf_counter()
    rows = ctx.mae("M3")
    dt = time.perf_counter() - t + ctx.timings.get("dataset", 0.0)
    worst_pos = max(r.mae for r in rows if r.dimension in ("x", "y"))
    yaw_rows = [r.mae for r in rows if r.dimension == "yaw"]
    worst_yaw = max(yaw_rows) if yaw_rows else 0.0
    ok = worst_pos <= 1.0 and worst_yaw <= 3.0 and dt < 600
    return ok, f"worst position MAE {worst_pos:.3f} mm, worst yaw MAE {worst_yaw:.3f} deg, {dt:.0f} s with data"


def check_aliasing(ctx: Context) -> tuple[bool, str]:
    m2 = {r.object_id: r for r in ctx.mae("M2") if r.dimension == "yaw"}
    m3 = {r.object_id: r for r in ctx.mae("M3") if r.dimension == "yaw"}
    ok, parts = True, []
    for shape in _shape_by_class(ctx, ShapeClass.LATERAL_CYLINDER, ShapeClass.EDGED_FLAT):
        oid = object_id(shape)
        a, b = m2[oid], m3[oid]
        good = (b.extreme_band_mae < a.extreme_band_mae and a.extreme_band_mae >= 2 * a.mid_band_mae)
        ok &= good
        parts.append(f"{oid} M2 {a.extreme_band_mae:.1f}/{a.mid_band_mae:.1f} M3 {b.extreme_band_mae:.1f}")
    return ok, "; ".join(parts)


def exploration_grid(shape, step: float = 5.0):
    """Start offsets on a grid, strictly inside the top face."""
    half = (shape.diameter if isinstance(shape, EdgedDisk) else shape.width) / 2
    g = np.arange(-half + step, half, step)
    for x in g:
        for y in g:
            inside = math.hypot(x, y) < half if isinstance(shape, EdgedDisk) else max(abs(x), abs(y)) < half
            if inside:
                yield float(x), float(y)


def explore_from(sim, shape, x, y, cfg, estimator):
    scene = SceneState(sim, shape, Pose(), Pose(x, y, 0.0, 0.0))
    scene.palm = Pose(x, y, scene._overlap0() + 5.0, 0.0)
    scene.start = scene.palm
    log = EpisodeLog()
    detect_light_contact(scene, cfg, log)
    state = explore_edges(scene, estimator, cfg, log)
    return scene, state, log


def check_exploration(ctx: Context) -> tuple[bool, str]:
    cfg = StrategyConfig(ctx.thresholds)
    gt = GroundTruthEstimator("M3")
    n, worst_w, worst_c, identity, failures = 0, 0.0, 0.0, True, 0
    for shape in EXPLORE_SHAPES:
        true_w = shape.diameter if isinstance(shape, EdgedDisk) else shape.width
        for x, y in exploration_grid(shape):
            try:
                scene, st, log = explore_from(ctx.sim, shape, x, y, cfg, gt)
            except (EdgeNotFound, RuntimeError, ValueError):
                failures += 1
                continue
            n += 1
            worst_w = max(worst_w, abs(st.width - true_w))
            worst_c = max(worst_c, pose_error(scene)[0])
            for e in log.of_kind("stage_transition"):
                if e.get("stage") == "second_edge":
                    identity &= e["width"] - e["d1"] - 24 * e["steps"] - e["d2"] == 0
    ok = failures == 0 and worst_w <= 1e-6 and worst_c <= 1e-6 and identity
    return ok, (f"{n} starts, {failures} failed, worst width error {worst_w:.2e} mm, "
                f"worst centring {worst_c:.2e} mm, width identity {identity}")


def check_curved_convergence(ctx: Context) -> tuple[bool, str]:
    cfg = StrategyConfig(ctx.thresholds)
    model = ctx.model("M3")
    shapes = _shape_by_class(ctx, ShapeClass.HEMISPHERE, ShapeClass.ELLIPSOID)
    good, worst = 0, (0.0, 0.0)
    for i in range(30):
        scene = make_scene(ctx.sim, shapes[i % len(shapes)], np.random.default_rng(ctx.seed * 1000 + 100 + i))
        try:
            detect_light_contact(scene, cfg)
            n = adjust_curved(scene, model, cfg)
        except RuntimeError:
            continue
        e = pose_error(scene)
        worst = (max(worst[0], e[0]), max(worst[1], e[1]))
        good += n <= 2 and e[0] < 0.5 and e[1] < 1.0
    return good >= 27, f"{good}/30 converged within 2 adjustments; worst {worst[0]:.3f} mm, {worst[1]:.3f} deg"


def check_loss_of_contact(ctx: Context) -> tuple[bool, str]:
    cfg = StrategyConfig(ctx.thresholds)
    model = ctx.model("M3")
    shapes = ctx.catalog["test"]
    fired, restored, lost, depths = 0, 0, 0, []
    for i in range(30):
        seed = ctx.seed * 1000 + 200 + i
        scene = make_scene(ctx.sim, shapes[i % len(shapes)], np.random.default_rng(seed))
        log = run_episode(scene, model, cfg, PULL, seed=seed)
        d = loss_detection_depths(log)
        lost += log.outcome == "ObjectLost"
        fired += bool(d) and all(x > 0 for x in d)
        depths += d
        ev = [e["stage"] for e in log.of_kind("stage_transition")]
        last = max((k for k, s in enumerate(ev) if s == "loss_of_contact"), default=None)
        restored += last is not None and "contact_restored" in ev[last:] and log.outcome == "held"
    ok = fired == 30 and restored == 30 and lost == 0
    dmin = min(depths) if depths else math.nan
    return ok, f"fired {fired}/30, restored {restored}/30, ObjectLost {lost}, min detection depth {dmin:.3f} mm"


def ablation_means(ctx: Context, n: int = 30) -> dict[str, float]:
    base = StrategyConfig(ctx.thresholds)
    model = ctx.model("M3")
    shapes = ctx.catalog["test"]
    out = {}
    for group, flags in ABLATION_GROUPS.items():
        cfg = base.with_stages(*flags)
        errs = []
        for i in range(n):
            seed = ctx.seed * 1000 + 500 + i
            rng = np.random.default_rng(seed)
            scene = make_scene(ctx.sim, shapes[i % len(shapes)], rng)
            errs.append(run_episode(scene, model, cfg, PULL, seed=seed, group=group, rng=rng).final_err_mm)
        out[group] = float(np.mean(errs))
    return out


def check_ablation(ctx: Context) -> tuple[bool, str]:
    means = ablation_means(ctx)
    v = list(means.values())
    ok = all(a > b for a, b in zip(v, v[1:]))
    return ok, ", ".join(f"{g} {m:.3f}" for g, m in means.items()) + " mm"


DETERMINISM_CONFIG = """\
# reduced pipeline used by the determinism check
n_train = 20
n_test = 10
n_contacts = 5
n_trials = 5
n_episodes = 2
"""


def check_determinism(ctx: Context) -> tuple[bool, str]:
    from .runner import load_config, run_all

    cfg_path = ctx.root / "determinism.cfg"
    cfg_path.write_text(DETERMINISM_CONFIG)
    cfg = load_config(cfg_path, seed=0)
    a, b = ctx.root / "det_a", ctx.root / "det_b"
    run_all(cfg, a, ctx.workers)
    run_all(cfg, b, ctx.workers)
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    other = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    diff = [str(p) for p in files if not filecmp.cmp(a / p, b / p, shallow=False)] if files == other else ["<file set>"]
    return not diff, f"{len(files)} files compared, {len(diff)} differ" + (f": {diff[:3]}" if diff else "")


CHECKS = [
    (1, "SSIM kernel", check_ssim_kernel),
    (2, "threshold ordering", check_threshold_ordering),
    (3, "contact detection band", check_detection_band),
    (4, "pose estimation MAE", check_pose_estimation),
    (5, "yaw aliasing", check_aliasing),
    (6, "edge exploration exactness", check_exploration),
    (7, "curved adjustment convergence", check_curved_convergence),
    (8, "loss-of-contact correction", check_loss_of_contact),
    (9, "ablation ordering", check_ablation),
    (10, "determinism", check_determinism),
]


def run_check(number: int, ctx: Context) -> CheckResult:
    _, name, fn = CHECKS[number - 1]
    t = time.perf_counter()
    try:
        ok, detail = fn(ctx)
    except Exception as exc:  # a crash is a failed criterion, not a crashed suite
        ok, detail = False, f"error: {exc!r}"
    return CheckResult(number, name, bool(ok), detail, time.perf_counter() - t)


def run_checks(numbers=None, workers: int = 1, stream=sys.stdout) -> list[CheckResult]:
    ctx = Context(workers=workers)
    results = []
    try:
        for number, _, _ in CHECKS:
            if numbers is None or number in numbers:
                r = run_check(number, ctx)
                results.append(r)
                if stream is not None:
                    print(r.line(), file=stream, flush=True)
    finally:
        ctx.close()
    return results
