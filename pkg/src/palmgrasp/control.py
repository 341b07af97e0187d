"""Closed-loop grasping strategy on a simulated 4-DOF arm.

An episode runs light-contact detection, then either curved-surface pose
adjustment or edge exploration and centring, then grasp, lift and a hold
phase with loss-of-contact correction.  Stages can be switched off to form
the ablation groups.  The scene is purely geometric: the arm moves the palm
in x, y, z and yaw, and finger pressure is modelled as extra pressing depth.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .datasets import random_label
from .geometry import (
    WORKSPACE_HALF_WIDTH, EdgedDisk, EdgedPrism, Pose, Shape, ShapeClass, _overlap_at_zero,
    fold_deg, palm_pose_for_label, relative_feature_pose, rot2, wrap_deg,
)
from .similarity import Thresholds, ssim
from .tactile import MarkerField, Observation, TactileSim

LOG_SCHEMA = "palmgrasp.episode"
LOG_VERSION = 1
GRASP_DEPTH = 3.0  # target pressing depth used for the final error
SUMMARY_FIELDS = ("seed", "group", "outcome", "final_err_mm", "final_err_deg", "n_adjustments",
                  "detection_depth_mm")


class ControlError(RuntimeError):
    outcome = "error"


class NoContact(ControlError):
    outcome = "NoContact"


class AdjustDiverged(ControlError):
    outcome = "AdjustDiverged"


class EdgeNotFound(ControlError):
    outcome = "EdgeNotFound"


class WorkspaceExceeded(ControlError):
    outcome = "WorkspaceExceeded"


class ObjectLost(ControlError):
    outcome = "ObjectLost"


def normalize_yaw(yaw: float) -> float:
    """arctan(tan yaw) in degrees, on (-90, 90]; the gripper is 180-degree symmetric."""
    if not math.isfinite(yaw):
        raise ValueError("yaw must be finite")
    return fold_deg(yaw)


# --------------------------------------------------------------------------
# configuration and state
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StrategyConfig:
    thresholds: Thresholds
    descent_step: float = 0.1
    tap_lift: float = 8.0
    tap_stride: float = 24.0
    curved_tol_pos: float = 0.5
    curved_tol_yaw: float = 1.0
    max_adjust_iters: int = 5
    contact_detect: bool = True
    pose_adjust: bool = True
    loss_detect: bool = True
    pressure_step: float = 0.1
    pressure_gain: float = 1.0  # mm of extra depth per unit pressure
    max_travel: float = 60.0
    max_taps: int = 8
    workspace_radius: float = 150.0  # palm travel limit around its start, mm
    tap_direction: float = 0.0  # palm-frame degrees; 0 taps along +X
    lift_height: float = 20.0
    start_clearance: float = 5.0
    baseline_depth: tuple[float, float] = (-5.0, 5.0)
    capture_radius: float = WORKSPACE_HALF_WIDTH

    def __post_init__(self):
        if self.tap_stride != 2 * WORKSPACE_HALF_WIDTH:
            raise ValueError(f"tap_stride must be {2 * WORKSPACE_HALF_WIDTH:g} mm")
        for name in ("descent_step", "curved_tol_pos", "curved_tol_yaw", "max_travel", "tap_lift"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_adjust_iters < 0 or self.max_taps < 1:
            raise ValueError("iteration limits must be non-negative")

    @property
    def stages(self) -> dict[str, bool]:
        return {"contact_detect": self.contact_detect, "pose_adjust": self.pose_adjust,
                "loss_detect": self.loss_detect}

    def with_stages(self, contact_detect: bool, pose_adjust: bool, loss_detect: bool) -> "StrategyConfig":
        return replace(self, contact_detect=contact_detect, pose_adjust=pose_adjust, loss_detect=loss_detect)


ABLATION_GROUPS = {
    "baseline": (False, False, False),
    "+contact": (True, False, False),
    "+adjust": (True, True, False),
    "+loss": (True, True, True),
}


@dataclass(frozen=True)
class Perturbation:
    """Scripted downward pull on the held object: ``rate`` mm per tick up to ``total``."""

    rate: float = 0.05
    total: float = 2.0
    settle_ticks: int = 20

    @property
    def n_ticks(self) -> int:
        return (int(math.ceil(self.total / self.rate)) if self.rate > 0 else 0) + self.settle_ticks


def _dyadic(v: float) -> float:
    # snap to a 2**-30 mm grid: sums of such values are exact, so the width
    # identity below holds to the bit
    return math.ldexp(round(math.ldexp(float(v), 30)), -30)


@dataclass
class EdgeExplorationState:
    d1: float = math.nan
    steps: int = 0
    d2: float = math.nan
    width: float = math.nan
    delta_d: float = math.nan

    def finish(self, d2: float) -> "EdgeExplorationState":
        self.d1, self.d2 = _dyadic(self.d1), _dyadic(d2)
        self.width = self.d1 + 24.0 * self.steps + self.d2
        # move back along the exploration direction to the midpoint
        self.delta_d = self.d2 - self.width / 2
        return self


@dataclass
class ContactEvent:
    depth: float
    ssim: float
    travel: float
    limit: bool = False  # stopped by the indentation guard rather than SSIM


class EpisodeLog:
    """Ordered event record; ``seq`` is the only clock."""

    def __init__(self, seed: int = 0, group: str = ""):
        self.seed, self.group = seed, group
        self.events: list[dict] = []
        self.outcome = ""
        self.final_err_mm = math.nan
        self.final_err_deg = math.nan
        self.n_adjustments = 0
        self.detection_depth_mm = math.nan
        self.edge: EdgeExplorationState | None = None

    def add(self, kind: str, **data) -> int:
        seq = len(self.events)
        self.events.append({"seq": seq, "kind": kind, **data})
        return seq

    def of_kind(self, kind: str) -> list[dict]:
        return [e for e in self.events if e["kind"] == kind]

    def summary(self) -> dict:
        return {"seed": self.seed, "group": self.group, "outcome": self.outcome,
                "final_err_mm": self.final_err_mm, "final_err_deg": self.final_err_deg,
                "n_adjustments": self.n_adjustments, "detection_depth_mm": self.detection_depth_mm}

    def to_jsonl(self) -> str:
        summ = {k: _clean(v) if isinstance(v, float) else v for k, v in self.summary().items()}
        head = {"schema": LOG_SCHEMA, "version": LOG_VERSION, **summ}
        lines = [json.dumps(head, sort_keys=True, default=_json_default)]
        lines += [json.dumps(e, sort_keys=True, default=_json_default) for e in self.events]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeLog":
        rows = [json.loads(l) for l in text.splitlines() if l.strip()]
        head = rows[0]
        if head.get("schema") != LOG_SCHEMA or head.get("version") != LOG_VERSION:
            raise ValueError("unsupported episode log schema")
        log = cls(head["seed"], head["group"])
        log.events = rows[1:]
        log.outcome = head["outcome"]
        for k in ("final_err_mm", "final_err_deg", "detection_depth_mm"):
            setattr(log, k, math.nan if head[k] is None else float(head[k]))
        log.n_adjustments = int(head["n_adjustments"])
        return log


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(type(v))


def _clean(v: float) -> float | None:
    return None if v is None or not math.isfinite(v) else float(v)


@dataclass
class SceneState:
    """Object, palm and finger state of one episode.

    ``shape`` may be None for an empty workspace.  The contact depth is
    linear in palm height, so the overlap at z = 0 is cached per lateral
    palm pose.
    """

    sim: TactileSim
    shape: Shape | None
    object_pose: Pose
    palm: Pose
    pressure: float = 0.0
    held: bool = False
    pull: float = 0.0  # downward displacement of the held object, mm
    reference: object = None
    start: Pose | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.start is None:
            self.start = self.palm

    def _overlap0(self) -> float:
        if self.shape is None:
            return -math.inf
        o, p = self.object_pose, self.palm
        key = (p.x - o.x, p.y - o.y, p.yaw, o.yaw)
        if key not in self._cache:
            flat = Pose(key[0], key[1], 0.0, p.yaw)
            self._cache[key] = _overlap_at_zero(self.shape, Pose(0.0, 0.0, 0.0, o.yaw), self.sim.geom, flat)
        return self._cache[key]

    @property
    def depth(self) -> float:
        return self._overlap0() + self.object_pose.z - self.palm.z

    def label(self):
        if self.shape is None:
            return None
        return relative_feature_pose(self.shape, self.object_pose, self.palm)

    def observe(self) -> Observation:
        d = self.depth
        if d <= 0 or self.shape is None:
            rest = self.sim.rest
            return Observation(d, MarkerField(rest.positions, np.zeros_like(rest.positions)),
                               self.sim.rest_image, self.label())
        return self.sim.observe(self.shape, self.object_pose, self.palm, depth=d, label=self.label())

    def capture_reference(self) -> None:
        self.reference = self.observe().image

    def move(self, dx=0.0, dy=0.0, dz=0.0, dyaw=0.0) -> None:
        self.palm = self.palm.moved(dx, dy, dz, dyaw)
        if self.held:
            self.object_pose = self.object_pose.moved(dx, dy, dz, 0.0)

    def move_palm_frame(self, dx: float, dy: float) -> tuple[float, float]:
        w = rot2(self.palm.yaw) @ np.array([dx, dy])
        self.move(float(w[0]), float(w[1]))
        return float(w[0]), float(w[1])


def make_scene(sim: TactileSim, shape: Shape | None, rng: np.random.Generator,
               clearance: float = 5.0, label=None, along: float | None = None,
               azimuth: float | None = None, object_yaw: float | None = None) -> SceneState:
    """Place the object at the origin and the palm ``clearance`` mm above first contact.

    The lateral start is a random in-workspace feature pose; edged objects
    start with the palm centre over the top face.
    """
    yaw_obj = float(rng.uniform(-180, 180)) if object_yaw is None else object_yaw
    obj = Pose(0.0, 0.0, 0.0, yaw_obj)
    if shape is None:
        palm = Pose(0.0, 0.0, 50.0, 0.0)
        return SceneState(sim, None, obj, palm)
    if label is None:
        ranges = {"x": (0.0, WORKSPACE_HALF_WIDTH)} if shape.shape_class is ShapeClass.EDGED_FLAT else None
        label, a, az = random_label(shape, rng, ranges)
        along = a if along is None else along
        azimuth = az if azimuth is None else azimuth
    palm = palm_pose_for_label(shape, label, obj, 0.0, along or 0.0, azimuth or 0.0)
    scene = SceneState(sim, shape, obj, palm)
    scene.palm = Pose(palm.x, palm.y, scene._overlap0() + clearance, palm.yaw)
    scene.start = scene.palm
    return scene


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------

def detect_light_contact(scene: SceneState, cfg: StrategyConfig, log: EpisodeLog | None = None) -> ContactEvent:
    """Descend in fixed steps until SSIM against the reference drops to the contact threshold.

    A guard also stops the descent once the skin is pressed to its working
    depth (``max_depth``).  That happens on wide flat faces and for edges
    seen near the rim of the skin, where SSIM falls slowly; such events carry
    ``limit=True``.
    """
    log = log if log is not None else EpisodeLog()
    if scene.reference is None:
        scene.capture_reference()
    n_max = int(round(cfg.max_travel / cfg.descent_step))
    limit = scene.sim.geom.max_depth
    for i in range(n_max + 1):
        obs = scene.observe()
        s = ssim(obs.image, scene.reference)
        guard = obs.depth >= limit - 1e-9
        if s <= cfg.thresholds.contact or guard:
            log.add("motion", dz=-i * cfg.descent_step, stage="contact_detect")
            seq = log.add("ssim_reading", ssim=s, depth=_clean(obs.depth), stage="contact_detect")
            log.add("stage_transition", stage="depth_limit" if guard and s > cfg.thresholds.contact else "contact",
                    reading=seq)
            return ContactEvent(obs.depth, s, i * cfg.descent_step, guard and s > cfg.thresholds.contact)
        if i < n_max:
            scene.move(dz=-cfg.descent_step)
    log.add("motion", dz=-n_max * cfg.descent_step, stage="contact_detect")
    raise NoContact(f"no contact after {cfg.max_travel:g} mm of travel")


def _recontact(scene, cfg, log) -> ContactEvent:
    # the descent after a lift is the threshold descent itself, so a
    # higher surface under the new position cannot be over-pressed
    return detect_light_contact(scene, cfg, log)


def _lift(scene, cfg, log, stage):
    scene.move(dz=cfg.tap_lift)
    log.add("motion", dz=cfg.tap_lift, stage=stage)


def _pred_dict(est) -> dict:
    return {"cls": est.shape_class, "x": est.x, "y": est.y, "yaw": est.yaw, "flat": est.flat_surface}


def adjust_curved(scene: SceneState, model_set, cfg: StrategyConfig, log: EpisodeLog | None = None) -> int:
    """Repeat predict, lift, rotate, translate and re-contact until the
    predicted offsets are inside the tolerances.  Returns the number of
    corrective moves."""
    log = log if log is not None else EpisodeLog()
    n = 0
    while True:
        est = model_set.predict(scene.observe())
        seq = log.add("prediction", stage="pose_adjust", iteration=n, **_pred_dict(est))
        x, y, yaw = est.x or 0.0, est.y or 0.0, est.yaw or 0.0
        if abs(x) < cfg.curved_tol_pos and abs(y) < cfg.curved_tol_pos and abs(normalize_yaw(yaw)) < cfg.curved_tol_yaw:
            log.add("stage_transition", stage="aligned", reading=seq)
            return n
        if n >= cfg.max_adjust_iters:
            raise AdjustDiverged(f"still off by ({x:.2f}, {y:.2f}, {yaw:.2f}) after {n} adjustments")
        _lift(scene, cfg, log, "pose_adjust")
        ny = normalize_yaw(yaw)
        # a 180-degree flip of the commanded rotation mirrors the offsets
        sign = 1.0 if abs(wrap_deg(ny - yaw)) < 90 else -1.0
        scene.move(dyaw=-ny)
        cmd = (-sign * x, -sign * y)
        wx, wy = scene.move_palm_frame(*cmd)
        log.add("motion", stage="pose_adjust", iteration=n, rotate=-ny, translate=list(cmd),
                predicted=[x, y], sign=sign, world=[wx, wy])
        n += 1
        _recontact(scene, cfg, log)


def _check_workspace(scene, cfg):
    if math.hypot(scene.palm.x - scene.start.x, scene.palm.y - scene.start.y) > cfg.workspace_radius:
        raise WorkspaceExceeded("palm left the arm workspace")


def _tap(scene, cfg, log, direction_deg: float) -> ContactEvent:
    """Up, across one stride along a palm-frame direction, then back down to contact."""
    _lift(scene, cfg, log, "explore")
    t = math.radians(direction_deg)
    d = (cfg.tap_stride * math.cos(t), cfg.tap_stride * math.sin(t))
    scene.move_palm_frame(*d)
    log.add("motion", stage="explore", translate=list(d))
    _check_workspace(scene, cfg)
    return _recontact(scene, cfg, log)


def explore_edges(scene: SceneState, model_set, cfg: StrategyConfig, log: EpisodeLog | None = None,
                  tap_direction: float | None = None) -> EdgeExplorationState:
    """Find two opposite edges by tapping, then centre the palm between them.

    The fingers end up closing across the measured width.
    """
    log = log if log is not None else EpisodeLog()
    state = EdgeExplorationState()
    direction = cfg.tap_direction if tap_direction is None else tap_direction
    taps = 0

    # first edge
    while True:
        est = model_set.predict(scene.observe())
        seq = log.add("prediction", stage="explore", **_pred_dict(est))
        if est.is_edge and not est.flat_surface:
            break
        if taps >= cfg.max_taps:
            raise EdgeNotFound(f"no edge after {taps} taps")
        log.add("stage_transition", stage="tap", reading=seq)
        _tap(scene, cfg, log, direction)
        taps += 1
    state.d1 = _dyadic(est.x)
    yaw1 = float(est.yaw)
    rot = normalize_yaw(yaw1)
    # after the rotation the outward normal lies along +X (s = 1) or -X (s = -1)
    s = 1.0 if abs(wrap_deg(yaw1 - rot)) < 90 else -1.0
    log.add("stage_transition", stage="first_edge", reading=seq, d1=state.d1)
    _lift(scene, cfg, log, "explore")
    scene.move(dyaw=rot)
    log.add("motion", stage="explore", rotate=rot)
    _recontact(scene, cfg, log)
    across = 180.0 if s > 0 else 0.0  # palm-frame direction of -n_out

    # second edge
    u = np.array([math.cos(math.radians(across)), math.sin(math.radians(across))])
    while True:
        if taps >= cfg.max_taps:
            raise EdgeNotFound(f"second edge not found after {taps} taps")
        _tap(scene, cfg, log, across)
        taps += 1
        state.steps += 1
        est = model_set.predict(scene.observe())
        seq = log.add("prediction", stage="explore", **_pred_dict(est))
        if est.is_edge and not est.flat_surface:
            t = math.radians(est.yaw)
            # only an edge facing the sweep counts; side edges at prism corners do not
            if math.cos(t) * u[0] + math.sin(t) * u[1] > 0.5:
                break
    state.finish(float(est.x))
    log.add("stage_transition", stage="second_edge", reading=seq, d1=state.d1, steps=state.steps,
            d2=state.d2, width=state.width, delta_d=state.delta_d)

    # centre, then turn so the fingers close across the width
    _lift(scene, cfg, log, "centre")
    cmd = (state.delta_d * u[0], state.delta_d * u[1])
    scene.move_palm_frame(*cmd)
    scene.move(dyaw=90.0)
    log.add("motion", stage="centre", translate=list(cmd), rotate=90.0)
    _recontact(scene, cfg, log)
    log.edge = state
    return state


def hold_with_loss_correction(scene: SceneState, cfg: StrategyConfig, perturbation: Perturbation | None,
                              log: EpisodeLog | None = None) -> list[dict]:
    """Tick through the hold; pressure is raised whenever SSIM exceeds the loss threshold.

    Returns the corrections made, each with the depth at which loss of
    contact was detected.
    """
    log = log if log is not None else EpisodeLog()
    pert = perturbation or Perturbation(rate=0.0, total=0.0, settle_ticks=0)
    corrections = []
    pulled = 0.0
    correcting = False
    for tick in range(pert.n_ticks):
        step = min(pert.rate, pert.total - pulled)
        if step > 0:
            pulled += step
            scene.object_pose = scene.object_pose.moved(dz=-step)
            scene.pull += step
        d = scene.depth
        if d <= 0:
            scene.held = False
            log.add("outcome", tick=tick, depth=_clean(d), result="ObjectLost")
            raise ObjectLost(f"contact lost at tick {tick}")
        if not cfg.loss_detect:
            continue
        s = ssim(scene.observe().image, scene.reference)
        if s > cfg.thresholds.loss_of_contact:
            seq = log.add("ssim_reading", tick=tick, ssim=s, depth=d, stage="hold")
            if not correcting:
                corrections.append({"tick": tick, "detection_depth": d})
                log.add("stage_transition", stage="loss_of_contact", reading=seq)
            correcting = True
            scene.pressure += cfg.pressure_step
            gain = cfg.pressure_step * cfg.pressure_gain
            scene.object_pose = scene.object_pose.moved(dz=gain)
            log.add("pressure_change", tick=tick, pressure=scene.pressure, depth_gain=gain)
        elif correcting:
            correcting = False
            log.add("stage_transition", stage="contact_restored", tick=tick, ssim=s)
    return corrections


# --------------------------------------------------------------------------
# episode
# --------------------------------------------------------------------------

def pose_error(scene: SceneState) -> tuple[float, float]:
    """Planar (mm) and angular (deg) error between the palm and the feature centre."""
    shape, obj, palm = scene.shape, scene.object_pose, scene.palm
    q = obj.to_local(np.array([palm.x, palm.y, 0.0]))[:2]
    rel = palm.yaw - obj.yaw
    cls = shape.shape_class
    if cls is ShapeClass.LATERAL_CYLINDER:
        return abs(float(q[1])), abs(fold_deg(rel))
    if cls is ShapeClass.ELLIPSOID:
        return float(np.hypot(*q)), abs(fold_deg(rel))
    if isinstance(shape, EdgedPrism):
        closing = rot2(rel) @ np.array([0.0, 1.0])
        return abs(float(q @ closing)), abs(float(np.mod(rel + 45.0, 90.0) - 45.0))
    return float(np.hypot(*q)), 0.0


def _finish(scene, cfg, log):
    lateral, ang = pose_error(scene)
    vertical = scene.depth - GRASP_DEPTH if scene.held else cfg.lift_height
    log.final_err_mm = float(math.hypot(lateral, vertical))
    log.final_err_deg = float(ang)


def run_episode(scene: SceneState, model_set, cfg: StrategyConfig, perturbation: Perturbation | None = None,
                seed: int = 0, group: str = "", rng: np.random.Generator | None = None,
                tap_direction: float | None = None) -> EpisodeLog:
    """Run the enabled stages in order; errors end the episode and become its outcome."""
    log = EpisodeLog(seed, group)
    rng = rng if rng is not None else np.random.default_rng(seed)
    scene.capture_reference()
    log.add("stage_transition", stage="start", stages=cfg.stages,
            palm=[scene.palm.x, scene.palm.y, scene.palm.z, scene.palm.yaw])
    try:
        if cfg.contact_detect or cfg.pose_adjust:
            ev = detect_light_contact(scene, cfg, log)
            log.detection_depth_mm = ev.depth
        else:
            if scene.shape is None:
                raise NoContact("empty workspace")
            d = float(rng.uniform(*cfg.baseline_depth))
            dz = scene.depth - d
            scene.move(dz=dz)
            log.add("motion", stage="baseline", dz=dz, depth=d)
        if cfg.pose_adjust:
            est = model_set.predict(scene.observe())
            seq = log.add("prediction", stage="classify", **_pred_dict(est))
            if est.is_edge:
                log.add("stage_transition", stage="explore", reading=seq)
                explore_edges(scene, model_set, cfg, log, tap_direction)
            else:
                log.add("stage_transition", stage="pose_adjust", reading=seq)
                log.n_adjustments = adjust_curved(scene, model_set, cfg, log)
            log.detection_depth_mm = scene.depth
        lateral, _ = pose_error(scene)
        scene.held = scene.depth > 0 and lateral <= cfg.capture_radius
        log.add("grasp", depth=_clean(scene.depth), held=scene.held, pressure=scene.pressure)
        if not scene.held:
            log.outcome = "missed"
            _finish(scene, cfg, log)
            log.add("outcome", result=log.outcome)
            return log
        scene.move(dz=cfg.lift_height)
        log.add("lift", dz=cfg.lift_height)
        corr = hold_with_loss_correction(scene, cfg, perturbation, log)
        log.add("hold", n_corrections=len(corr),
                detection_depths=[c["detection_depth"] for c in corr])
        log.outcome = "held"
        log.add("outcome", result="held", depth=scene.depth)
    except ControlError as e:
        log.outcome = e.outcome
        log.add("outcome", result=e.outcome, message=str(e))
    if scene.shape is not None:
        _finish(scene, cfg, log)
    return log


def loss_detection_depths(log: EpisodeLog) -> list[float]:
    out = []
    for e in log.of_kind("hold"):
        out.extend(e["detection_depths"])
    return out


def summary_csv(logs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for log in logs:
        row = log.summary()
        w.writerow([_fmt(row[k]) for k in SUMMARY_FIELDS])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return "" if not math.isfinite(v) else f"{v:.6f}"
    return str(v)
