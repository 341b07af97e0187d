"""Structural similarity and the SSIM threshold calibrations.

The SSIM kernel follows the usual Gaussian-window formulation (11x11
window, sigma 1.5, K1 = 0.01, K2 = 0.03 on an 8-bit range) with the
window border cropped before averaging.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import cv2
import numpy as np

from .geometry import Pose, Shape, ShapeClass
from .tactile import TactileImage, TactileSim


_BELOW_ONE = math.nextafter(1.0, 0.0)


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0

    def __post_init__(self):
        if self.window % 2 != 1 or self.window < 3:
            raise ValueError("SSIM window must be odd and >= 3")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("stabiliser constants must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


def _pixels(img) -> np.ndarray:
    return np.asarray(img.pixels if isinstance(img, TactileImage) else img)


def _kernel(cfg: SsimConfig) -> np.ndarray:
    r = cfg.window // 2
    w = np.exp(-0.5 * (np.arange(-r, r + 1) / cfg.sigma) ** 2)
    return (w / w.sum()).astype(np.float32)[:, None]


def ssim_map(a, b, cfg: SsimConfig = SsimConfig()) -> np.ndarray:
    """Per-window SSIM with the window-radius border cropped.

    Local statistics are Gaussian-weighted population moments; the blur is
    OpenCV's separable filter in float32, which keeps a 240x240 pair well
    under 5 ms.
    """
    x, y = _pixels(a), _pixels(b)
    if x.shape != y.shape:
        raise DimensionMismatch(f"image shapes differ: {x.shape} vs {y.shape}")
    x, y = x.astype(np.float32), y.astype(np.float32)
    k = _kernel(cfg)
    r = cfg.window // 2

    def blur(im):
        return cv2.sepFilter2D(im, -1, k, k, borderType=cv2.BORDER_REFLECT)[r:-r, r:-r]

    mx, my = blur(x), blur(y)
    sq, xy = blur(x * x + y * y), blur(x * y)
    mxy = mx * my
    m2 = mx * mx + my * my
    num = (2 * mxy + cfg.c1) * (2 * (xy - mxy) + cfg.c2)
    den = (m2 + cfg.c1) * (sq - m2 + cfg.c2)
    return num / den


def ssim(a, b, cfg: SsimConfig = SsimConfig()) -> float:
    """Mean SSIM of two equally sized 8-bit images, clamped to [0, 1]."""
    x, y = _pixels(a), _pixels(b)
    if x.shape != y.shape:
        raise DimensionMismatch(f"image shapes differ: {x.shape} vs {y.shape}")
    if np.array_equal(x, y):
        return 1.0
    m = float(np.mean(ssim_map(x, y, cfg), dtype=np.float64))
    # 1.0 is reserved for identical images
    return min(max(m, 0.0), _BELOW_ONE)


@dataclass(frozen=True)
class Thresholds:
    contact: float
    loss_of_contact: float
    config_hash: str = ""

    def __post_init__(self):
        if not (0 < self.contact <= self.loss_of_contact < 1):
            raise ValueError(f"threshold ordering violated: {self.contact} / {self.loss_of_contact}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Thresholds":
        d = json.loads(text)
        return cls(float(d["contact"]), float(d["loss_of_contact"]), d.get("config_hash", ""))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Thresholds":
        return cls.from_json(Path(path).read_text())


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _contact_ssims(sim: TactileSim, shape: Shape, n: int, depth: float, rng, cfg) -> list[float]:
    from .datasets import random_label, configure_palm

    out = []
    origin = Pose()
    for _ in range(n):
        label, along, azimuth = random_label(shape, rng)
        palm = configure_palm(sim, shape, origin, label, depth, along, azimuth)
        obs = sim.observe(shape, origin, palm, depth=depth)
        out.append(ssim(obs.image, sim.rest_image, cfg))
    return out


def calibrate_contact_threshold(
    sim: TactileSim, training_shapes, n_contacts: int = 50, depth: float = 3.0, seed: int = 0,
    cfg: SsimConfig = SsimConfig(), return_raw: bool = False,
):
    """Mean SSIM of random in-workspace contacts at ``depth``, rounded to 0.1."""
    if n_contacts < 1:
        raise ValueError("n_contacts must be >= 1")
    if not (0 < depth <= sim.geom.max_depth) and depth != 0:
        raise ValueError("depth must lie in (0, max_depth]")
    rng = np.random.default_rng(seed)
    vals = []
    for shape in training_shapes:
        vals.extend(_contact_ssims(sim, shape, n_contacts, depth, rng, cfg))
    mean = float(np.mean(vals))
    value = round(mean, 1)
    return (value, mean) if return_raw else value


def aligned_palm(shape: Shape, object_pose: Pose, depth: float, sim: TactileSim,
                 dx=0.0, dy=0.0, dyaw=0.0) -> Pose:
    """Palm centred on the feature (grasp pose), optionally with a residual error."""
    from .datasets import set_depth

    yaw = object_pose.yaw + dyaw
    if shape.shape_class is ShapeClass.EDGED_FLAT:
        yaw += 90.0  # finger axis across the object
    p = object_pose.to_world(np.array([dx, dy, 0.0]))
    palm = Pose(p[0], p[1], 0.0, yaw)
    return set_depth(sim, shape, object_pose, palm, depth)


def calibrate_loss_threshold(
    sim: TactileSim, training_shapes, n_trials: int = 100, depth: float = 3.0, seed: int = 0,
    cfg: SsimConfig = SsimConfig(), tol_pos: float = 0.5, tol_yaw: float = 1.0,
) -> float:
    """Mean SSIM after pose adjustment, measured at grasp depth (unrounded).

    Each trial leaves the palm on the feature with a residual pose error drawn
    inside the adjustment tolerances.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = np.random.default_rng(seed)
    vals = []
    origin = Pose()
    for shape in training_shapes:
        for _ in range(n_trials):
            dx, dy = rng.uniform(-tol_pos, tol_pos, 2)
            dyaw = rng.uniform(-tol_yaw, tol_yaw)
            palm = aligned_palm(shape, origin, depth, sim, dx, dy, dyaw)
            obs = sim.observe(shape, origin, palm, depth=depth)
            vals.append(ssim(obs.image, sim.rest_image, cfg))
    return float(np.mean(vals))


def calibrate(sim: TactileSim, training_shapes, n_contacts=50, n_trials=100, depth=3.0, seed=0,
              cfg: SsimConfig = SsimConfig()) -> Thresholds:
    contact = calibrate_contact_threshold(sim, training_shapes, n_contacts, depth, seed, cfg)
    loss = calibrate_loss_threshold(sim, training_shapes, n_trials, depth, seed + 1, cfg)
    h = config_hash({"sim": sim.params(), "ssim": asdict(cfg), "n_contacts": n_contacts,
                     "n_trials": n_trials, "depth": depth, "seed": seed,
                     "shapes": [repr(s) for s in training_shapes]})
    return Thresholds(contact, loss, h)

