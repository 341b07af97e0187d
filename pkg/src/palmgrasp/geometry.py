"""Parametric object shapes, rigid poses, signed distances and feature-pose labels.

Every object stands on the table (``z = 0`` in its local frame) with its
upper surface facing the palm.  Local frames put the base centre at the
origin; ``Pose.yaw`` rotates the local frame about the vertical axis.

Feature labels describe where the palm sits relative to the contact
feature.  For curved surfaces the label is the palm centre offset from the
feature, expressed in the palm frame once the yaw error has been removed;
for edges it is the inside distance ``D`` from the palm centre to the
nearest edge together with the in-palm-frame direction of the edge's
outward normal.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize

WORKSPACE_HALF_WIDTH = 12.0


class FeatureOutOfWorkspace(ValueError):
    """The contact feature lies outside the palm's perceptual workspace."""


def wrap_deg(angle):
    """Wrap an angle in degrees to (-180, 180]."""
    a = np.mod(np.asarray(angle, dtype=float) + 180.0, 360.0) - 180.0
    a = np.where(a == -180.0, 180.0, a)
    return float(a) if a.ndim == 0 else a


def fold_deg(angle):
    """Fold an angle onto (-90, 90] using 180 degree symmetry."""
    a = np.mod(np.asarray(angle, dtype=float) + 90.0, 180.0) - 90.0
    a = np.where(a == -90.0, 90.0, a)
    return float(a) if a.ndim == 0 else a


def rot2(deg: float) -> np.ndarray:
    t = math.radians(deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose:
    """Position in mm and yaw about the vertical axis in degrees."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.z, self.yaw)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite pose {vals}")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "z", float(self.z))
        object.__setattr__(self, "yaw", wrap_deg(self.yaw))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def moved(self, dx=0.0, dy=0.0, dz=0.0, dyaw=0.0) -> "Pose":
        return Pose(self.x + dx, self.y + dy, self.z + dz, self.yaw + dyaw)

    def to_local(self, points: np.ndarray) -> np.ndarray:
        """World points (..., 3) to this frame."""
        p = np.asarray(points, dtype=float)
        out = np.empty_like(p)
        c, s = math.cos(math.radians(self.yaw)), math.sin(math.radians(self.yaw))
        dx, dy = p[..., 0] - self.x, p[..., 1] - self.y
        out[..., 0] = c * dx + s * dy
        out[..., 1] = -s * dx + c * dy
        out[..., 2] = p[..., 2] - self.z
        return out

    def to_world(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        out = np.empty_like(p)
        c, s = math.cos(math.radians(self.yaw)), math.sin(math.radians(self.yaw))
        out[..., 0] = c * p[..., 0] - s * p[..., 1] + self.x
        out[..., 1] = s * p[..., 0] + c * p[..., 1] + self.y
        out[..., 2] = p[..., 2] + self.z
        return out


class ShapeClass(str, enum.Enum):
    HEMISPHERE = "hemisphere"
    ELLIPSOID = "ellipsoid"
    LATERAL_CYLINDER = "lateral_cylinder"
    EDGED_FLAT = "edged_flat"


# --------------------------------------------------------------------------
# shapes
# --------------------------------------------------------------------------

def _check_positive(**dims):
    for k, v in dims.items():
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"{k} must be positive, got {v}")


def _box_sdf(q: np.ndarray, half: np.ndarray) -> np.ndarray:
    d = np.abs(q) - half
    outside = np.linalg.norm(np.maximum(d, 0.0), axis=-1)
    inside = np.minimum(d.max(axis=-1), 0.0)
    return outside + inside


def _capped_sdf(radial: np.ndarray, axial: np.ndarray, radius, half_len) -> np.ndarray:
    d0 = radial - radius
    d1 = np.abs(axial) - half_len
    outside = np.hypot(np.maximum(d0, 0.0), np.maximum(d1, 0.0))
    return outside + np.minimum(np.maximum(d0, d1), 0.0)


@dataclass(frozen=True)
class Hemisphere:
    diameter: float
    shape_class = ShapeClass.HEMISPHERE
    flat_top = False

    def __post_init__(self):
        _check_positive(diameter=self.diameter)

    @property
    def radius(self):
        return self.diameter / 2

    @property
    def top(self):
        return self.radius

    @property
    def reach(self):
        return self.radius

    def sdf_local(self, q):
        return np.maximum(np.linalg.norm(q, axis=-1) - self.radius, -q[..., 2])

    def height_local(self, u, v):
        r2 = self.radius**2 - u * u - v * v
        return np.where(r2 >= 0, np.sqrt(np.maximum(r2, 0.0)), -np.inf)


@dataclass(frozen=True)
class Ellipsoid:
    """Upper half of an ellipsoid; ``a`` is the semi-axis along local X."""

    a: float
    b: float
    c: float
    shape_class = ShapeClass.ELLIPSOID
    flat_top = False

    def __post_init__(self):
        _check_positive(a=self.a, b=self.b, c=self.c)
        if self.a < self.b:
            raise ValueError("ellipsoid requires a >= b (major axis along local X)")

    @property
    def top(self):
        return self.c

    @property
    def reach(self):
        return self.a

    def sdf_local(self, q):
        return np.maximum(ellipsoid_sdf(q, (self.a, self.b, self.c)), -q[..., 2])

    def height_local(self, u, v):
        s = 1.0 - (u / self.a) ** 2 - (v / self.b) ** 2
        return np.where(s >= 0, self.c * np.sqrt(np.maximum(s, 0.0)), -np.inf)


@dataclass(frozen=True)
class LateralCylinder:
    """Cylinder lying on its side with its axis along local X."""

    diameter: float
    length: float
    shape_class = ShapeClass.LATERAL_CYLINDER
    flat_top = False

    def __post_init__(self):
        _check_positive(diameter=self.diameter, length=self.length)

    @property
    def radius(self):
        return self.diameter / 2

    @property
    def top(self):
        return self.diameter

    @property
    def reach(self):
        return math.hypot(self.length / 2, self.radius)

    def sdf_local(self, q):
        radial = np.hypot(q[..., 1], q[..., 2] - self.radius)
        return _capped_sdf(radial, q[..., 0], self.radius, self.length / 2)

    def height_local(self, u, v):
        r2 = self.radius**2 - v * v
        ok = (r2 >= 0) & (np.abs(u) <= self.length / 2)
        return np.where(ok, self.radius + np.sqrt(np.maximum(r2, 0.0)), -np.inf)


@dataclass(frozen=True)
class EdgedPrism:
    """Cuboid with ``width`` along local X and ``depth`` along local Y."""

    width: float
    depth: float
    height: float
    shape_class = ShapeClass.EDGED_FLAT
    flat_top = True

    def __post_init__(self):
        _check_positive(width=self.width, depth=self.depth, height=self.height)

    @property
    def top(self):
        return self.height

    @property
    def reach(self):
        return math.hypot(self.width, self.depth) / 2

    def sdf_local(self, q):
        c = np.array([0.0, 0.0, self.height / 2])
        half = np.array([self.width / 2, self.depth / 2, self.height / 2])
        return _box_sdf(q - c, half)

    def height_local(self, u, v):
        ok = (np.abs(u) <= self.width / 2) & (np.abs(v) <= self.depth / 2)
        return np.where(ok, self.height, -np.inf)

    def footprint_distance(self, u, v):
        """Planar distance from (u, v) to the top face (0 inside)."""
        du = np.maximum(np.abs(u) - self.width / 2, 0.0)
        dv = np.maximum(np.abs(v) - self.depth / 2, 0.0)
        return np.hypot(du, dv)

    def nearest_edge(self, u: float, v: float):
        """Nearest boundary point of the top face and its outward normal."""
        hw, hd = self.width / 2, self.depth / 2
        if abs(u) <= hw and abs(v) <= hd:
            # inside: ties resolved in the order +X, -X, +Y, -Y
            cands = [
                (hw - u, (hw, v), (1.0, 0.0)),
                (u + hw, (-hw, v), (-1.0, 0.0)),
                (hd - v, (u, hd), (0.0, 1.0)),
                (v + hd, (u, -hd), (0.0, -1.0)),
            ]
            dist, e, n = min(cands, key=lambda c: c[0])
            return np.array(e), np.array(n)
        e = np.array([min(max(u, -hw), hw), min(max(v, -hd), hd)])
        n = np.array([u, v]) - e
        return e, n / np.linalg.norm(n)


@dataclass(frozen=True)
class EdgedDisk:
    """Upright cylinder presenting a circular edge."""

    diameter: float
    height: float
    shape_class = ShapeClass.EDGED_FLAT
    flat_top = True

    def __post_init__(self):
        _check_positive(diameter=self.diameter, height=self.height)

    @property
    def radius(self):
        return self.diameter / 2

    @property
    def top(self):
        return self.height

    @property
    def reach(self):
        return self.radius

    def sdf_local(self, q):
        radial = np.hypot(q[..., 0], q[..., 1])
        return _capped_sdf(radial, q[..., 2] - self.height / 2, self.radius, self.height / 2)

    def height_local(self, u, v):
        return np.where(np.hypot(u, v) <= self.radius, self.height, -np.inf)

    def footprint_distance(self, u, v):
        return np.maximum(np.hypot(u, v) - self.radius, 0.0)

    def nearest_edge(self, u: float, v: float):
        r = math.hypot(u, v)
        n = np.array([1.0, 0.0]) if r == 0 else np.array([u, v]) / r
        return self.radius * n, n


Shape = Hemisphere | Ellipsoid | LateralCylinder | EdgedPrism | EdgedDisk

SHAPE_TYPES = {
    "hemisphere": Hemisphere,
    "ellipsoid": Ellipsoid,
    "lateral_cylinder": LateralCylinder,
    "edged_prism": EdgedPrism,
    "edged_disk": EdgedDisk,
}


def shape_name(shape: Shape) -> str:
    for name, cls in SHAPE_TYPES.items():
        if isinstance(shape, cls):
            return name
    raise TypeError(shape)


def shape_dims(shape: Shape) -> tuple[float, ...]:
    return tuple(getattr(shape, f) for f in shape.__dataclass_fields__)


def object_id(shape: Shape) -> str:
    dims = "x".join(f"{d:g}" for d in shape_dims(shape))
    return f"{shape_name(shape)}-{dims}"


# --------------------------------------------------------------------------
# ellipsoid distance
# --------------------------------------------------------------------------

def _ellipse_distance(e0, e1, y0, y1, max_iter=50, tol=1e-9):
    """Distance from (y0, y1), both >= 0, to the ellipse with semi-axes e0 >= e1."""
    if y1 > 0:
        if y0 > 0:
            z0, z1 = y0 / e0, y1 / e1
            g = z0 * z0 + z1 * z1 - 1.0
            if g == 0:
                return 0.0
            r0 = (e0 / e1) ** 2
            n0 = r0 * z0
            lo, hi = z1 - 1.0, (0.0 if g < 0 else math.hypot(n0, z1) - 1.0)
            s = lo
            for _ in range(max_iter):
                s = 0.5 * (lo + hi)
                f = (n0 / (s + r0)) ** 2 + (z1 / (s + 1.0)) ** 2 - 1.0
                if f > 0:
                    lo = s
                elif f < 0:
                    hi = s
                else:
                    break
                if hi - lo < tol * max(1.0, abs(s)) * 1e-3:
                    break
            x0 = r0 * y0 / (s + r0)
            x1 = y1 / (s + 1.0)
            return math.hypot(x0 - y0, x1 - y1)
        return abs(y1 - e1)
    numer, denom = e0 * y0, e0 * e0 - e1 * e1
    if numer < denom:
        xde = numer / denom
        x0, x1 = e0 * xde, e1 * math.sqrt(max(1.0 - xde * xde, 0.0))
        return math.hypot(x0 - y0, x1)
    return abs(y0 - e0)


def ellipsoid_sdf(points, axes, max_iter=50, tol=1e-9) -> np.ndarray:
    """Signed distance to a full ellipsoid centred at the origin.

    Closest points come from the Lagrange condition
    ``x_i = e_i^2 y_i / (t + e_i^2)``; the multiplier is found by
    safeguarded Newton iteration on the monotone secular equation
    (bracketing keeps every step inside the root interval).
    """
    p = np.asarray(points, dtype=float)
    shp = p.shape[:-1]
    p = p.reshape(-1, 3)
    axes = np.asarray(axes, dtype=float)
    order = np.argsort(-axes, kind="stable")
    e = axes[order]
    y = np.abs(p[:, order])
    inside = ((y / e) ** 2).sum(axis=1) < 1.0
    dist = np.empty(len(y))

    gen = y[:, 2] > 0
    if gen.any():
        yg = y[gen]
        z = yg / e
        g = (z**2).sum(axis=1) - 1.0
        r = (e / e[2]) ** 2
        n = r * z
        lo = z[:, 2] - 1.0
        hi = np.where(g < 0, 0.0, np.linalg.norm(np.column_stack([n[:, 0], n[:, 1], z[:, 2]]), axis=1) - 1.0)
        s = lo.copy()
        for _ in range(max_iter):
            d = s[:, None] + r
            with np.errstate(divide="ignore", invalid="ignore"):  # d can round to 0 when z is tiny
                ratio = n / d
                f = (ratio**2).sum(axis=1) - 1.0
                df = -2.0 * (ratio**2 / d).sum(axis=1)
                step = s - f / df
            lo = np.where(f > 0, s, lo)
            hi = np.where(f < 0, s, hi)
            bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
            s_new = np.where(bad, 0.5 * (lo + hi), step)
            s_new = np.where(f == 0, s, s_new)
            done = np.abs(s_new - s) <= tol * np.maximum(1.0, np.abs(s)) * 1e-3
            s = s_new
            if done.all():
                break
        x = r * yg / (s[:, None] + r)
        dist[gen] = np.linalg.norm(x - yg, axis=1)
        dist[gen] = np.where(g == 0, 0.0, dist[gen])

    for i in np.flatnonzero(~gen):
        y0, y1 = y[i, 0], y[i, 1]
        e0, e1, e2 = e
        d0, d1 = e0 * e0 - e2 * e2, e1 * e1 - e2 * e2
        n0, n1 = e0 * y0, e1 * y1
        computed = False
        if d0 > 0 and d1 > 0 and n0 < d0 and n1 < d1:
            xd0, xd1 = n0 / d0, n1 / d1
            disc = 1.0 - xd0 * xd0 - xd1 * xd1
            if disc > 0:
                x0, x1, x2 = e0 * xd0, e1 * xd1, e2 * math.sqrt(disc)
                dist[i] = math.sqrt((x0 - y0) ** 2 + (x1 - y1) ** 2 + x2 * x2)
                computed = True
        if not computed:
            dist[i] = _ellipse_distance(e0, e1, y0, y1, max_iter, tol)

    return np.where(inside, -dist, dist).reshape(shp)


def sdf(shape: Shape, point, pose: Pose | None = None):
    """Signed distance (mm) from world point(s) to the shape placed at ``pose``."""
    p = np.asarray(point, dtype=float)
    q = p if pose is None else pose.to_local(p)
    out = shape.sdf_local(q)
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# feature labels
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureLabel:
    """Contact-feature pose in the palm frame; ``None`` marks an invalid field."""

    shape_class: ShapeClass
    x: float | None
    y: float | None
    yaw: float | None

    def __post_init__(self):
        mask = {
            ShapeClass.HEMISPHERE: ("yaw",),
            ShapeClass.LATERAL_CYLINDER: ("x",),
            ShapeClass.EDGED_FLAT: ("y",),
            ShapeClass.ELLIPSOID: (),
        }[ShapeClass(self.shape_class)]
        for f in ("x", "y", "yaw"):
            v = getattr(self, f)
            if (f in mask) != (v is None):
                raise ValueError(f"{self.shape_class}: field {f} validity mismatch ({v})")

    def values(self) -> dict[str, float | None]:
        return {"x": self.x, "y": self.y, "yaw": self.yaw}


def relative_feature_pose(
    shape: Shape, object_pose: Pose, palm_pose: Pose, margin: float = math.inf
) -> FeatureLabel:
    """Label the contact feature's pose relative to the palm.

    Raises FeatureOutOfWorkspace when a valid position exceeds the
    +/-12 mm workspace by more than ``margin``.
    """
    q = object_pose.to_local(np.array([palm_pose.x, palm_pose.y, palm_pose.z]))[:2]
    rel_yaw = palm_pose.yaw - object_pose.yaw
    cls = shape.shape_class

    if cls is ShapeClass.HEMISPHERE:
        off = rot2(-rel_yaw) @ q
        label = FeatureLabel(cls, float(off[0]), float(off[1]), None)
    elif cls in (ShapeClass.ELLIPSOID, ShapeClass.LATERAL_CYLINDER):
        yaw = fold_deg(rel_yaw)
        flip = -1.0 if abs(wrap_deg(rel_yaw - yaw)) > 90 else 1.0
        x, y = flip * q[0], flip * q[1]
        if cls is ShapeClass.ELLIPSOID:
            label = FeatureLabel(cls, float(x), float(y), yaw)
        else:
            label = FeatureLabel(cls, None, float(y), yaw)
    else:
        e, n = shape.nearest_edge(float(q[0]), float(q[1]))
        d = float(np.dot(e - q, n))
        yaw = wrap_deg(math.degrees(math.atan2(n[1], n[0])) - rel_yaw)
        label = FeatureLabel(cls, d, None, yaw)

    lim = WORKSPACE_HALF_WIDTH + margin
    for v in (label.x, label.y):
        if v is not None and abs(v) > lim:
            raise FeatureOutOfWorkspace(f"feature offset {v:.3f} mm beyond +/-{lim:g} mm")
    return label


def palm_pose_for_label(
    shape: Shape, label: FeatureLabel, object_pose: Pose, z: float = 0.0,
    along: float = 0.0, azimuth: float = 0.0,
) -> Pose:
    """Inverse of ``relative_feature_pose`` for the in-plane components.

    ``along`` places the palm along a cylinder axis or prism side (nuisance
    coordinates the label does not carry); ``azimuth`` is the palm yaw used
    for hemispheres and disks, whose labels are yaw-free in the world.
    """
    cls = shape.shape_class
    if cls is ShapeClass.HEMISPHERE:
        rel_yaw = azimuth
        q = rot2(rel_yaw) @ np.array([label.x, label.y])
    elif cls is ShapeClass.ELLIPSOID:
        rel_yaw = label.yaw
        q = np.array([label.x, label.y])
    elif cls is ShapeClass.LATERAL_CYLINDER:
        rel_yaw = label.yaw
        q = np.array([along, label.y])
    elif isinstance(shape, EdgedDisk):
        phi = azimuth + label.yaw
        n = np.array([math.cos(math.radians(phi)), math.sin(math.radians(phi))])
        q = (shape.radius - label.x) * n
        rel_yaw = azimuth
    elif isinstance(shape, EdgedPrism):
        # ``azimuth`` picks the side: its outward normal direction in degrees
        side = int(round(wrap_deg(azimuth) / 90.0)) % 4
        n = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]][side], dtype=float)
        t = np.array([-n[1], n[0]])
        half = shape.width / 2 if n[0] != 0 else shape.depth / 2
        e = half * n + along * t
        q = e - label.x * n
        rel_yaw = 90.0 * side - label.yaw
    else:
        raise TypeError(shape)
    w = object_pose.to_world(np.array([q[0], q[1], 0.0]))
    return Pose(w[0], w[1], z, object_pose.yaw + rel_yaw)


# --------------------------------------------------------------------------
# contact depth
# --------------------------------------------------------------------------

def dome_height(r, dome_radius: float):
    """Height of the undeformed skin above its apex at planar radius ``r``."""
    return dome_radius - np.sqrt(np.maximum(dome_radius**2 - np.asarray(r) ** 2, 0.0))


def _overlap_at_zero(shape: Shape, object_pose: Pose, palm, palm_pose: Pose) -> float:
    """Maximum vertical overlap of object and skin with the palm apex at z = object base."""
    R_skin = palm.skin_diameter / 2
    R_dome = palm.dome_radius
    base = object_pose.z - palm_pose.z
    c = object_pose.to_local(np.array([palm_pose.x, palm_pose.y, 0.0]))[:2]
    rel = palm_pose.yaw - object_pose.yaw

    if np.hypot(*c) > shape.reach + R_skin:
        return -math.inf

    if shape.flat_top:
        r = float(shape.footprint_distance(c[0], c[1]))
        if r > R_skin:
            return -math.inf
        return base + shape.top - float(dome_height(r, R_dome))

    R = rot2(rel)

    def overlap(pts):
        # pts: (..., 2) in the palm frame
        local = pts @ R.T + c
        h = shape.height_local(local[..., 0], local[..., 1])
        r = np.hypot(pts[..., 0], pts[..., 1])
        val = base + h - dome_height(r, R_dome)
        return np.where(r <= R_skin, val, -np.inf)

    rr = np.linspace(0.0, R_skin, 21)
    th = np.linspace(0.0, 2 * np.pi, 48, endpoint=False)
    grid = np.concatenate(
        [np.zeros((1, 2)), (rr[1:, None, None] * np.stack([np.cos(th), np.sin(th)], -1)[None]).reshape(-1, 2)]
    )
    vals = overlap(grid)
    best = int(np.argmax(vals))
    if not np.isfinite(vals[best]):
        return -math.inf
    res = optimize.minimize(
        lambda p: -float(overlap(np.asarray(p)[None])[0]) if np.all(np.isfinite(p)) else math.inf,
        grid[best],
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-12, "initial_simplex": grid[best] + np.array([[0, 0], [0.2, 0], [0, 0.2]])},
    )
    return float(max(vals[best], -res.fun))


def contact_depth(shape: Shape, object_pose: Pose, palm, palm_pose: Pose) -> float:
    """Maximum penetration (mm) of the object past the undeformed skin dome.

    Penetration is measured along the approach (vertical) axis, so lowering
    the palm by ``h`` raises the depth by exactly ``h``.  Separation gives a
    negative value and ``-inf`` when the object lies entirely outside the
    skin footprint.
    """
    return _overlap_at_zero(shape, object_pose, palm, palm_pose)


# --------------------------------------------------------------------------
# catalogs
# --------------------------------------------------------------------------

def parse_shape(line: str) -> Shape:
    parts = line.split()
    name, dims = parts[0].lower(), [float(v) for v in parts[1:]]
    if name not in SHAPE_TYPES:
        raise ValueError(f"unknown shape variant {parts[0]!r}")
    cls = SHAPE_TYPES[name]
    try:
        return cls(*dims)
    except TypeError as exc:
        raise ValueError(f"bad dimensions for {name}: {dims}") from exc


def format_shape(shape: Shape) -> str:
    return " ".join([shape_name(shape)] + [f"{d:g}" for d in shape_dims(shape)])


def load_catalog(path_or_text) -> dict[str, list[Shape]]:
    """Read a shape catalog.

    One shape per line (``variant dim1 dim2 ...``), ``#`` comments, and
    optional ``[section]`` headers; shapes before any header go in ``"all"``.
    """
    text = path_or_text
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text
                                         and Path(path_or_text).exists()):
        text = Path(path_or_text).read_text()
    out: dict[str, list[Shape]] = {}
    section = "all"
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            out.setdefault(section, [])
            continue
        out.setdefault(section, []).append(parse_shape(line))
    return out


DEFAULT_CATALOG = """\
# object set: three training sizes and two held-out test sizes per surface type
[train]
hemisphere 40
hemisphere 50
hemisphere 60
lateral_cylinder 30 100
lateral_cylinder 40 100
lateral_cylinder 50 100
ellipsoid 30 18 18
ellipsoid 40 24 24
ellipsoid 50 30 30
edged_disk 50 20
edged_disk 70 20
edged_prism 100 60 20

[test]
hemisphere 45
hemisphere 55
lateral_cylinder 35 100
lateral_cylinder 45 100
ellipsoid 35 21 21
ellipsoid 45 27 27
edged_disk 60 20
edged_disk 80 20
"""


def default_catalog() -> dict[str, list[Shape]]:
    return load_catalog(DEFAULT_CATALOG)
