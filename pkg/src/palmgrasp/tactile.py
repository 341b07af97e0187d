"""Optical tactile palm simulator.

The skin is a spherical cap (dome) carrying hexagonally arranged markers.
Contacts push markers inward along the dome normal by the local object
indentation, and drag them tangentially away from steep indentation
gradients with a truncated Gaussian kernel.  Images are orthographic
renderings of the markers as anti-aliased white discs.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .geometry import Pose, Shape, contact_depth, dome_height

FORCE_AT_5MM = 8.0


class OverIndentation(ValueError):
    """Contact deeper than the membrane can take."""


@dataclass(frozen=True)
class PalmGeometry:
    skin_diameter: float = 40.0
    dome_radius: float = 41.5
    membrane_thickness: float = 5.0
    max_depth: float = 4.0
    n_rings: int = 6

    def __post_init__(self):
        if not self.max_depth == self.membrane_thickness - 1.0:
            raise ValueError("max_depth must equal membrane_thickness - 1 mm")
        if self.n_rings < 0:
            raise ValueError("n_rings must be >= 0")
        if self.dome_radius < self.skin_diameter / 2:
            raise ValueError("dome radius smaller than the skin radius")

    @property
    def skin_radius(self) -> float:
        return self.skin_diameter / 2

    @property
    def marker_spacing(self) -> float:
        return self.skin_radius / (self.n_rings + 0.5)

    @property
    def n_markers(self) -> int:
        return 1 + 3 * self.n_rings * (self.n_rings + 1)


@dataclass(frozen=True, eq=False)
class MarkerField:
    """Marker rest positions (palm frame, mm) and their displacements."""

    positions: np.ndarray
    displacement: np.ndarray

    def __post_init__(self):
        for a in (self.positions, self.displacement):
            a.setflags(write=False)

    def __len__(self):
        return len(self.positions)

    def __eq__(self, other):
        return (isinstance(other, MarkerField)
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.displacement, other.displacement))

    @property
    def current(self) -> np.ndarray:
        return self.positions + self.displacement

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["marker_id", "x", "y", "z", "dx", "dy", "dz"])
        for i, (p, d) in enumerate(zip(self.positions, self.displacement)):
            w.writerow([i, *(repr(float(v)) for v in p), *(repr(float(v)) for v in d)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MarkerField":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["marker_id", "x", "y", "z", "dx", "dy", "dz"]:
            raise ValueError("not a marker CSV")
        data = np.array([[float(v) for v in r[1:]] for r in rows[1:]]).reshape(-1, 6)
        return cls(np.ascontiguousarray(data[:, :3]), np.ascontiguousarray(data[:, 3:]))


@dataclass(frozen=True, eq=False)
class TactileImage:
    pixels: np.ndarray  # uint8, (height, width)

    def __post_init__(self):
        if self.pixels.dtype != np.uint8 or self.pixels.ndim != 2:
            raise ValueError("tactile images are 2-D uint8 arrays")
        self.pixels.setflags(write=False)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other):
        return isinstance(other, TactileImage) and np.array_equal(self.pixels, other.pixels)

    def to_pgm(self) -> bytes:
        return f"P5\n{self.width} {self.height}\n255\n".encode() + self.pixels.tobytes()

    @classmethod
    def from_pgm(cls, data: bytes) -> "TactileImage":
        # header: magic, width, height, maxval separated by whitespace
        tokens, pos = [], 0
        while len(tokens) < 4:
            while data[pos:pos + 1].isspace():
                pos += 1
            if data[pos:pos + 1] == b"#":
                pos = data.index(b"\n", pos) + 1
                continue
            start = pos
            while not data[pos:pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
        if tokens[0] != b"P5" or int(tokens[3]) != 255:
            raise ValueError("only 8-bit binary PGM (P5) is supported")
        w, h = int(tokens[1]), int(tokens[2])
        px = np.frombuffer(data[pos + 1:pos + 1 + w * h], dtype=np.uint8)
        if px.size != w * h:
            raise ValueError("truncated PGM")
        return cls(px.reshape(h, w).copy())

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_pgm())

    @classmethod
    def load(cls, path) -> "TactileImage":
        return cls.from_pgm(Path(path).read_bytes())


@dataclass(frozen=True)
class RenderConfig:
    width: int = 240
    height: int = 240
    disc_radius: float = 4.0  # px
    field_of_view: float = 40.0  # mm across the image width
    supersample: int = 4

    @property
    def px_per_mm(self) -> float:
        return self.width / self.field_of_view


def hex_ring_layout(n_rings: int, spacing: float) -> np.ndarray:
    """Planar points of a hexagonal lattice, centre first then ring by ring."""
    pts = [(0.0, 0.0)]
    corners = [np.array([math.cos(math.radians(60 * j)), math.sin(math.radians(60 * j))]) for j in range(6)]
    for k in range(1, n_rings + 1):
        for j in range(6):
            a, b = k * spacing * corners[j], k * spacing * corners[(j + 1) % 6]
            for m in range(k):
                pts.append(tuple(a + (b - a) * (m / k)))
    return np.array(pts)


def rest_markers(geom: PalmGeometry) -> MarkerField:
    xy = hex_ring_layout(geom.n_rings, geom.marker_spacing)
    z = dome_height(np.hypot(xy[:, 0], xy[:, 1]), geom.dome_radius)
    pos = np.column_stack([xy, z])
    return MarkerField(pos, np.zeros_like(pos))


def inward_normals(positions: np.ndarray, geom: PalmGeometry) -> np.ndarray:
    centre = np.array([0.0, 0.0, geom.dome_radius])
    return (centre - positions) / geom.dome_radius


def _spread_kernel(xy: np.ndarray, sigma: float) -> np.ndarray:
    """Weights W[i, j] * (p_i - p_j) / sigma, truncated at 3 sigma."""
    diff = xy[:, None, :] - xy[None, :, :]
    d2 = (diff**2).sum(-1)
    g = np.exp(-d2 / (2 * sigma**2))
    g[d2 > (3 * sigma) ** 2] = 0.0
    # normalise by the kernel mass around an interior lattice site
    spacing = np.sqrt(np.sort(d2[0])[1])
    lattice = hex_ring_layout(int(math.ceil(3 * sigma / spacing)) + 1, spacing)
    l2 = (lattice**2).sum(-1)
    z = np.exp(-l2[l2 <= (3 * sigma) ** 2] / (2 * sigma**2)).sum()
    return (g / z)[..., None] * diff / sigma


def relative_object_pose(object_pose: Pose, palm_pose: Pose) -> Pose:
    """Object pose expressed in the palm frame (apex at the origin)."""
    p = palm_pose.to_local(np.array([object_pose.x, object_pose.y, object_pose.z]))
    return Pose(p[0], p[1], p[2], object_pose.yaw - palm_pose.yaw)


def deform_markers(
    rest: MarkerField,
    shape: Shape,
    relative_pose: Pose,
    geom: PalmGeometry,
    sigma: float = 4.0,
    gain: float = 0.55,
    depth: float | None = None,
    _kernel: np.ndarray | None = None,
) -> MarkerField:
    """Displace markers for an object at ``relative_pose`` in the palm frame."""
    if depth is None:
        depth = contact_depth(shape, relative_pose, geom, Pose())
    if depth > geom.membrane_thickness:
        raise OverIndentation(f"contact depth {depth:.3f} mm exceeds the {geom.membrane_thickness:g} mm membrane")
    pos = rest.positions
    if depth <= 0:
        return MarkerField(pos, np.zeros_like(pos))
    q = relative_pose.to_local(pos)
    indent = np.maximum(-shape.sdf_local(q), 0.0)
    if not indent.any():
        return MarkerField(pos, np.zeros_like(pos))
    n_in = inward_normals(pos, geom)
    kernel = _spread_kernel(pos[:, :2], sigma) if _kernel is None else _kernel
    t = gain * np.einsum("ijk,j->ik", kernel, indent)
    t3 = np.column_stack([t, np.zeros(len(t))])
    t3 -= (t3 * n_in).sum(1, keepdims=True) * n_in
    disp = indent[:, None] * n_in + t3
    cap = indent.max()
    norm = np.linalg.norm(disp, axis=1)
    over = norm > cap
    disp[over] *= (cap / norm[over])[:, None]
    return MarkerField(pos, disp)


@lru_cache(maxsize=4)
def _coverage_table(disc_radius: float, ss: int, unit: int = 256) -> np.ndarray:
    """Disc coverage (0..255) per pixel of a (k, k) patch, for every fixed-point subpixel offset.

    Indexed as ``table[fy, fx]`` with ``fy, fx`` in ``[0, unit)``; the patch
    is centred on the pixel that contains the disc centre.
    """
    r_fp = int(round(disc_radius * unit))
    half = int(math.ceil(disc_radius)) + 1
    offs = np.arange(-half, half + 1)
    sub = (np.arange(ss) * unit + unit // 2) // ss
    f = np.arange(unit)
    # squared fixed-point distance along one axis: (offset f, patch index, subpixel)
    d = (offs[None, :, None] * unit + sub[None, None, :] - f[:, None, None]) ** 2
    k = len(offs)
    table = np.empty((unit, unit, k, k), dtype=np.uint8)
    for fy in range(unit):
        inside = (d[fy][None, :, None, :, None] + d[:, None, :, None, :]) <= r_fp * r_fp  # (fx, kr, kc, ss, ss)
        table[fy] = (inside.sum(axis=(3, 4)) * 255 // (ss * ss)).astype(np.uint8)
    return table


def render(markers: MarkerField, cfg: RenderConfig = RenderConfig()) -> TactileImage:
    """Orthographic top view of the markers as anti-aliased discs.

    Coverage is computed in integer arithmetic on a supersampled grid, so
    the output is identical on every platform. Per-marker patches come from
    a table keyed on the fixed-point subpixel offset.
    """
    unit = 256  # fixed-point units per pixel
    xy = markers.current[:, :2]
    col = cfg.width / 2 + xy[:, 0] * cfg.px_per_mm
    row = cfg.height / 2 - xy[:, 1] * cfg.px_per_mm
    cx = np.rint(col * unit).astype(np.int64)
    cy = np.rint(row * unit).astype(np.int64)
    table = _coverage_table(cfg.disc_radius, cfg.supersample, unit)
    half = table.shape[-1] // 2
    offs = np.arange(-half, half + 1)
    val = table[cy % unit, cx % unit]  # (m, k, k)
    pr = (cy // unit)[:, None] + offs[None, :]
    pc = (cx // unit)[:, None] + offs[None, :]

    rows = np.broadcast_to(pr[:, :, None], val.shape)
    cols = np.broadcast_to(pc[:, None, :], val.shape)
    ok = (rows >= 0) & (rows < cfg.height) & (cols >= 0) & (cols < cfg.width) & (val > 0)
    acc = np.bincount(rows[ok] * cfg.width + cols[ok], weights=val[ok], minlength=cfg.height * cfg.width)
    return TactileImage(np.minimum(acc, 255).astype(np.uint8).reshape(cfg.height, cfg.width))


def normal_force(depth: float) -> float:
    """Normal force (N) for an indentation depth (mm); 8 N at 5 mm."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    return FORCE_AT_5MM * (depth / 5.0) ** 1.5


@dataclass(frozen=True, eq=False)
class Observation:
    depth: float
    markers: MarkerField
    image: TactileImage
    label: object = None  # ground-truth FeatureLabel, never read by estimators


@dataclass(frozen=True, eq=False)
class TactileSim:
    """Immutable simulation context: palm geometry, membrane model, renderer."""

    geom: PalmGeometry = PalmGeometry()
    render_cfg: RenderConfig = RenderConfig()
    spread_sigma: float = 4.0
    spread_gain: float = 0.55
    rest: MarkerField = field(init=False)
    rest_image: TactileImage = field(init=False)
    _kernel: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rest = rest_markers(self.geom)
        object.__setattr__(self, "rest", rest)
        object.__setattr__(self, "rest_image", render(rest, self.render_cfg))
        k = _spread_kernel(rest.positions[:, :2], self.spread_sigma)
        k.setflags(write=False)
        object.__setattr__(self, "_kernel", k)

    def params(self) -> dict:
        return {
            "geom": self.geom.__dict__.copy(),
            "render": self.render_cfg.__dict__.copy(),
            "spread_sigma": self.spread_sigma,
            "spread_gain": self.spread_gain,
        }

    def deform(self, shape: Shape, object_pose: Pose, palm_pose: Pose, depth: float | None = None) -> MarkerField:
        rel = relative_object_pose(object_pose, palm_pose)
        return deform_markers(self.rest, shape, rel, self.geom, self.spread_sigma, self.spread_gain,
                              depth=depth, _kernel=self._kernel)

    def observe(self, shape: Shape, object_pose: Pose, palm_pose: Pose, depth: float | None = None,
                label=None) -> Observation:
        if depth is None:
            depth = contact_depth(shape, object_pose, self.geom, palm_pose)
        markers = self.deform(shape, object_pose, palm_pose, depth=depth)
        image = self.rest_image if not markers.displacement.any() else render(markers, self.render_cfg)
        return Observation(depth, markers, image, label)
