import math

import numpy as np
import pytest
from scipy import ndimage

from palmgrasp.geometry import EdgedDisk, Hemisphere, LateralCylinder, Pose
from palmgrasp.similarity import ssim
from palmgrasp.tactile import (
    MarkerField, OverIndentation, PalmGeometry, RenderConfig, TactileImage, TactileSim, deform_markers,
    hex_ring_layout, normal_force, render, rest_markers,
)


def test_marker_counts():
    assert len(rest_markers(PalmGeometry())) == 127
    assert len(rest_markers(PalmGeometry(n_rings=1))) == 7
    for n in range(0, 9):
        assert len(hex_ring_layout(n, 1.0)) == 1 + sum(6 * k for k in range(1, n + 1))


def test_rest_markers_on_dome():
    g = PalmGeometry()
    m = rest_markers(g)
    assert not m.displacement.any()
    p = m.positions
    # dome centred dome_radius above the apex
    r = np.linalg.norm(p - np.array([0, 0, g.dome_radius]), axis=1)
    np.testing.assert_allclose(r, g.dome_radius, atol=1e-9)
    assert np.hypot(p[:, 0], p[:, 1]).max() <= g.skin_radius


def test_geometry_invariant():
    with pytest.raises(ValueError):
        PalmGeometry(membrane_thickness=6.0, max_depth=4.0)


def aligned(sim, shape, depth):
    return sim.observe(shape, Pose(), Pose(0, 0, shape.top - depth, 0))


def test_deform_examples(sim):
    h = Hemisphere(45)
    tangent = aligned(sim, h, 0.0)
    assert not tangent.markers.displacement.any()
    obs = aligned(sim, h, 3.0)
    assert np.linalg.norm(obs.markers.displacement[0]) == pytest.approx(3.0, abs=1e-9)
    again = aligned(sim, h, 3.0)
    assert again.markers == obs.markers
    assert np.array_equal(again.image.pixels, obs.image.pixels)


def test_displacement_bounded_by_depth(sim, rng):
    for shape in (Hemisphere(45), LateralCylinder(35, 100), EdgedDisk(60, 20)):
        for _ in range(5):
            d = rng.uniform(0.5, 4.0)
            palm = Pose(rng.uniform(-8, 8), rng.uniform(-8, 8), 0, rng.uniform(-180, 180))
            from palmgrasp.datasets import set_depth
            palm = set_depth(sim, shape, Pose(), palm, d)
            obs = sim.observe(shape, Pose(), palm)
            assert np.linalg.norm(obs.markers.displacement, axis=1).max() <= obs.depth + 1e-9


def test_over_indentation(sim):
    with pytest.raises(OverIndentation):
        aligned(sim, Hemisphere(45), 5.5)


def test_displacement_locality(sim):
    # shallow contact off to one side of the skin
    from palmgrasp.datasets import set_depth
    h = Hemisphere(45)
    palm = set_depth(sim, h, Pose(), Pose(-10.0, 0, 0, 0), 0.5)
    obs = sim.observe(h, Pose(), palm)
    p = sim.rest.positions
    q = p + np.array([palm.x, palm.y, palm.z])
    indented = h.sdf_local(q) < 0
    assert indented.any()
    gap = np.min(np.linalg.norm(p[:, None, :2] - p[None, indented, :2], axis=2), axis=1)
    far = gap > 3 * sim.spread_sigma
    assert far.sum() > 10
    assert np.linalg.norm(obs.markers.displacement[far], axis=1).max() < 1e-3


def test_render_rest_blobs(sim):
    img = render(sim.rest, sim.render_cfg)
    assert np.array_equal(img.pixels, render(sim.rest, sim.render_cfg).pixels)
    _, n = ndimage.label(img.pixels >= 128)
    assert n == 127
    assert img.pixels.shape == (240, 240) and img.pixels.dtype == np.uint8


def test_render_matches_direct_supersampling():
    # oracle: count supersample points inside each disc directly, one marker at a time
    cfg = RenderConfig()
    rng = np.random.default_rng(3)
    pos = np.column_stack([rng.uniform(-15, 15, 12), rng.uniform(-15, 15, 12), np.zeros(12)])
    mf = MarkerField(pos, np.zeros_like(pos))
    got = render(mf, cfg).pixels.astype(np.int64)
    unit, ss = 256, cfg.supersample
    r_fp = int(round(cfg.disc_radius * unit))
    sub = (np.arange(ss) * unit + unit // 2) // ss
    acc = np.zeros((cfg.height, cfg.width), dtype=np.int64)
    for x, y, _ in pos:
        cx = int(np.rint((cfg.width / 2 + x * cfg.px_per_mm) * unit))
        cy = int(np.rint((cfg.height / 2 - y * cfg.px_per_mm) * unit))
        for r in range(cy // unit - 6, cy // unit + 7):
            for c in range(cx // unit - 6, cx // unit + 7):
                sy = r * unit + sub - cy
                sx = c * unit + sub - cx
                k = int(((sy[:, None] ** 2 + sx[None, :] ** 2) <= r_fp * r_fp).sum())
                if k and 0 <= r < cfg.height and 0 <= c < cfg.width:
                    acc[r, c] += k * 255 // (ss * ss)
    assert np.array_equal(got, np.minimum(acc, 255))


def test_deformed_image_differs(sim):
    obs = aligned(sim, Hemisphere(45), 3.0)
    assert ssim(obs.image, sim.rest_image) < 1.0


def test_ssim_monotone_in_depth(sim, rng):
    depths = np.arange(0.5, 4.01, 0.5)
    violations, pairs = 0, 0
    from palmgrasp.datasets import set_depth
    for shape in (Hemisphere(45), LateralCylinder(35, 100)):
        for _ in range(6):
            palm = Pose(rng.uniform(-6, 6), rng.uniform(-6, 6), 0, rng.uniform(-180, 180))
            s = [ssim(sim.observe(shape, Pose(), set_depth(sim, shape, Pose(), palm, d)).image, sim.rest_image)
                 for d in depths]
            violations += sum(b > a for a, b in zip(s, s[1:]))
            pairs += len(s) - 1
    assert violations <= 0.02 * pairs


def test_normal_force():
    assert normal_force(0.0) == 0.0
    assert normal_force(5.0) == pytest.approx(8.0, abs=1e-12)
    assert normal_force(3.0) == pytest.approx(8 * (3 / 5) ** 1.5, abs=1e-12)
    assert normal_force(3.0) == pytest.approx(3.718064, abs=1e-6)
    d = np.linspace(0.01, 4.99, 50)
    f = [normal_force(x) for x in d]
    assert all(b > a for a, b in zip(f, f[1:])) and max(f) < 8.0
    with pytest.raises(ValueError):
        normal_force(-0.1)


def test_pgm_and_csv_roundtrip(sim, tmp_path):
    obs = aligned(sim, Hemisphere(45), 2.0)
    p = tmp_path / "img.pgm"
    obs.image.save(p)
    assert p.read_bytes().startswith(b"P5")
    assert np.array_equal(TactileImage.load(p).pixels, obs.image.pixels)
    m = MarkerField.from_csv(obs.markers.to_csv())
    assert m == obs.markers
    assert obs.markers.to_csv().splitlines()[0] == "marker_id,x,y,z,dx,dy,dz"
