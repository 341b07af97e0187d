import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from palmgrasp.geometry import (
    EdgedDisk, EdgedPrism, Ellipsoid, FeatureLabel, FeatureOutOfWorkspace, Hemisphere, LateralCylinder,
    Pose, ShapeClass, contact_depth, default_catalog, ellipsoid_sdf, fold_deg, format_shape, load_catalog,
    palm_pose_for_label, parse_shape, relative_feature_pose, sdf, wrap_deg,
)
from palmgrasp.tactile import PalmGeometry

GEOM = PalmGeometry()
SHAPES = [Hemisphere(45), Ellipsoid(35, 21, 21), LateralCylinder(35, 100), EdgedPrism(30, 30, 20), EdgedDisk(60, 20)]


def test_sdf_examples():
    h = Hemisphere(45)
    assert sdf(h, [0, 0, 22.5]) == 0.0
    assert sdf(h, [0, 0, 25.0]) == pytest.approx(2.5, abs=1e-12)
    assert sdf(EdgedPrism(30, 30, 20), [0, 0, 21.0]) == pytest.approx(1.0, abs=1e-12)
    assert sdf(EdgedPrism(30, 30, 20), [16.0, 0, 10.0]) == pytest.approx(1.0, abs=1e-12)


def test_sdf_signs():
    h = Hemisphere(45)
    assert sdf(h, [0, 0, 10]) < 0
    assert sdf(h, [30, 0, 10]) > 0


def test_ellipsoid_sdf_against_dense_surface_samples():
    # oracle: brute-force minimum distance to a dense parametric sampling of the surface
    axes = (35.0, 21.0, 15.0)
    u, v = np.meshgrid(np.linspace(0, 2 * np.pi, 721), np.linspace(0, np.pi, 361))
    surf = np.stack([axes[0] * np.cos(u) * np.sin(v), axes[1] * np.sin(u) * np.sin(v), axes[2] * np.cos(v)], -1)
    surf = surf.reshape(-1, 3)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-45, 45, (40, 3))
    got = ellipsoid_sdf(pts, axes)
    brute = np.array([np.min(np.linalg.norm(surf - p, axis=1)) for p in pts])
    inside = (pts**2 / np.array(axes) ** 2).sum(1) < 1
    assert np.all((got < 0) == inside)
    # brute force over-estimates by at most the sampling spacing
    assert np.all(brute - np.abs(got) >= -1e-9)
    assert np.all(brute - np.abs(got) < 0.2)


def test_ellipsoid_sdf_exact_on_axes():
    axes = (35.0, 21.0, 15.0)
    pts = np.array([[40.0, 0, 0], [0, 30.0, 0], [0, 0, 20.0], [0, 0, 5.0]])
    np.testing.assert_allclose(ellipsoid_sdf(pts, axes), [5.0, 9.0, 5.0, -10.0], atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(SHAPES),
       st.lists(st.floats(-60, 60), min_size=6, max_size=6))
def test_sdf_is_1_lipschitz(shape, c):
    p, q = np.array(c[:3]), np.array(c[3:])
    assert abs(sdf(shape, p) - sdf(shape, q)) <= np.linalg.norm(p - q) + 1e-7


def test_relative_pose_examples():
    h = Hemisphere(45)
    lab = relative_feature_pose(h, Pose(), Pose())
    assert (lab.x, lab.y, lab.yaw) == (0.0, 0.0, None)
    lab = relative_feature_pose(h, Pose(), Pose(5.0, 0, 0, 0))
    assert lab.x == pytest.approx(5.0)
    lab = relative_feature_pose(LateralCylinder(35, 100), Pose(), Pose(0, 0, 0, 100.0))
    assert lab.yaw == pytest.approx(-80.0)
    assert lab.x is None


def test_label_validity_masks():
    assert relative_feature_pose(Hemisphere(45), Pose(), Pose(1, 2)).yaw is None
    assert relative_feature_pose(LateralCylinder(35, 100), Pose(), Pose(1, 2)).x is None
    assert relative_feature_pose(EdgedDisk(60, 20), Pose(), Pose(1, 2)).y is None
    with pytest.raises(ValueError):
        FeatureLabel(ShapeClass.HEMISPHERE, 0.0, 0.0, 10.0)


def test_edge_label_sign_convention():
    # edge 5 mm away on the palm's +X side
    lab = relative_feature_pose(EdgedPrism(30, 30, 20), Pose(), Pose(10.0, 0, 0, 0))
    assert lab.x == pytest.approx(5.0)
    assert lab.yaw == pytest.approx(0.0)


def test_out_of_workspace():
    with pytest.raises(FeatureOutOfWorkspace):
        relative_feature_pose(Hemisphere(45), Pose(), Pose(20.0, 0, 0, 0), margin=0.0)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(SHAPES), st.floats(-8, 8), st.floats(-8, 8), st.floats(-180, 180),
       st.floats(-100, 100), st.floats(-100, 100))
def test_label_translation_equivariance(shape, x, y, yaw, tx, ty):
    # the nearest edge is ambiguous at a disk's centre and on a square's diagonals
    if isinstance(shape, EdgedDisk):
        assume(math.hypot(x, y) > 1e-6)
    if isinstance(shape, EdgedPrism):
        assume(abs(abs(x) - abs(y)) > 1e-6)
    obj, palm = Pose(0, 0, 0, 30.0), Pose(x, y, 0, yaw)
    a = relative_feature_pose(shape, obj, palm)
    b = relative_feature_pose(shape, obj.moved(tx, ty), palm.moved(tx, ty))
    for f in ("x", "y", "yaw"):
        va, vb = getattr(a, f), getattr(b, f)
        assert (va is None) == (vb is None)
        if va is not None:
            assert abs(wrap_deg(va - vb) if f == "yaw" else va - vb) < 1e-9


@settings(max_examples=100, deadline=None)
@given(st.floats(-1e4, 1e4))
def test_fold_idempotent(a):
    f = fold_deg(a)
    assert -90 < f <= 90
    assert fold_deg(f) == f


def test_wrap_range():
    assert wrap_deg(-180.0) == 180.0
    assert wrap_deg(540.0) == 180.0
    assert wrap_deg(-190.0) == pytest.approx(170.0)


def test_contact_depth_examples():
    h = Hemisphere(45)
    assert contact_depth(h, Pose(), GEOM, Pose(0, 0, 22.5, 0)) == pytest.approx(0.0, abs=1e-12)
    assert contact_depth(h, Pose(), GEOM, Pose(0, 0, 19.5, 0)) == pytest.approx(3.0, abs=1e-12)
    assert contact_depth(h, Pose(), GEOM, Pose(0, 0, 24.5, 0)) == pytest.approx(-2.0, abs=1e-12)


@pytest.mark.parametrize("shape", SHAPES)
def test_contact_depth_monotone_in_height(shape):
    palm = Pose(3.0, -2.0, 0.0, 25.0)
    zs = np.linspace(30, 0, 13)
    d = [contact_depth(shape, Pose(0, 0, 0, 10.0), GEOM, palm.moved(dz=z)) for z in zs]
    assert all(b >= a for a, b in zip(d, d[1:]))
    np.testing.assert_allclose(np.diff(d), 2.5, atol=1e-9)  # linear in palm height


@pytest.mark.parametrize("shape", SHAPES)
def test_palm_pose_for_label_roundtrip(shape, rng):
    from palmgrasp.datasets import random_label
    for _ in range(20):
        label, along, az = random_label(shape, rng)
        obj = Pose(rng.uniform(-50, 50), rng.uniform(-50, 50), 0.0, rng.uniform(-180, 180))
        palm = palm_pose_for_label(shape, label, obj, 0.0, along, az)
        got = relative_feature_pose(shape, obj, palm)
        for f in ("x", "y"):
            if getattr(label, f) is not None:
                assert getattr(got, f) == pytest.approx(getattr(label, f), abs=1e-9)
        if label.yaw is not None:
            assert abs(wrap_deg(got.yaw - label.yaw)) < 1e-9


def test_catalog_roundtrip():
    cat = default_catalog()
    assert len(cat["train"]) == 12 and len(cat["test"]) == 8
    text = "[all]\n" + "\n".join(format_shape(s) for s in cat["test"])
    assert load_catalog(text)["all"] == cat["test"]
    with pytest.raises(ValueError):
        parse_shape("torus 10 3")


def test_invalid_shapes():
    with pytest.raises(ValueError):
        Hemisphere(-1)
    with pytest.raises(ValueError):
        Ellipsoid(10, 20, 5)
    with pytest.raises(ValueError):
        Pose(math.nan)
