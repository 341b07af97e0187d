import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from palmgrasp.control import (
    ABLATION_GROUPS, SUMMARY_FIELDS, AdjustDiverged, EdgeExplorationState, EpisodeLog, NoContact, ObjectLost,
    Perturbation, SceneState, StrategyConfig, adjust_curved, detect_light_contact, explore_edges,
    hold_with_loss_correction, loss_detection_depths, make_scene, normalize_yaw, pose_error, run_episode,
    summary_csv,
)
from palmgrasp.geometry import EdgedDisk, EdgedPrism, FeatureLabel, Hemisphere, Pose, ShapeClass
from palmgrasp.pose_models import GroundTruthEstimator, PoseEstimate


@pytest.fixture
def cfg(thresholds):
    return StrategyConfig(thresholds)


def hemi_scene(sim, x=0.0, y=0.0, clearance=5.0, diameter=45.0):
    shape = Hemisphere(diameter)
    lab = FeatureLabel(ShapeClass.HEMISPHERE, x, y, None)
    return make_scene(sim, shape, np.random.default_rng(0), clearance, label=lab, azimuth=0.0, object_yaw=0.0)


# -- normalisation -----------------------------------------------------------

@pytest.mark.parametrize("yaw,want", [(135.0, -45.0), (30.0, 30.0), (-90.0, 90.0), (90.0, 90.0), (180.0, 0.0)])
def test_normalize_yaw_examples(yaw, want):
    assert normalize_yaw(yaw) == pytest.approx(want, abs=1e-12)


@given(st.floats(-1e4, 1e4))
def test_normalize_yaw_idempotent_periodic(y):
    n = normalize_yaw(y)
    assert -90 < n <= 90
    assert normalize_yaw(n) == pytest.approx(n, abs=1e-9)
    assert normalize_yaw(y + 180.0) == pytest.approx(n, abs=1e-9) or abs(n) == pytest.approx(90.0, abs=1e-9)


def test_normalize_yaw_rejects_nan():
    with pytest.raises(ValueError):
        normalize_yaw(math.nan)


# -- width formula -------------------------------------------------------------

def test_width_example():
    s = EdgeExplorationState(d1=5.0, steps=1).finish(4.0)
    assert s.width == 33.0
    # palm sits d2 inside the second edge; the midpoint is W/2 inside it
    assert s.delta_d == -12.5


@given(st.floats(0.0, 12.0), st.integers(0, 5), st.floats(0.0, 12.0))
def test_width_identity_and_midpoint(d1, steps, d2):
    s = EdgeExplorationState(d1=d1, steps=steps).finish(d2)
    assert s.width - s.d1 - 24.0 * steps - s.d2 == 0.0
    assert abs(s.d1 - d1) <= 2**-31 and abs(s.d2 - d2) <= 2**-31
    # 1-D check: first edge at 0, second at W, palm at W - d2, move delta_d toward the second edge
    assert (s.width - s.d2) + s.delta_d == s.width / 2


def test_symmetric_start_is_midway():
    s = EdgeExplorationState(d1=10.0, steps=0).finish(10.0)
    assert s.width == 20.0 and s.delta_d == 0.0


# -- config --------------------------------------------------------------------

def test_config_validation(thresholds):
    with pytest.raises(ValueError):
        StrategyConfig(thresholds, tap_stride=20.0)
    with pytest.raises(ValueError):
        StrategyConfig(thresholds, descent_step=0.0)
    c = StrategyConfig(thresholds).with_stages(*ABLATION_GROUPS["+contact"])
    assert c.stages == {"contact_detect": True, "pose_adjust": False, "loss_detect": False}


def test_perturbation_ticks():
    assert Perturbation(0.05, 2.0, 20).n_ticks == 60
    assert Perturbation(0.0, 0.0, 0).n_ticks == 0


# -- light contact -----------------------------------------------------------------

def test_aligned_hemisphere_detects_in_band(sim, cfg):
    scene = hemi_scene(sim)
    ev = detect_light_contact(scene, cfg)
    assert 2.0 <= ev.depth <= 4.0 and not ev.limit
    assert ev.ssim <= cfg.thresholds.contact


def test_empty_scene_no_contact(sim, cfg):
    scene = make_scene(sim, None, np.random.default_rng(0))
    with pytest.raises(NoContact):
        detect_light_contact(scene, cfg)
    log = run_episode(make_scene(sim, None, np.random.default_rng(0)), GroundTruthEstimator("M3"), cfg)
    assert log.outcome == "NoContact"


def test_already_indented_fires_first_reading(sim, cfg):
    # 3 mm sits just above the calibrated contact threshold, so start a little deeper
    scene = hemi_scene(sim, clearance=-3.5)
    scene.reference = sim.rest_image
    log = EpisodeLog()
    ev = detect_light_contact(scene, cfg, log)
    assert ev.travel == 0.0 and ev.depth == pytest.approx(3.5)
    assert len(log.of_kind("ssim_reading")) == 1


def test_depth_guard_marks_limit(sim, cfg):
    # a wide flat face barely changes the image, so the guard stops the descent
    scene = SceneState(sim, EdgedPrism(120, 120, 20), Pose(), Pose(0.0, 0.0, 0.0, 0.0))
    scene.palm = Pose(0.0, 0.0, scene._overlap0() + 1.0, 0.0)
    log = EpisodeLog()
    ev = detect_light_contact(scene, StrategyConfig(cfg.thresholds.__class__(0.01, 0.01)), log)
    assert ev.limit and ev.depth == pytest.approx(sim.geom.max_depth)
    assert log.of_kind("stage_transition")[-1]["stage"] == "depth_limit"


# -- curved adjustment ---------------------------------------------------------------

class _Const:
    def __init__(self, x):
        self.x = x

    def predict(self, obs):
        return PoseEstimate("hemisphere", self.x, 0.0, None)


def test_aligned_start_needs_no_moves(sim, cfg):
    scene = hemi_scene(sim)
    detect_light_contact(scene, cfg)
    assert adjust_curved(scene, GroundTruthEstimator("M3"), cfg) == 0


def test_constant_error_diverges(sim, cfg):
    scene = hemi_scene(sim, diameter=300.0)  # wide enough to keep contact over five moves
    detect_light_contact(scene, cfg)
    log = EpisodeLog()
    with pytest.raises(AdjustDiverged):
        adjust_curved(scene, _Const(12.0), cfg, log)
    iters = [e["iteration"] for e in log.of_kind("prediction")]
    assert iters == [0, 1, 2, 3, 4, 5]


def test_command_fidelity(sim, cfg, ctx):
    scene = hemi_scene(sim, 6.0, -6.0)
    detect_light_contact(scene, cfg)
    log = EpisodeLog()
    n = adjust_curved(scene, ctx.model("M3"), cfg, log)
    assert n <= 2
    assert pose_error(scene)[0] < 0.5
    for m in log.of_kind("motion"):
        if "translate" in m:
            px, py = m["predicted"]
            assert abs(m["translate"][0] + m["sign"] * px) <= 1e-12
            assert abs(m["translate"][1] + m["sign"] * py) <= 1e-12


# -- edges ------------------------------------------------------------------------

def test_disk_exploration_with_knn(sim, cfg, ctx):
    shape = EdgedDisk(60, 20)
    rng = np.random.default_rng(7)
    for _ in range(3):
        scene = make_scene(sim, shape, rng)
        detect_light_contact(scene, cfg)
        state = explore_edges(scene, ctx.model("M3"), cfg)
        assert abs(state.width - 60.0) < 1.0
        assert math.hypot(scene.palm.x, scene.palm.y) < 1.0


def test_prism_exploration_with_ground_truth(sim, cfg):
    shape = EdgedPrism(50, 50, 20)
    for seed in range(3):
        scene = make_scene(sim, shape, np.random.default_rng(seed))
        detect_light_contact(scene, cfg)
        log = EpisodeLog()
        state = explore_edges(scene, GroundTruthEstimator("M3"), cfg, log)
        assert state.width == pytest.approx(50.0, abs=1e-6)
        assert pose_error(scene)[0] == pytest.approx(0.0, abs=1e-6)
        ev = [e for e in log.of_kind("stage_transition") if e["stage"] == "second_edge"][0]
        assert ev["width"] - ev["d1"] - 24 * ev["steps"] - ev["d2"] == 0.0


# -- hold --------------------------------------------------------------------------

def _held_scene(sim, cfg):
    scene = hemi_scene(sim)
    detect_light_contact(scene, cfg)
    scene.held = True
    scene.move(dz=20.0)
    return scene


def test_no_perturbation_no_corrections(sim, cfg):
    assert hold_with_loss_correction(_held_scene(sim, cfg), cfg, None) == []


def test_pull_detected_while_depth_positive(sim, cfg):
    scene = _held_scene(sim, cfg)
    d0 = scene.depth
    corr = hold_with_loss_correction(scene, cfg, Perturbation())
    assert corr and all(0 < c["detection_depth"] < d0 for c in corr)
    assert scene.depth > 0


def test_disabled_loss_stage_drops_object(sim, cfg):
    scene = _held_scene(sim, cfg)
    with pytest.raises(ObjectLost):
        hold_with_loss_correction(scene, cfg.with_stages(True, True, False), Perturbation(0.1, 6.0, 0))


# -- episodes ------------------------------------------------------------------------

def test_ground_truth_episode_is_held(sim, cfg):
    scene = hemi_scene(sim, 5.0, 3.0)
    log = run_episode(scene, GroundTruthEstimator("M3"), cfg, Perturbation(), seed=3, group="+loss")
    assert log.outcome == "held"
    assert log.final_err_mm < 0.5
    assert all(d > 0 for d in loss_detection_depths(log))


def test_log_roundtrip_and_summary(sim, cfg):
    log = run_episode(hemi_scene(sim, 2.0, 0.0), GroundTruthEstimator("M3"), cfg, Perturbation(), seed=5,
                      group="+loss")
    back = EpisodeLog.from_jsonl(log.to_jsonl())
    assert back.to_jsonl() == log.to_jsonl()
    assert [e["seq"] for e in back.events] == list(range(len(back.events)))
    lines = summary_csv([log, back]).splitlines()
    assert lines[0].split(",") == list(SUMMARY_FIELDS)
    assert lines[1] == lines[2]
    with pytest.raises(ValueError):
        EpisodeLog.from_jsonl('{"schema": "other", "version": 1}\n')


def test_baseline_group_skips_sensing(sim, cfg):
    c = cfg.with_stages(*ABLATION_GROUPS["baseline"])
    log = run_episode(hemi_scene(sim, 5.0, 0.0), GroundTruthEstimator("M3"), c, seed=2)
    assert not log.of_kind("ssim_reading") and not log.of_kind("prediction")
    assert log.of_kind("motion")[0]["stage"] == "baseline"
