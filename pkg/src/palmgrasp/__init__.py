"""Simulated soft-palm tactile grasping.

Geometry of the test objects, a marker-based tactile skin simulator, SSIM
contact sensing, a labelled dataset pipeline, classifier/regressor pose
model sets, the grasp controller and the experiment runner.
"""

from .control import (
    ABLATION_GROUPS, EpisodeLog, Perturbation, SceneState, StrategyConfig, make_scene, normalize_yaw,
    run_episode,
)
from .datasets import ContactSample, generate_dataset, read_dataset, sample_contacts
from .geometry import (
    EdgedDisk, EdgedPrism, Ellipsoid, FeatureLabel, Hemisphere, LateralCylinder, Pose, ShapeClass,
    default_catalog, relative_feature_pose, sdf,
)
from .pose_models import (
    GroundTruthEstimator, ModelSetSpec, PoseEstimate, TrainConfig, evaluate_mae, load_model, save_model,
    train_model_set,
)
from .similarity import Thresholds, calibrate, ssim
from .tactile import PalmGeometry, RenderConfig, TactileSim

__version__ = "0.1.0"
