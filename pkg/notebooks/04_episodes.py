# %% [markdown]
# # Grasping episodes
#
# Run a handful of episodes per ablation group with the exact (label)
# estimator and look at the outcomes and final pose errors.

# %%
import numpy as np

from palmgrasp import ABLATION_GROUPS, Perturbation, StrategyConfig, TactileSim, default_catalog
from palmgrasp.control import make_scene, run_episode, summary_csv
from palmgrasp.pose_models import GroundTruthEstimator
from palmgrasp.similarity import Thresholds

sim = TactileSim()
cfg = StrategyConfig(Thresholds(0.8, 0.8297))
shapes = default_catalog()["test"]
est = GroundTruthEstimator("M3")

# %%
logs = []
for group, stages in ABLATION_GROUPS.items():
    c = cfg.with_stages(*stages)
    for i in range(8):
        rng = np.random.default_rng(i)
        logs.append(run_episode(make_scene(sim, shapes[i], rng), est, c, Perturbation(), seed=i, group=group, rng=rng))

# %%
for group in ABLATION_GROUPS:
    g = [l for l in logs if l.group == group]
    err = np.array([l.final_err_mm for l in g])
    held = sum(l.outcome == "held" for l in g)
    print("%-9s held %d/%d  mean error %6.2f mm" % (group, held, len(g), err.mean()))

# %%
print(summary_csv(logs[-4:]))
