# %% [markdown]
# # How much does the membrane spread width matter?
#
# The coupling width between a pressed point and its neighbours is not
# known for the physical skin.  Sweep it and look at the calibrated
# contact threshold and at where an aligned hemisphere is detected.

# %%
import numpy as np

from palmgrasp import Hemisphere, Pose, StrategyConfig, TactileSim, default_catalog
from palmgrasp.control import detect_light_contact, make_scene
from palmgrasp.geometry import FeatureLabel, ShapeClass
from palmgrasp.similarity import Thresholds, calibrate_contact_threshold

train = default_catalog()["train"]
label = FeatureLabel(ShapeClass.HEMISPHERE, 0.0, 0.0, None)

# %%
print(" sigma  raw mean  threshold  detected depth (mm)")
for sigma in (2.0, 3.0, 4.0, 5.0, 6.0):
    sim = TactileSim(spread_sigma=sigma)
    t, raw = calibrate_contact_threshold(sim, train, n_contacts=10, return_raw=True)
    cfg = StrategyConfig(Thresholds(t, max(t, 0.83)))
    depths = []
    for d in (45, 55):
        scene = make_scene(sim, Hemisphere(d), np.random.default_rng(0), label=label, azimuth=0.0, object_yaw=0.0)
        depths.append(detect_light_contact(scene, cfg).depth)
    print("%6.1f %9.4f %10.1f   %s" % (sigma, raw, t, "  ".join("%.2f" % d for d in depths)))

# %% [markdown]
# Detection is sensitive to the spread width.  From 4 upward the aligned
# hemisphere is detected between 3 and 3.5 mm.  Narrower coupling keeps
# SSIM high, so the descent runs on to the 4 mm depth guard, and at 2 the
# rounded threshold even jumps to 0.9.  The default of 4 sits at the low
# edge of the usable range.
