# %% [markdown]
# # Model sets and tactile aliasing
#
# Train M2 and M3 on a small dataset and compare their yaw errors near the
# ends of the yaw range, where a single regressor has to average two
# nearly identical images with opposite labels.

# %%
import numpy as np

from palmgrasp import ModelSetSpec, TactileSim, default_catalog, evaluate_mae, sample_contacts, train_model_set

sim = TactileSim()
cat = default_catalog()
train = [s for i, sh in enumerate(cat["train"]) for s in sample_contacts(sh, 300, sim=sim, seed=i, render=False)]
test = [s for sh in cat["test"] for s in sample_contacts(sh, 100, sim=sim, seed=99, render=False)]
print(len(train), "training and", len(test), "test samples")

# %%
tables = {v: evaluate_mae(train_model_set(ModelSetSpec(v), train), test) for v in ("M1", "M2", "M3")}
print("%-26s %-4s %8s %8s %8s" % ("object", "dim", "M1", "M2", "M3"))
for r1, r2, r3 in zip(*tables.values()):
    print("%-26s %-4s %8.3f %8.3f %8.3f" % (r1.object_id, r1.dimension, r1.mae, r2.mae, r3.mae))

# %%
print("yaw MAE near the range ends (|yaw| within 10 deg of the boundary)")
for r2, r3 in zip(tables["M2"], tables["M3"]):
    if r2.dimension == "yaw":
        print("%-26s M2 %6.2f  M3 %6.2f" % (r2.object_id, r2.extreme_band_mae, r3.extreme_band_mae))
