# %% [markdown]
# # The simulated skin and its SSIM response
#
# Press a hemisphere into the palm at increasing depth and watch the
# marker image drift away from the rest image.

# %%
import numpy as np

from palmgrasp import Hemisphere, Pose, TactileSim, ssim
from palmgrasp.similarity import aligned_palm

sim = TactileSim()
shape = Hemisphere(45)
print(sim.geom, "markers:", len(sim.rest.positions))

# %%
depths = np.round(np.arange(0.5, 4.01, 0.5), 2)
rows = []
for d in depths:
    palm = aligned_palm(shape, Pose(), d, sim)
    obs = sim.observe(shape, Pose(), palm, depth=d)
    shift = np.linalg.norm(obs.markers.displacement, axis=1)
    rows.append((d, ssim(obs.image, sim.rest_image), shift.max(), shift.mean()))
print(" depth   ssim   max shift  mean shift")
for r in rows:
    print("%6.2f %7.4f %10.3f %11.3f" % r)

# %% [markdown]
# SSIM falls monotonically with depth.  The contact threshold (0.8 after
# rounding) is crossed a little past 3 mm for an aligned hemisphere.

# %%
# the image is a dark field with one bright blob per marker
from scipy import ndimage

img = sim.observe(shape, Pose(), aligned_palm(shape, Pose(), 3.0, sim), depth=3.0).image
px = np.asarray(img.pixels)
print("image", px.shape, "blobs", ndimage.label(px > 0)[1], "lit fraction %.3f" % (px > 0).mean())
