# %% [markdown]
# # Compositing and its gradient
#
# alpha_i = 1 - exp(-sigma_i delta_i), T_i = prod_{j<i}(1 - alpha_j),
# C = sum T_i alpha_i c_i + T_final * background.

# %%
import math

import numpy as np

from streamnerf.hashgrid import HashGridConfig
from streamnerf.model import ModelConfig, NerfModel
from streamnerf.render import RenderConfig, composite, loss_and_gradients, sample_depths

ln2 = math.log(2.0)
out = composite(np.array([[ln2, ln2]]), np.array([[[1.0, 0, 0], [0, 1.0, 0]]]), np.ones((1, 2)), (0, 0, 0))
print("two half-opaque samples:", out.rgb[0], "opacity", out.opacity[0])  # (0.5, 0.25, 0), 0.75

# %% weights plus leftover transmittance always sum to one
rng = np.random.default_rng(1)
out = composite(rng.exponential(3, (1000, 64)), rng.random((1000, 64, 3)), np.full((1000, 64), 0.05), (1, 1, 1))
print("max |sum w + T - 1| =", np.abs(out.weights.sum(1) + out.transmittance[:, -1] - 1).max())

# %% analytic gradient against central differences on a tiny model
tiny = ModelConfig(grid=HashGridConfig(levels=2, table_size=16, base_resolution=2), hidden_width=8)
model = NerfModel(tiny, seed=3)
model.params[:] += rng.normal(0, 0.3, model.n_params)
origins = np.array([[0.0, -2.0, 0.1], [1.8, 0.5, 0.0]])
dirs = -origins / np.linalg.norm(origins, axis=1, keepdims=True)
gt = rng.random((2, 3))
cfg = RenderConfig(near=0.5, far=3.5, samples_per_ray=16)
t, deltas = sample_depths(2, cfg, rng)
_, grad = loss_and_gradients(model, origins, dirs, gt, cfg, t=t, deltas=deltas)

h = 1e-6
for i in rng.choice(np.flatnonzero(grad), 5, replace=False):
    keep = model.params[i]
    model.params[i] = keep + h
    up, _ = loss_and_gradients(model, origins, dirs, gt, cfg, t=t, deltas=deltas)
    model.params[i] = keep - h
    down, _ = loss_and_gradients(model, origins, dirs, gt, cfg, t=t, deltas=deltas)
    model.params[i] = keep
    print(f"param {i:4d}: analytic {grad[i]: .6e}  finite-diff {(up - down) / (2 * h): .6e}")
