# %% [markdown]
# # Hash-grid encoding and the radiance field
#
# Positions are normalised into the unit cube, looked up in 8 hashed feature
# grids and fed (with the view direction) to a 2x64 ReLU MLP.

# %%
import numpy as np

from streamnerf import hashgrid
from streamnerf.hashgrid import HashGridConfig
from streamnerf.model import ModelConfig, NerfModel

cfg = HashGridConfig()
print("levels", cfg.levels, "resolutions", list(cfg.resolutions), "feature dim", cfg.output_dim)

rng = np.random.default_rng(0)
tables = rng.normal(size=(cfg.levels, cfg.table_size, cfg.features_per_level))
x = rng.random((1000, 3))
slow = hashgrid.encode(cfg, tables, x)
fast = hashgrid.encode_fast(cfg, tables, x)
print("numpy and compiled backends agree:", np.array_equal(slow, fast))

# %% the full field
model = NerfModel(ModelConfig(), seed=0)
print("parameters:", model.n_params)
for name in ("tables", "w1", "b1", "w2", "b2", "w3", "b3"):
    sl = model.param_slice(name)
    print(f"  {name:6s} {sl.stop - sl.start}")

sigma, rgb = model.query(np.zeros((1, 3)), np.array([[0.0, 0.0, 1.0]]))
print("untrained density at the origin", sigma, "color", rgb)
