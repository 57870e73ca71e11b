# %% [markdown]
# # Open-set base branch
#
# Each base class owns reciprocal points that sit in the space the class is
# *not*. A sample belongs to the class it is farthest from, and the softmax
# over those distances gives a confidence. Below the threshold the sample
# is rejected as unknown.

# %%
import numpy as np

from hyperfscil.backbone import BackboneConfig
from hyperfscil.data import generate_synthetic
from hyperfscil.hyper_rpl import RplLossConfig, base_decide, evaluate_known_unknown, train_base_session
from hyperfscil.hyperbolic import BallConfig
from hyperfscil.state import TrainConfig

data = generate_synthetic(num_classes=8, train_per_class=50, test_per_class=20, dim=8, separation=8.0, seed=1)
known, unknown = [0, 1, 2, 3, 4, 5], [6, 7]
train = np.isin(data.y, known) & (data.split == "train")

# %%
state = train_base_session(
    data.x[train], data.y[train], known,
    BackboneConfig(input_dim=8, hidden_dims=(32,), embed_dim=16),
    BallConfig(0.1), RplLossConfig(beta=0.7), TrainConfig(), seed=0,
)
print("loss, first and last epoch:", round(state.base_loss_history[0], 3), round(state.base_loss_history[-1], 3))

# %% Known vs unknown at a few thresholds.
test = data.split == "test"
kx, ky = data.x[test & np.isin(data.y, known)], data.y[test & np.isin(data.y, known)]
ux = data.x[test & np.isin(data.y, unknown)]
for threshold in (0.5, 0.75, 0.9):
    k, u = evaluate_known_unknown(state, kx, ky, ux, threshold)
    print(f"threshold {threshold}: known acc {100 * k:5.1f}%  unknown rejected {100 * u:5.1f}%")

# %% A handful of raw decisions (-1 means unknown).
print("unknown-class samples ->", base_decide(state, ux[:10]))
