# %% [markdown]
# # Novel branch: few-shot sessions with exemplar memory
#
# The novel branch starts as a copy of the base backbone. Each session adds
# a few classes from five samples each, distills the previous model on old
# logits and keeps a herded set of exemplars. Prediction is by nearest class
# mean of exemplar embeddings.

# %%
import numpy as np

from hyperfscil.backbone import BackboneConfig
from hyperfscil.data import generate_synthetic
from hyperfscil.hyper_rpl import RplLossConfig, train_base_session
from hyperfscil.hyperbolic import BallConfig
from hyperfscil.incremental import IncrementalLossConfig, herding_select, novel_predict, train_incremental_session
from hyperfscil.state import TrainConfig

# %% Herding picks samples whose running mean stays near the class mean.
points = np.array([[0.0], [1.0], [2.0], [5.0]])
print("herding order:", herding_select(points, points.mean(axis=0), budget=4))

# %%
data = generate_synthetic(10, 50, 20, 8, 8.0, seed=2)
rng = np.random.default_rng(0)
train, test = data.split == "train", data.split == "test"
base = [0, 1, 2, 3, 4, 5]
state = train_base_session(
    data.x[train & np.isin(data.y, base)], data.y[train & np.isin(data.y, base)], base,
    BackboneConfig(8, (32,), 16, frozen_prefix_layers=1), BallConfig(0.1), RplLossConfig(),
    TrainConfig(metric_start_session=2, metric_start_epoch=10), seed=0,
    incremental_cfg=IncrementalLossConfig(exemplar_budget=5),
)

# %% Two 2-way 5-shot sessions.
for session, classes in ((2, [6, 7]), (3, [8, 9])):
    idx = np.concatenate([rng.choice(np.flatnonzero(train & (data.y == c)), 5, replace=False) for c in classes])
    train_incremental_session(data.x[idx], data.y[idx], state, session, seed=0)
    seen = np.isin(data.y, state.novel_classes) & test
    acc = np.mean(novel_predict(state, data.x[seen]) == data.y[seen])
    print(f"session {session}: novel classes {state.novel_classes}, NME accuracy {100 * acc:.1f}%, "
          f"memory holds {len(state.memory)} exemplars")
