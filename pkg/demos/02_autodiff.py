# %% [markdown]
# # A small reverse-mode autodiff engine
#
# Every loss in the package is built from `DiffValue` nodes. `backward_grad`
# fills in `.grad`, and `finite_difference_check` compares those gradients
# with central differences.

# %%
import numpy as np

from hyperfscil import diffmath as dm
from hyperfscil.diffmath import DiffValue, ParameterStore, backward_grad, sgd_step
from hyperfscil.hyperbolic import BallConfig, exp_map_origin, poincare_distance

# %% Scalars first.
x, y = DiffValue(2.0), DiffValue(5.0)
backward_grad(x * y + dm.softplus(x))
print("d/dx =", x.grad, " d/dy =", y.grad)

# %% Gradients flow through the hyperbolic distance too.
ball = BallConfig(0.5)
params = ParameterStore({"u": np.array([0.4, -0.2, 0.1]), "w": np.array([-0.3, 0.5, 0.2])})


def loss(p):
    return poincare_distance(exp_map_origin(p["u"], ball), exp_map_origin(p["w"], ball), ball)


report = dm.finite_difference_check(loss, params)
print("max relative error per tensor:", report.max_rel_error)

# %% Pull two points together with plain SGD on the squared distance.
params.weight_decay, params.momentum = 0.0, 0.0
for step in range(6):
    value = loss(params)
    backward_grad(value * value)
    sgd_step(params, epoch=0)
    print(f"step {step}: distance {float(value.value):.4f}")
