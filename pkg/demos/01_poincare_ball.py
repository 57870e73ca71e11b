# %% [markdown]
# # Geometry of the Poincare ball
#
# Points live inside a ball of radius 1/sqrt(c). Distances grow without
# bound as points approach the edge, which is what lets a small ball hold
# tree-like structure.

# %%
import numpy as np

from hyperfscil.hyperbolic import (
    BallConfig,
    conformal_factor,
    exp_map_origin,
    log_map_origin,
    mobius_add,
    poincare_distance,
)

ball = BallConfig(curvature=1.0)

# %% Mobius addition is the ball's version of vector addition.
x = np.array([0.5, 0.0])
print("x (+) x       =", mobius_add(x, x, ball))  # (0.8, 0), not (1, 0)
print("(-x) (+) x    =", mobius_add(-x, x, ball))

# %% Same Euclidean gap, very different hyperbolic distance.
for r in (0.0, 0.5, 0.9, 0.99):
    a, b = np.array([r, 0.0]), np.array([r, 0.01])
    print(f"r={r:4}: euclid 0.0100  hyperbolic {poincare_distance(a, b, ball):.4f}  "
          f"conformal factor {conformal_factor(a, ball):.1f}")

# %% The exponential map at the origin takes any feature vector into the ball,
# and the log map brings it back.
v = np.array([3.0, -4.0])
p = exp_map_origin(v, ball)
print("exp(v) =", p, "norm", np.linalg.norm(p))
print("log(exp(v)) =", log_map_origin(p, ball))

# %% As curvature shrinks the ball flattens: distance tends to 2 * euclidean.
a, b = np.array([0.1, 0.0]), np.array([0.3, 0.0])
for c in (1.0, 0.1, 1e-3, 1e-6):
    print(f"c={c:g}: d={poincare_distance(a, b, BallConfig(c)):.6f}   (2|a-b| = 0.4)")
