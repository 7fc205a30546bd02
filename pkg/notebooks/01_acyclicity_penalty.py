# ## Acyclicity penalties on small graphs

import numpy as np

from tearlearn import AcyclicityMode, TrainConfig, h_exp, h_poly, train_linear

# A three-node chain is a DAG, so both penalties vanish.

chain = np.array([[0, 1.5, 0], [0, 0, -0.7], [0, 0, 0]])
h_exp(chain), h_poly(chain)

# Closing the chain into a loop makes them positive. The polynomial form with
# the default gamma = 1/d is much smaller than the exponential one.

loop = chain.copy()
loop[2, 0] = 0.4
print(h_exp(loop), h_poly(loop), h_poly(loop, 1.0))

# Penalty as the back edge grows

for w in (0.01, 0.1, 0.5, 1.0, 2.0):
    loop[2, 0] = w
    print(f"{w:5.2f}  exp {h_exp(loop):.3e}  poly {h_poly(loop):.3e}")

# ## Fitting a linear model

rng = np.random.default_rng(0)
n = 1000
x0 = rng.normal(size=n)
x1 = 0.8 * x0 + rng.normal(size=n)
x2 = -0.6 * x1 + rng.normal(size=n)
X = np.column_stack([x0, x1, x2])
X = (X - X.mean(0)) / X.std(0)

res = train_linear(X, TrainConfig(grad_clip=1.0, seed=0))
np.round(res.a_best, 3)

# The penalty rarely reaches zero exactly; whatever is left is the reason a
# post-processing step is needed.

res.final_h, res.converged

res_poly = train_linear(X, TrainConfig(grad_clip=1.0, h_mode=AcyclicityMode("poly")))
res_poly.final_h
