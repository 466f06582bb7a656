"""GRAPE on one transmon problem, and how fast a fixed pulse degrades away from it.

Run with ``python demos/01_grape_single_problem.py``.
"""
# %%
import numpy as np

from somapulse.controls import FourierCoeffs
from somapulse.engine import PropagationGrid, fidelity, grape_gradient, propagate
from somapulse.evalspace import ParameterSpace, axis_sweep
from somapulse.models import QutritModel, QutritParams, target_gate
from somapulse.optim import LbfgsConfig, RestartPolicy
from somapulse.soma import FixedPulseModel, QocClass, evaluate_model, grape_with_restarts

# %% [markdown]
# A qutrit with 0 detuning, -340 MHz anharmonicity and a 10 ns gate. The control
# is 4 sine modes on each quadrature, so the whole pulse is 8 numbers.

# %%
space = ParameterSpace(("delta", "alpha", "T"), [0.0, -0.34, 10.0], [-0.04, -0.44, 5.0], [0.04, -0.24, 20.0])
qoc = QocClass("qutrit", "R1", space, n_evo=500, K=4, scale=0.01)
out = grape_with_restarts(qoc, qoc.center()[None], LbfgsConfig(max_iter=500), RestartPolicy(5, 0))
best = out.best
print(f"R1(pi/2) at the centre: infidelity {best.infidelity:.2e} after {best.n_iter} L-BFGS iterations")
print("coefficients (K x M):\n", np.round(best.x, 3))

# %% [markdown]
# The analytic gradient against central differences on a random pulse. The bias
# is second order in dt, so ten times more steps should give about 100x less error.

# %%
p = QutritParams(delta=0.01, alpha=-0.3, phi=0.0, theta=np.pi / 2, T=10.0, scale=0.01)
x = np.random.default_rng(0).normal(size=(4, 2)) * 8
G = target_gate("R1", (np.pi / 2,))
for n in (500, 5000):
    grid = PropagationGrid(n, p.T)
    _, g = grape_gradient(QutritModel(), p, FourierCoeffs(x, 0.01, p.T), G, grid)
    fd = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        for s in (1, -1):
            y = x.copy()
            y[idx] += s * 1e-6
            fd[idx] += s * fidelity(propagate(QutritModel(), p, FourierCoeffs(y, 0.01, p.T), grid).U_final, G) / 2e-6
    print(f"N={n:5d}: max |analytic - fd| / max |fd| = {np.max(np.abs(g.dF_dx - fd)) / np.max(np.abs(fd)):.1e}")

# %% [markdown]
# The optimal pulse is only optimal at the centre. Sweeping one parameter at a
# time shows how quickly it breaks. (The T grid runs 5..20 ns and does not
# contain the 10 ns centre.)

# %%
model = FixedPulseModel(best.x)


def evaluate(lams):
    return evaluate_model(model, qoc, lams).infidelities


for axis in space.names:
    sw = axis_sweep(evaluate, space, axis, 9)
    row = "  ".join(f"{v:.1e}" for v in sw.infidelity)
    print(f"{axis:>5}: {row}")
