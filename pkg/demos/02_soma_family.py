"""One network for a whole family of problems, against robust GRAPE.

Small sizes so the script finishes in about a minute: detuning varies over
+-20 MHz, and everything else is fixed.
"""
# %%
import numpy as np

from somapulse.evalspace import ParameterSpace, axis_sweep, sample_uniform
from somapulse.optim import LbfgsConfig, RestartPolicy
from somapulse.soma import (FixedPulseModel, QocClass, SomaBpConfig, draw_test_set, evaluate_model, random_guess,
                            robust_grape, soma_bp)

space = ParameterSpace(("delta", "alpha", "T"), [0.0, -0.34, 10.0], [-0.02, -0.34, 10.0], [0.02, -0.34, 10.0])
qoc = QocClass("qutrit", "R1", space, n_evo=200, K=4, scale=0.01)
test = draw_test_set(qoc, 200, 0)

# %% [markdown]
# Robust GRAPE: a single pulse that maximizes the mean fidelity over 40 sampled
# detunings.

# %%
lams = sample_uniform(space, 40, 0)
rg = min((robust_grape(qoc, lams, random_guess(qoc, s), LbfgsConfig(max_iter=300)) for s in range(3)),
         key=lambda r: r.infidelity)
ev_rg = evaluate_model(FixedPulseModel(rg.x), qoc, test)
print(f"robust GRAPE: mean test infidelity {ev_rg.mean_infidelity:.2e}")

# %% [markdown]
# SOMA with backpropagation: a small MLP maps the normalized detuning to the
# pulse and is trained through the dynamics on the same 40 problems.

# %%
cfg = SomaBpConfig(n_samples=40, max_iter=400, restart=RestartPolicy(2, 0, "test_infidelity"), n_test=200)
res = soma_bp(qoc, cfg, net_shape=(16, 16), test_lams=test)
ev_bp = evaluate_model(res.model, qoc, test)
print(f"SOMA BP:      mean test infidelity {ev_bp.mean_infidelity:.2e} (std {ev_bp.std_infidelity:.1e})")

# %% [markdown]
# Across the detuning range the network adapts its pulse; the fixed pulse can
# only trade accuracy at the centre for accuracy at the edges.

# %%
for name, model in (("robust", FixedPulseModel(rg.x)), ("soma-bp", res.model)):
    sw = axis_sweep(lambda l: evaluate_model(model, qoc, l).infidelities, space, "delta", 7)
    print(f"{name:>8}: " + "  ".join(f"{v:.1e}" for v in sw.infidelity))
print("delta (MHz):", np.round(sw.values * 1e3, 1))
