"""Approximating controlled rotations with {CNOT, T, S, H} circuits."""
# %%
import numpy as np

from somapulse.decompose import circuit_unitary, cr_target, exhaustive_search, gate_fidelity, stochastic_descent

# %% [markdown]
# pi/4 is special: five gates reproduce it exactly.

# %%
r = exhaustive_search(cr_target(np.pi / 4), 5)
print("CR(pi/4):", " ".join(r.circuit), f"F = {r.fidelity:.12f}")

# %% [markdown]
# Irrational angles are only approximated. Exhaustive search over every
# circuit up to 10 gates, and hill climbing with restarts, find the same best
# fidelities.

# %%
print(f"{'angle':>11} {'exhaustive':>11} {'stochastic':>11}  N_CNOT N_T N_S N_H  circuit")
for k in (2, 3, 5, 7):
    T = cr_target(np.pi / np.sqrt(k))
    e = exhaustive_search(T, 10)
    s = stochastic_descent(T, 10, seed=0)
    n = e.counts
    print(f"pi/sqrt({k}) {e.fidelity:11.4f} {s.fidelity:11.4f}  {n[0]:6d} {n[1]:3d} {n[2]:3d} {n[3]:3d}  {' '.join(e.circuit)}")

# %% [markdown]
# Exhaustive search stops at depth 10; the stochastic search can look at up to 20
# gates. For this angle the longer circuits do no better.

# %%
T = cr_target(np.pi / np.sqrt(5))
s = stochastic_descent(T, 20, seed=1, max_moves=300_000)
assert s.fidelity == gate_fidelity(circuit_unitary(s.circuit), T)
print(f"pi/sqrt(5), depth <= 20: F = {s.fidelity:.4f} with {s.depth} gates")
