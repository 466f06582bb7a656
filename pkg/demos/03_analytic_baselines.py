"""The analytic pulse families: what each one is robust against."""
# %%
import numpy as np

from somapulse import baselines as bl

# %% [markdown]
# BB1 cancels amplitude errors: the infidelity falls as the sixth power of
# the relative error, against the second power for a plain pulse.

# %%
c = bl.bb1_sweep(np.logspace(-3, -1, 7))
for e, a, b in zip(c.values, c.infidelity, c.reference):
    print(f"dOmega/Omega={e:.0e}  BB1 {a:.1e}  plain {b:.1e}")
print(f"slopes: BB1 {bl.loglog_slope(c.values, c.infidelity):.2f}, plain {bl.loglog_slope(c.values, c.reference):.2f}")

# %% [markdown]
# CORPSE does the same for detuning, with three segments at one Rabi rate.

# %%
c = bl.corpse_sweep(np.array([1e-3, 5e-3, 1e-2, 2e-2]))
for d, a, b in zip(c.values, c.infidelity, c.reference):
    print(f"detuning {d * 1e3:4.0f} MHz  CORPSE {a:.1e}  plain {b:.1e}")

# %% [markdown]
# STIRAP moves population 0 -> 2 through a ladder, hardly touching the middle
# level when the pulses overlap adiabatically.

# %%
for om in (5.0, 20.0, 40.0):
    r = bl.stirap_transfer(om, om)
    print(f"Omega={om:4.0f}: transfer {r.transfer:.4f}, max intermediate population {r.max_intermediate:.3f}")

# %% [markdown]
# DRAG adds a derivative quadrature that keeps a transmon pi pulse inside the
# qubit subspace.

# %%
for T in (4.0, 6.0, 8.0, 12.0):
    d = bl.drag_compare(T=T)
    print(f"T={T:4.1f} ns: leakage DRAG {d.leakage_drag:.1e}, Gaussian {d.leakage_plain:.1e} ({d.reduction:.0f}x)")
