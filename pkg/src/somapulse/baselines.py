"""Analytic pulse families propagated on few-level models, with robustness sweeps.

Waveforms from :mod:`somapulse.controls` are complex Rabi amplitudes ``c(t)``
for a transition ``a <-> b`` (``a < b``): ``H = c/2 |a><b| + c*/2 |b><a|``.
Frequencies are cyclic (GHz) and times in ns; everything is multiplied by
``2 pi`` except the amplitudes, which are already angular (a real area
``theta`` rotates by ``theta``).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .controls import (
    GaussianEnvelope,
    bb1_sequence,
    corpse_angles,
    corpse_sequence,
    drag_waveforms,
    midpoints,
    sampled_envelope,
    stirap_waveforms,
)
from .engine import chain, prefix_products, step_unitaries
from .linalg import expm_i

TWO_PI = 2 * np.pi
FAMILIES = ("drag", "bb1", "corpse", "stirap")


@dataclass
class BaselineCurve:
    family: str
    axis: str
    values: np.ndarray
    infidelity: np.ndarray
    reference: np.ndarray | None = None


# ---------------------------------------------------------------------------
# propagation with complex transition amplitudes


def transition_controls(dim: int, transitions) -> np.ndarray:
    """Real control pair ``((L + L^dag)/2, i(L - L^dag)/2)`` per weighted transition ``(a, b, w)``."""
    ops = []
    for a, b, w in transitions:
        L = np.zeros((dim, dim), dtype=complex)
        L[a, b] = w
        ops.append((L + L.conj().T) / 2)
        ops.append(1j * (L - L.conj().T) / 2)
    return np.stack(ops)


def step_propagators(h0: np.ndarray, transitions, amps: np.ndarray, T: float) -> np.ndarray:
    """Per-step unitaries ``(N, d, d)`` for complex amplitudes ``amps (N, n_transitions)``."""
    amps = np.asarray(amps, dtype=complex).reshape(len(amps), -1)
    hc = transition_controls(h0.shape[0], transitions)
    u = np.stack([amps.real, amps.imag], axis=-1).reshape(len(amps), -1)
    dt = T / len(amps)
    return step_unitaries(h0[None], hc[None], u[None], np.array([dt]), "eig")[0]


def propagate_amplitudes(h0, transitions, amps, T) -> np.ndarray:
    return chain(step_propagators(h0, transitions, amps, T))


def qubit_infidelity(U: np.ndarray, G: np.ndarray) -> float:
    """``1 - |Tr(U G^dag)|^2/4`` from eigenphases (accurate far below machine epsilon)."""
    ph = np.angle(np.linalg.eigvals(U @ G.conj().T))
    return float(np.sin((ph[0] - ph[1]) / 2) ** 2)


def rotation(theta: float, phase: float) -> np.ndarray:
    """Ideal qubit rotation generated by a real area ``theta`` at drive phase ``phase``."""
    L = np.array([[0, np.exp(1j * phase)], [0, 0]])
    return expm_i((L + L.conj().T) / 2, theta)


# ---------------------------------------------------------------------------
# BB1: amplitude errors


def bb1_sweep(rel_errors, theta1: float = np.pi / 2, theta2: float = 0.0, T: float = 40.0,
              n: int = 4000) -> BaselineCurve:
    """Infidelity of BB1 and of the plain pulse ``theta1`` under ``Omega -> Omega (1 + e)``."""
    seq = bb1_sequence(theta1, theta2, 1.0, T)
    c = seq.sample(n)
    target = rotation(theta1, theta2)
    plain = sampled_envelope(GaussianEnvelope(0, T / 4, theta1), T / 4, n // 4) * np.exp(1j * theta2)
    h0 = np.zeros((2, 2), dtype=complex)
    tr = [(0, 1, 1.0)]
    inf, ref = [], []
    for e in np.asarray(rel_errors, dtype=float):
        inf.append(qubit_infidelity(propagate_amplitudes(h0, tr, (1 + e) * c, T), target))
        ref.append(qubit_infidelity(propagate_amplitudes(h0, tr, (1 + e) * plain, T / 4), target))
    return BaselineCurve("bb1", "rel_amplitude_error", np.asarray(rel_errors, float), np.array(inf), np.array(ref))


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# ---------------------------------------------------------------------------
# CORPSE: detuning errors


def corpse_sweep(detunings, theta1: float = np.pi / 2, theta2: float = 0.0, T: float = 20.0,
                 n: int = 4000, layout: str = "constant_rabi") -> BaselineCurve:
    """CORPSE vs a plain pulse of area ``theta1`` under detuning (GHz).

    With ``layout="constant_rabi"`` the comparator is a flat pulse at the
    same Rabi rate; with ``"thirds"`` it is a Gaussian over ``T/3``.
    """
    c = corpse_sequence(theta1, theta2, 1.0, T, layout).sample(n)
    if layout == "constant_rabi":
        rate = sum(corpse_angles(theta1)) / T
        Tp = theta1 / rate
        n_p = max(1, int(round(n * Tp / T)))
        plain = np.full(n_p, rate, dtype=complex)
    else:
        Tp = T / 3
        plain = sampled_envelope(GaussianEnvelope(0, Tp, theta1), Tp, n // 3).astype(complex)
    plain = plain * np.exp(1j * theta2)
    target = rotation(theta1, theta2)
    tr = [(0, 1, 1.0)]
    inf, ref = [], []
    for d in np.asarray(detunings, dtype=float):
        h0 = np.diag([0.0, TWO_PI * d]).astype(complex)
        inf.append(qubit_infidelity(propagate_amplitudes(h0, tr, c, T), target))
        ref.append(qubit_infidelity(propagate_amplitudes(h0, tr, plain, Tp), target))
    return BaselineCurve("corpse", "detuning", np.asarray(detunings, float), np.array(inf), np.array(ref))


# ---------------------------------------------------------------------------
# STIRAP: 0 -> 2 transfer in a three-level ladder


@dataclass
class StirapResult:
    transfer: float
    max_intermediate: float
    populations: np.ndarray  # (N + 1, 3) from |0>


def stirap_transfer(Omega1: float = 40.0, Omega2: float = 40.0, Delta: float = 0.0, theta: float = 0.0,
                    T: float = 100.0, n: int = 20000, sigma_frac: float = 0.25) -> StirapResult:
    """Population dynamics from ``|0>`` under the counter-intuitive pump/Stokes pair (resonant ladder).

    ``Omega1``, ``Omega2`` scale the envelope areas (``Omega * pi``).
    """
    _, u1, u2 = stirap_waveforms(Omega1, Omega2, TWO_PI * Delta, theta, T, n, sigma_frac)
    h0 = np.zeros((3, 3), dtype=complex)
    steps = step_propagators(h0, [(0, 1, 1.0), (1, 2, 1.0)], np.stack([u1, u2], axis=1), T)
    P = prefix_products(steps)
    pops = np.abs(P[:, :, 0]) ** 2
    return StirapResult(float(pops[-1, 2]), float(pops[:, 1].max()), pops)


# ---------------------------------------------------------------------------
# DRAG: leakage of a transmon qutrit


def leakage(U: np.ndarray) -> float:
    """Mean population outside ``{|0>, |1>}`` after starting in ``|0>`` or ``|1>``."""
    return float(np.sum(np.abs(U[2:, :2]) ** 2) / 2)


@dataclass
class DragComparison:
    leakage_drag: float
    leakage_plain: float
    infidelity_drag: float
    infidelity_plain: float

    @property
    def reduction(self) -> float:
        return self.leakage_plain / self.leakage_drag


def drag_compare(alpha: float = -0.34, theta1: float = np.pi, theta2: float = 0.0, T: float = 8.0,
                 delta: float = 0.0, n: int = 2000, bosonic: bool = True) -> DragComparison:
    """Leakage and subspace infidelity of DRAG vs the bare Gaussian at equal ``T`` (``alpha`` in GHz)."""
    a = TWO_PI * alpha
    _, u1, u2, (w1, w2) = drag_waveforms(1.0, np.sqrt(2.0) if bosonic else 1.0, a, TWO_PI * delta, theta1, theta2, T, n)
    h0 = np.diag([0.0, TWO_PI * delta, a - 2 * TWO_PI * delta]).astype(complex)
    tr = [(0, 1, w1), (1, 2, w2)]
    target = rotation(theta1, theta2)
    out = []
    for c in (u1 + u2, u1):
        U = propagate_amplitudes(h0, tr, np.stack([c, c], axis=1), T)
        tau = np.trace(U[:2, :2] @ target.conj().T)
        out.append((leakage(U), 1 - abs(tau) ** 2 / 4))
    return DragComparison(out[0][0], out[1][0], out[0][1], out[1][1])


def write_curve_csv(path, curve: BaselineCurve, comments=()) -> None:
    """Columns ``<axis>, infidelity[, reference_infidelity]``, after optional ``# ...`` lines."""
    head = [curve.axis, "infidelity"] + (["reference_infidelity"] if curve.reference is not None else [])
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh)
        w.writerow(head)
        for i, v in enumerate(curve.values):
            row = [v, curve.infidelity[i]] + ([curve.reference[i]] if curve.reference is not None else [])
            w.writerow([f"{x:.17g}" for x in row])
