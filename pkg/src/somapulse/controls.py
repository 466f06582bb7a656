"""Pulse parametrisations.

Numerical pulses use a sine-series (Fourier) ansatz per control field. The
analytic families (DRAG, STIRAP, BB1, CORPSE, Molmer-Sorensen envelopes) are
built from a truncated Gaussian whose area is normalised to a requested
rotation angle.

Complex waveforms returned by the analytic families are Rabi amplitudes
``c(t)`` multiplying the lowering operator of the transition they drive, i.e.
``H = c/2 |0><1| + c*/2 |1><0|`` for a qubit, so that a real area ``theta``
yields a rotation by ``theta``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from math import erf, sqrt, pi

import numpy as np


class TimeOutOfRange(ValueError):
    pass


class NonpositiveWidth(ValueError):
    pass


class ZeroAnharmonicity(ValueError):
    pass


# ---------------------------------------------------------------------------
# Fourier ansatz


@dataclass
class FourierCoeffs:
    """``u_j(t) = scale * sum_k x[k, j] sin(k pi t / T)``, ``x`` shaped ``(K, M)``."""

    x: np.ndarray
    scale: float = 1.0
    T: float = 1.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim != 2:
            raise ValueError("x must be a (K, M) array")

    @property
    def K(self) -> int:
        return self.x.shape[0]

    @property
    def M(self) -> int:
        return self.x.shape[1]

    def flat(self) -> np.ndarray:
        """Field-major layout ``[x_11..x_K1, x_12..x_K2, ...]``."""
        return self.x.T.ravel().copy()

    @classmethod
    def from_flat(cls, flat, K: int, M: int, scale: float = 1.0, T: float = 1.0) -> "FourierCoeffs":
        return cls(np.asarray(flat, dtype=float).reshape(M, K).T, scale, T)


def flat_to_km(flat: np.ndarray, K: int, M: int) -> np.ndarray:
    """Field-major flat vectors ``(..., K*M)`` to ``(..., K, M)`` coefficient arrays."""
    flat = np.asarray(flat)
    return np.swapaxes(flat.reshape(flat.shape[:-1] + (M, K)), -1, -2)


def km_to_flat(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    return np.swapaxes(x, -1, -2).reshape(x.shape[:-2] + (-1,))


def eval_fourier(c: FourierCoeffs, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > c.T):
        raise TimeOutOfRange(f"t outside [0, {c.T}]")
    k = np.arange(1, c.K + 1)
    basis = np.sin(np.multiply.outer(t, k) * np.pi / c.T)
    return c.scale * basis @ c.x


def midpoints(T: float, n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) * (T / n)


def fourier_basis(n_evo: int, K: int) -> np.ndarray:
    """Midpoint-sampled sine basis ``B[i, k] = sin((k+1) pi (i + 1/2) / N)``; independent of ``T``."""
    frac = (np.arange(n_evo) + 0.5) / n_evo
    return np.sin(np.pi * np.outer(frac, np.arange(1, K + 1)))


# ---------------------------------------------------------------------------
# Gaussian envelope


@dataclass
class GaussianEnvelope:
    t1: float
    t2: float
    theta: float
    sigma: float | None = None

    def __post_init__(self):
        if self.sigma is None:
            self.sigma = (self.t2 - self.t1) / 6.0
        if self.sigma <= 0:
            raise NonpositiveWidth("Gaussian width must be positive")

    @property
    def mid(self) -> float:
        return 0.5 * (self.t1 + self.t2)

    @property
    def amplitude(self) -> float:
        half = 0.5 * (self.t2 - self.t1)
        norm = self.sigma * sqrt(pi) * erf(half / self.sigma)
        return self.theta / norm


def gaussian(p: GaussianEnvelope, t) -> np.ndarray:
    """Truncated Gaussian ``A exp(-(t - mid)^2 / sigma^2)`` on ``[t1, t2]`` with area ``theta``."""
    t = np.asarray(t, dtype=float)
    inside = (t >= p.t1) & (t <= p.t2)
    return np.where(inside, p.amplitude * np.exp(-((t - p.mid) ** 2) / p.sigma**2), 0.0)


def gaussian_derivative(p: GaussianEnvelope, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return -2.0 * (t - p.mid) / p.sigma**2 * gaussian(p, t)


def sampled_envelope(p: GaussianEnvelope, T: float, n: int, exact_area: bool = True) -> np.ndarray:
    """Envelope at the ``n`` grid midpoints of ``[0, T]``.

    With ``exact_area`` the samples are rescaled so that the midpoint sum
    ``sum(p) * dt`` equals ``theta`` exactly.
    """
    t = midpoints(T, n)
    v = gaussian(p, t)
    if exact_area:
        s = v.sum() * (T / n)
        if s != 0:
            v = v * (p.theta / s)
    return v


# ---------------------------------------------------------------------------
# analytic families


def drag_waveforms(Omega1, Omega2, alpha, delta, theta1, theta2, T, n_samples):
    """DRAG pulse on the midpoint grid.

    Returns complex ``(u1, u2)``: ``u1`` is the Gaussian envelope of area
    ``theta1`` and ``u2 = i dp/dt / alpha``, both carrying the frame factor
    ``e^{i theta2} e^{i delta t}``. ``Omega1``/``Omega2`` weight the 0-1 and
    1-2 transitions and are returned alongside for the propagator.
    """
    if alpha == 0:
        raise ZeroAnharmonicity("DRAG needs a nonzero anharmonicity")
    env = GaussianEnvelope(0.0, T, theta1)
    t = midpoints(T, n_samples)
    p = gaussian(env, t)
    dp = gaussian_derivative(env, t)
    frame = np.exp(1j * theta2 + 1j * delta * t)
    u1 = frame * p
    u2 = 1j * frame * dp / alpha
    return t, u1, u2, (Omega1, Omega2)


@dataclass
class Segment:
    t_start: float
    t_end: float
    area: float
    phase: float
    sense: int = 1
    shape: str = "gaussian"


@dataclass
class SegmentedPulse:
    segments: list[Segment]
    T: float
    Omega: float = 1.0

    def __post_init__(self):
        edges = [self.segments[0].t_start] + [s.t_end for s in self.segments]
        if abs(edges[0]) > 1e-12 or abs(edges[-1] - self.T) > 1e-12:
            raise ValueError("segments must cover [0, T]")
        for a, b in zip(self.segments[:-1], self.segments[1:]):
            if abs(a.t_end - b.t_start) > 1e-12:
                raise ValueError("segments must be contiguous")

    def signed_areas(self) -> np.ndarray:
        return np.array([s.sense * s.area for s in self.segments])

    def sample(self, n: int, exact_area: bool = True) -> np.ndarray:
        """Complex Rabi amplitude at the ``n`` grid midpoints.

        Each segment (Gaussian or constant, per ``shape``) is normalised to
        its own area over the grid points that fall inside it.
        """
        t = midpoints(self.T, n)
        dt = self.T / n
        out = np.zeros(n, dtype=complex)
        for k, seg in enumerate(self.segments):
            last = k == len(self.segments) - 1
            mask = (t >= seg.t_start) & ((t <= seg.t_end) if last else (t < seg.t_end))
            if seg.shape == "square":
                v = np.full(int(mask.sum()), seg.area / (seg.t_end - seg.t_start))
            else:
                v = gaussian(GaussianEnvelope(seg.t_start, seg.t_end, seg.area), t[mask])
            if exact_area and v.sum() != 0:
                v = v * (seg.area / (v.sum() * dt))
            out[mask] = self.Omega * seg.sense * v * np.exp(1j * seg.phase)
        return out


def bb1_sequence(theta1: float, theta2: float, Omega: float = 1.0, T: float = 1.0) -> SegmentedPulse:
    """Broad-band-1 composite rotation by ``theta1`` about the axis at phase ``theta2``."""
    chi = np.arccos(-theta1 / (4 * np.pi))
    q = T / 4
    segs = [
        Segment(0.0, q, theta1, theta2),
        Segment(q, 2 * q, np.pi, theta2 + chi),
        Segment(2 * q, 3 * q, 2 * np.pi, theta2 + 3 * chi),
        Segment(3 * q, T, np.pi, theta2 + chi),
    ]
    return SegmentedPulse(segs, T, Omega)


def corpse_angles(theta1: float) -> tuple[float, float, float]:
    k = np.arcsin(np.sin(theta1 / 2) / 2)
    return 2 * np.pi + theta1 / 2 - k, 2 * np.pi - 2 * k, theta1 / 2 - k


def corpse_sequence(theta1: float, theta2: float, Omega: float = 1.0, T: float = 1.0,
                    layout: str = "constant_rabi") -> SegmentedPulse:
    """CORPSE: three rotations, the middle one with reversed rotation sense.

    ``layout="constant_rabi"`` uses flat segments with durations proportional
    to their angles (one Rabi rate throughout, which the off-resonance
    cancellation assumes). ``layout="thirds"`` places Gaussian segments on
    equal thirds of ``T``.
    """
    areas = corpse_angles(theta1)
    if layout == "thirds":
        edges = [0.0, T / 3, 2 * T / 3, T]
        shape = "gaussian"
    elif layout == "constant_rabi":
        edges = list(np.concatenate([[0.0], np.cumsum(areas)]) * (T / sum(areas)))
        edges[-1] = T
        shape = "square"
    else:
        raise ValueError(f"unknown layout {layout!r}")
    segs = [
        Segment(edges[i], edges[i + 1], areas[i], theta2, sense=-1 if i == 1 else 1, shape=shape)
        for i in range(3)
    ]
    return SegmentedPulse(segs, T, Omega)


def stirap_waveforms(Omega1, Omega2, Delta, theta, T, n_samples, sigma_frac: float = 0.25):
    """Counter-intuitive STIRAP pair: Stokes ``u2`` on ``[0, 2T/3]`` precedes pump ``u1`` on ``[T/3, T]``.

    Both envelopes have width ``sigma = sigma_frac * 2T/3``; the default
    gives the two pulses enough overlap for adiabatic following.
    """
    t = midpoints(T, n_samples)
    sigma = sigma_frac * 2 * T / 3
    pump = GaussianEnvelope(T / 3, T, np.pi, sigma)
    stokes = GaussianEnvelope(0.0, 2 * T / 3, np.pi, sigma)
    u1 = Omega1 * np.exp(1j * theta) * gaussian(pump, t) * np.exp(1j * Delta * t)
    u2 = Omega2 * gaussian(stokes, t) * np.exp(-1j * Delta * t)
    return t, u1, u2


def ms_waveforms(Omega1, Omega2, delta_ms, theta1, theta2, T, n_samples):
    """Molmer-Sorensen bichromatic envelopes (shape only, no phonon dynamics)."""
    t = midpoints(T, n_samples)
    env = gaussian(GaussianEnvelope(0.0, T, theta1), t)
    u1 = Omega1 * env * np.exp(1j * theta2) * np.exp(1j * delta_ms * t)
    u2 = Omega2 * env * np.exp(-1j * delta_ms * t)
    return t, u1, u2


def write_waveform_csv(path, t, fields_: list[np.ndarray]) -> None:
    """CSV with columns ``t, field_1, ..., field_M`` (complex fields split into re/im)."""
    header = ["t"]
    cols = [np.asarray(t, dtype=float)]
    for j, f in enumerate(fields_, start=1):
        f = np.asarray(f)
        if np.iscomplexobj(f):
            header += [f"field_{j}_re", f"field_{j}_im"]
            cols += [f.real, f.imag]
        else:
            header.append(f"field_{j}")
            cols.append(f.astype(float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([f"{v:.17g}" for v in row])
