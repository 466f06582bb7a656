"""Problem-parameter boxes: uniform sampling, unit-cube normalization and sweeps.

A :class:`ParameterSpace` names ``D`` problem parameters with a centre and
``[lo, hi]`` bounds. Dimensions with ``lo == hi`` are frozen; they take the
value 0.5 in normalized coordinates and are ignored by distances.

Sweeps evaluate a *pulse model*: any object with ``predict(lams) -> x``
mapping ``(n, D)`` physical parameter rows to ``(n, K, M)`` coefficients,
via an ``evaluate`` callback ``(lams, x) -> infidelities``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class OutOfBounds(ValueError):
    pass


class RadiusExceedsBox(ValueError):
    pass


class UnknownAxis(KeyError):
    pass


@dataclass(frozen=True)
class ParameterSpace:
    names: tuple[str, ...]
    center: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        for k in ("center", "lo", "hi"):
            object.__setattr__(self, k, np.asarray(getattr(self, k), dtype=float).copy())
        D = len(self.names)
        if not (self.center.shape == self.lo.shape == self.hi.shape == (D,)):
            raise ValueError("names, center, lo and hi must have equal length")
        if np.any(self.lo > self.center) or np.any(self.center > self.hi):
            raise ValueError("need lo <= center <= hi component-wise")

    @classmethod
    def from_dict(cls, spec: dict) -> "ParameterSpace":
        """``{name: {center, lo, hi}}`` or ``{name: center}`` (frozen)."""
        names, c, lo, hi = [], [], [], []
        for name, v in spec.items():
            if isinstance(v, dict):
                ctr = float(v["center"])
                names.append(name)
                c.append(ctr)
                lo.append(float(v.get("lo", ctr)))
                hi.append(float(v.get("hi", ctr)))
            else:
                names += [name]
                c += [float(v)]
                lo += [float(v)]
                hi += [float(v)]
        return cls(tuple(names), np.array(c), np.array(lo), np.array(hi))

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def frozen_mask(self) -> np.ndarray:
        return self.lo == self.hi

    @property
    def active(self) -> np.ndarray:
        return ~self.frozen_mask

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownAxis(name) from None

    def as_dicts(self, lams) -> list[dict]:
        return [dict(zip(self.names, map(float, row))) for row in np.atleast_2d(lams)]


def sample_uniform(space: ParameterSpace, n: int, seed: int) -> np.ndarray:
    """``(n, D)`` rows uniform on the box; frozen columns are exactly constant."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.random((n, space.dim))
    out = space.lo + u * (space.hi - space.lo)
    out[:, space.frozen_mask] = space.lo[space.frozen_mask]
    return out


def normalize(space: ParameterSpace, lam) -> np.ndarray:
    """Affine map of the box onto ``[0, 1]^D`` (frozen dims to 0.5). Out-of-box points raise."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < space.lo) or np.any(lam > space.hi):
        raise OutOfBounds("parameter vector outside the box")
    width = space.hi - space.lo
    frozen = space.frozen_mask
    safe = np.where(frozen, 1.0, width)
    return np.where(frozen, 0.5, (lam - space.lo) / safe)


def denormalize(space: ParameterSpace, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if np.any(z < 0) or np.any(z > 1):
        raise OutOfBounds("normalized point outside the unit cube")
    out = space.lo + z * (space.hi - space.lo)
    return np.where(space.frozen_mask, space.lo, out)


def r_max(space: ParameterSpace) -> float:
    """Radius of the largest normalized sphere around the centre (active dims) inside the cube."""
    zc = normalize(space, space.center)[space.active]
    if zc.size == 0:
        return 0.0
    return float(np.min(np.minimum(zc, 1.0 - zc)))


def sphere_points(space: ParameterSpace, r: float, n: int, seed: int, max_tries: int = 1000) -> np.ndarray:
    """``n`` normalized points at distance ``r`` from the centre over the active dims.

    Directions are normalized Gaussian vectors; points leaving the cube are
    redrawn (none do while ``r <= r_max``).
    """
    zc = normalize(space, space.center)
    act = np.flatnonzero(space.active)
    if r < 0:
        raise ValueError("radius must be non-negative")
    if r > 0 and act.size == 0:
        raise RadiusExceedsBox("no active dimension")
    if r > r_max(space) + 1e-12:
        raise RadiusExceedsBox(f"r={r} exceeds inscribed radius {r_max(space)}")
    rng = np.random.default_rng(seed)
    pts = np.tile(zc, (n, 1))
    if r == 0:
        return pts
    todo = np.arange(n)
    for _ in range(max_tries):
        g = rng.standard_normal((todo.size, act.size))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        trial = np.tile(zc, (todo.size, 1))
        trial[:, act] += r * g
        ok = np.all((trial >= 0) & (trial <= 1), axis=1)
        pts[todo[ok]] = trial[ok]
        todo = todo[~ok]
        if todo.size == 0:
            return pts
    raise RadiusExceedsBox("rejection sampling starved")


@dataclass
class RadialSweepReport:
    radii: np.ndarray
    radii_rel: np.ndarray
    mean_infidelity: np.ndarray
    std_infidelity: np.ndarray
    n_per_radius: int


Evaluator = Callable[[np.ndarray], np.ndarray]


def radial_sweep(evaluate: Evaluator, space: ParameterSpace, radii: Sequence[float],
                 n_per_radius: int = 1000, seed: int = 0) -> RadialSweepReport:
    """Mean/std infidelity on normalized spheres; ``radii`` in absolute normalized units.

    ``evaluate`` maps physical parameter rows ``(n, D)`` to infidelities.
    The sampler for radius ``i`` uses seed ``seed + i``.
    """
    radii = np.asarray(radii, dtype=float)
    rm = r_max(space)
    means, stds = [], []
    for i, r in enumerate(radii):
        z = sphere_points(space, float(r), n_per_radius, seed + i)
        lams = np.array([denormalize(space, row) for row in z])
        inf = np.asarray(evaluate(lams), dtype=float)
        means.append(inf.mean())
        stds.append(inf.std())
    rel = radii / rm if rm > 0 else np.zeros_like(radii)
    return RadialSweepReport(radii, rel, np.array(means), np.array(stds), n_per_radius)


@dataclass
class AxisSweep:
    axis: str
    values: np.ndarray
    infidelity: np.ndarray


def axis_points(space: ParameterSpace, axis: str, n_points: int) -> np.ndarray:
    i = space.index(axis)
    if space.frozen_mask[i]:
        raise UnknownAxis(f"{axis} is frozen")
    vals = np.linspace(space.lo[i], space.hi[i], n_points)
    lams = np.tile(space.center, (n_points, 1))
    lams[:, i] = vals
    return lams


def axis_sweep(evaluate: Evaluator, space: ParameterSpace, axis: str, n_points: int = 41) -> AxisSweep:
    """Vary one active axis across ``[lo, hi]`` with the others at the centre."""
    lams = axis_points(space, axis, n_points)
    return AxisSweep(axis, lams[:, space.index(axis)], np.asarray(evaluate(lams), dtype=float))


def write_sweep_csv(path, x, mean, std, n, comments: Sequence[str] = ()) -> None:
    """Columns ``radius_or_value, mean_infidelity, std_infidelity, n``, after optional ``# ...`` lines."""
    n = np.broadcast_to(np.asarray(n), np.shape(x))
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh)
        w.writerow(["radius_or_value", "mean_infidelity", "std_infidelity", "n"])
        for a, b, c, d in zip(x, mean, std, n):
            w.writerow([f"{a:.17g}", f"{b:.17g}", f"{c:.17g}", int(d)])
