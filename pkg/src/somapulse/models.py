"""Hamiltonians and target gates for the transmon qutrit and the coupled two-qutrit system.

Frequencies are taken in GHz and times in ns with hbar = 1. By default
(``angular=True``) every Hamiltonian term is multiplied by 2*pi, i.e. the
tabulated values are cyclic frequencies. ``angular=False`` uses the raw
numbers as angular frequencies.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .linalg import dag, expm_i

SQRT2 = np.sqrt(2.0)


class UnknownFamily(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# parameter records


class _ParamVector:
    """Field order doubles as the parameter-vector layout."""

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in self.names()], dtype=float)

    @classmethod
    def from_vector(cls, v):
        return cls(*map(float, v))

    def with_(self, **kw):
        return replace(self, **kw)

    def asdict(self) -> dict:
        return asdict(self)

    def __post_init__(self):
        if self.T <= 0 or self.scale <= 0:
            raise ValueError("T and scale must be positive")


@dataclass(frozen=True)
class QutritParams(_ParamVector):
    delta: float = 0.0
    alpha: float = -0.340
    phi: float = 0.0
    theta: float = np.pi / 2
    T: float = 10.0
    scale: float = 0.01


@dataclass(frozen=True)
class TwoQutritParams(_ParamVector):
    Delta: float = 0.200
    alpha: float = -0.340
    J: float = 0.010
    phi: float = 0.0
    theta: float = np.pi / 4
    scale: float = 0.05
    T: float = 90.0


# ---------------------------------------------------------------------------
# operator library


def raising(levels: int = 3, bosonic: bool = True) -> np.ndarray:
    """Truncated raising operator, ``<n+1|a^dag|n> = sqrt(n+1)`` if bosonic else 1."""
    op = np.zeros((levels, levels), dtype=complex)
    for n in range(levels - 1):
        op[n + 1, n] = np.sqrt(n + 1) if bosonic else 1.0
    return op


def projector(levels: int, j: int) -> np.ndarray:
    p = np.zeros((levels, levels), dtype=complex)
    p[j, j] = 1.0
    return p


def xy_pair(sigma_plus: np.ndarray, phi: float) -> tuple[np.ndarray, np.ndarray]:
    """``X = e^{i phi} s+ + e^{-i phi} s-`` and the Hermitian ``Y`` with ``iY = e^{i phi} s+ - e^{-i phi} s-``."""
    sp = np.exp(1j * phi) * sigma_plus
    sm = dag(sp)
    return sp + sm, -1j * (sp - sm)


def qutrit_drift(p: QutritParams, angular: bool = True) -> np.ndarray:
    """RWA drift ``delta Pi_1 + (alpha - 2 delta) Pi_2``."""
    w = 2 * np.pi if angular else 1.0
    return w * np.diag([0.0, p.delta, p.alpha - 2.0 * p.delta]).astype(complex)


def qutrit_controls(phi: float, bosonic: bool = True, angular: bool = True) -> tuple[np.ndarray, np.ndarray]:
    w = 2 * np.pi if angular else 1.0
    x, y = xy_pair(raising(3, bosonic), phi)
    return w * x, w * y


def _two_qutrit_ops(bosonic: bool = True):
    b = dag(raising(3, bosonic))
    eye = np.eye(3)
    return np.kron(b, eye), np.kron(eye, b)


def two_qutrit_drift(p: TwoQutritParams, bosonic: bool = True, angular: bool = True) -> np.ndarray:
    """``Delta n_1 + alpha (Pi_2^(1) + Pi_2^(2)) + J (b1 b2^dag + b1^dag b2)`` on ``|n1 n2>``."""
    w = 2 * np.pi if angular else 1.0
    b1, b2 = _two_qutrit_ops(bosonic)
    n = np.diag([0.0, 1.0, 2.0])
    pi2 = projector(3, 2)
    eye = np.eye(3)
    h = (
        p.Delta * np.kron(n, eye)
        + p.alpha * (np.kron(pi2, eye) + np.kron(eye, pi2))
        + p.J * (b1 @ dag(b2) + dag(b1) @ b2)
    )
    return w * h.astype(complex)


def two_qutrit_controls(phi: float, bosonic: bool = True, angular: bool = True) -> tuple[np.ndarray, ...]:
    """``(X_1, Y_1, X_2, Y_2)`` acting on qutrit 1 (control) and 2 (target)."""
    w = 2 * np.pi if angular else 1.0
    b1, b2 = _two_qutrit_ops(bosonic)
    x1, y1 = xy_pair(dag(b1), phi)
    x2, y2 = xy_pair(dag(b2), phi)
    return tuple(w * op for op in (x1, y1, x2, y2))


# ---------------------------------------------------------------------------
# target gates

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


@dataclass
class TargetGate:
    matrix: np.ndarray
    projector: np.ndarray
    subspace_dim: int

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def r_general(t1: float, t2: float, t3: float) -> np.ndarray:
    c, s = np.cos(t1 / 2), np.sin(t1 / 2)
    return np.array(
        [[c, -np.exp(1j * t2) * s], [np.exp(1j * t3) * s, np.exp(1j * (t2 + t3)) * c]],
        dtype=complex,
    )


def r1(theta: float) -> np.ndarray:
    return r_general(theta, np.pi, 0.0)


def r2(theta: float) -> np.ndarray:
    """Off-diagonal family: Pauli-X at ``theta = pi``, Pauli-Y at ``theta = pi/2``.

    Written out explicitly; substituting ``(pi, theta - pi, theta - pi)`` into
    :func:`r_general` gives the same gate up to a sign on one column, which
    would turn ``theta = pi`` into ``-iY`` instead of ``X``.
    """
    e = np.exp(1j * (theta - np.pi))
    return np.array([[0, e], [np.conj(e), 0]], dtype=complex)


def cr(theta: float) -> np.ndarray:
    """``exp[i theta (Z x X)]``."""
    return expm_i(np.kron(PAULI_Z, PAULI_X), -theta)


def computational_indices(system_dim: int) -> list[int]:
    if system_dim == 2:
        return [0, 1]
    if system_dim == 3:
        return [0, 1]
    if system_dim == 4:
        return [0, 1, 2, 3]
    if system_dim == 9:
        # |n1 n2> -> 3 n1 + n2, keep n1, n2 in {0, 1}
        return [0, 1, 3, 4]
    raise DimensionMismatch(f"unsupported system dimension {system_dim}")


def embed(gate: np.ndarray, system_dim: int) -> TargetGate:
    idx = computational_indices(system_dim)
    if gate.shape != (len(idx), len(idx)):
        raise DimensionMismatch(f"{gate.shape[0]}-dim gate cannot embed into dim {system_dim}")
    full = np.zeros((system_dim, system_dim), dtype=complex)
    full[np.ix_(idx, idx)] = gate
    proj = np.zeros((system_dim, system_dim), dtype=complex)
    proj[idx, idx] = 1.0
    return TargetGate(full, proj, len(idx))


FAMILIES = ("R1", "R2", "Rgeneral", "CNOT", "CRtheta")


def target_gate(family: str, angles=(), system_dim: int = 3) -> TargetGate:
    """Build a target gate embedded into the ``system_dim`` Hilbert space.

    >>> g = target_gate("R2", (np.pi,), 3)
    >>> np.allclose(g.matrix[:2, :2], PAULI_X)
    True
    """
    angles = tuple(np.atleast_1d(angles).astype(float))
    if family == "R1":
        gate = r1(angles[0])
    elif family == "R2":
        gate = r2(angles[0])
    elif family == "Rgeneral":
        gate = r_general(*angles[:3])
    elif family == "CNOT":
        gate = CNOT
    elif family == "CRtheta":
        gate = cr(angles[0])
    else:
        raise UnknownFamily(family)
    return embed(gate, system_dim)


# ---------------------------------------------------------------------------
# model objects tie a parameter record to operators and a target


@dataclass(frozen=True)
class QutritModel:
    bosonic: bool = True
    angular: bool = True
    name = "qutrit"
    dim = 3
    n_controls = 2
    params_cls = QutritParams

    def drift(self, p: QutritParams) -> np.ndarray:
        return qutrit_drift(p, self.angular)

    def controls(self, p: QutritParams) -> np.ndarray:
        return np.stack(qutrit_controls(p.phi, self.bosonic, self.angular))


@dataclass(frozen=True)
class TwoQutritModel:
    bosonic: bool = True
    angular: bool = True
    name = "two_qutrit"
    dim = 9
    n_controls = 4
    params_cls = TwoQutritParams

    def drift(self, p: TwoQutritParams) -> np.ndarray:
        return two_qutrit_drift(p, self.bosonic, self.angular)

    def controls(self, p: TwoQutritParams) -> np.ndarray:
        return np.stack(two_qutrit_controls(p.phi, self.bosonic, self.angular))


@dataclass(frozen=True)
class QubitParams(_ParamVector):
    delta: float = 0.0
    phi: float = 0.0
    T: float = 10.0
    scale: float = 1.0


@dataclass(frozen=True)
class QubitModel:
    """Bare two-level system, drift ``delta |1><1|``, controls ``(sigma_x, sigma_y)``-like pair."""

    name = "qubit"
    dim = 2
    n_controls = 2
    params_cls = QubitParams

    def drift(self, p: QubitParams) -> np.ndarray:
        return np.diag([0.0, p.delta]).astype(complex)

    def controls(self, p: QubitParams) -> np.ndarray:
        return np.stack(xy_pair(raising(2), p.phi))


def make_model(system: str, bosonic: bool = True, angular: bool = True):
    if system == "qutrit":
        return QutritModel(bosonic, angular)
    if system == "two_qutrit":
        return TwoQutritModel(bosonic, angular)
    if system == "qubit":
        return QubitModel()
    raise ValueError(f"unknown system {system!r}")
