"""Dense complex kernels for the small Hilbert spaces used here (dim 2..9).

Everything works on single matrices or on stacks ``(..., d, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NotHermitian(ValueError):
    pass


class NoConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class NumericPolicy:
    hermitian_rtol: float = 1e-12
    unitary_atol: float = 1e-10
    jacobi_max_sweeps: int = 100
    jacobi_tol: float = 1e-15


DEFAULT_POLICY = NumericPolicy()


def dag(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def frob(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(a) ** 2, axis=(-2, -1)))


def trace(a: np.ndarray) -> np.ndarray:
    return np.trace(a, axis1=-2, axis2=-1)


def is_hermitian(a: np.ndarray, policy: NumericPolicy = DEFAULT_POLICY) -> bool:
    scale = np.maximum(frob(a), 1.0)
    return bool(np.all(frob(a - dag(a)) <= policy.hermitian_rtol * scale))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


@dataclass
class EigenSystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues[..., None, :]) @ dag(v)


def jacobi_eigh(a: np.ndarray, policy: NumericPolicy = DEFAULT_POLICY) -> EigenSystem:
    """Cyclic complex Jacobi diagonalisation of one Hermitian matrix.

    Each rotation zeroes a single off-diagonal pair ``(p, q)``; sweeps repeat
    until the off-diagonal Frobenius mass is below ``jacobi_tol * ||A||``.
    """
    a = np.array(a, dtype=complex)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    norm = max(float(frob(a)), 1e-300)
    for _ in range(policy.jacobi_max_sweeps):
        off = np.sqrt(np.sum(np.abs(a - np.diag(np.diag(a))) ** 2))
        if off <= policy.jacobi_tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                # phase out a[p,q] then apply a real symmetric Jacobi rotation
                phase = apq / abs(apq)
                app, aqq = a[p, p].real, a[q, q].real
                tau = (aqq - app) / (2.0 * abs(apq))
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau)) if tau != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rot = np.eye(n, dtype=complex)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s * phase
                rot[q, p] = -s * np.conj(phase)
                a = dag(rot) @ a @ rot
                v = v @ rot
    else:
        raise NoConvergence(f"Jacobi did not converge in {policy.jacobi_max_sweeps} sweeps")
    evals = np.real(np.diag(a))
    order = np.argsort(evals)
    return EigenSystem(evals[order], v[:, order])


def herm_eig(a: np.ndarray, policy: NumericPolicy = DEFAULT_POLICY, method: str = "lapack") -> EigenSystem:
    """Eigen-decomposition of a Hermitian matrix (or stack), eigenvalues ascending.

    ``method="jacobi"`` runs the in-house cyclic Jacobi solver (single matrix
    only); the default delegates to LAPACK ``heevd`` through numpy.
    """
    a = np.asarray(a, dtype=complex)
    if not is_hermitian(a, policy):
        raise NotHermitian("matrix is not Hermitian within tolerance")
    if method == "jacobi":
        if a.ndim != 2:
            raise ValueError("jacobi method takes a single matrix")
        return jacobi_eigh(a, policy)
    try:
        e, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return EigenSystem(e, v)


def _expm_taylor(a: np.ndarray) -> np.ndarray:
    """exp(-i A) for Hermitian stacks by scaling and squaring a Taylor series."""
    d = a.shape[-1]
    norm = float(np.max(np.sum(np.abs(a), axis=-2))) if a.size else 0.0
    squarings = max(0, int(np.ceil(np.log2(norm / 0.25)))) if norm > 0.25 else 0
    x = -1j * a / (2.0**squarings)
    theta = norm / (2.0**squarings)
    # smallest order with truncation term below double precision
    order, term = 1, theta
    while term > 1e-17 and order < 30:
        order += 1
        term *= theta / order
    eye = np.broadcast_to(np.eye(d, dtype=complex), a.shape)
    u = eye + x / order
    for k in range(order - 1, 0, -1):
        u = eye + (x @ u) / k
    for _ in range(squarings):
        u = u @ u
    return u


def expm_i(
    a: np.ndarray,
    s: float | np.ndarray = 1.0,
    policy: NumericPolicy = DEFAULT_POLICY,
    method: str = "eig",
    check: bool = True,
) -> np.ndarray:
    """Return ``exp(-i s A)`` for Hermitian ``A``.

    ``s`` broadcasts against the stack dimensions of ``a``. The ``"eig"``
    method diagonalises, ``"taylor"`` uses scaling and squaring (both reach
    machine-precision unitarity; taylor is faster on large stacks of tiny
    matrices).
    """
    a = np.asarray(a, dtype=complex)
    if check and not is_hermitian(a, policy):
        raise NotHermitian("matrix is not Hermitian within tolerance")
    s = np.asarray(s, dtype=float)
    if method == "taylor":
        return _expm_taylor(a * s[..., None, None])
    if method != "eig":
        raise ValueError(f"unknown method {method!r}")
    es = herm_eig(a, policy) if check else EigenSystem(*np.linalg.eigh(a))
    phases = np.exp(-1j * es.eigenvalues * s[..., None])
    v = es.eigenvectors
    return (v * phases[..., None, :]) @ dag(v)


def unitarity_error(u: np.ndarray) -> np.ndarray:
    eye = np.eye(u.shape[-1])
    return frob(dag(u) @ u - eye)
