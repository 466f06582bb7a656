"""Approximating two-qubit gates by short circuits over {CNOT, T, S, H}.

Circuits are gate lists applied left to right, so ``[a, b]`` is the unitary
``B @ A``. Fidelity is ``|Tr(U G^dag)|^2 / 16``.

``exhaustive_search`` is exact over every gate sequence up to ``max_depth``.
It enumerates all circuits of depth ``<= ceil(D/2)`` once, keeps one
representative per distinct unitary (modulo global phase), and scores
every product ``R @ L`` of a right and a left half with one matrix
product; since each sequence of length ``<= D`` splits into such halves,
the maximum is the same as brute force over ``sum_l 8^l`` sequences.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .models import CNOT as _CNOT
from .models import cr

_I2 = np.eye(2, dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_S = np.diag([1, 1j]).astype(complex)
_T = np.diag([1, np.exp(1j * np.pi / 4)]).astype(complex)
_SWAP = np.eye(4, dtype=complex)[[0, 2, 1, 3]]

SYMBOLS = ("CNOT12", "CNOT21", "T1", "T2", "S1", "S2", "H1", "H2")
GATES = {
    "CNOT12": _CNOT,
    "CNOT21": _SWAP @ _CNOT @ _SWAP,
    "T1": np.kron(_T, _I2),
    "T2": np.kron(_I2, _T),
    "S1": np.kron(_S, _I2),
    "S2": np.kron(_I2, _S),
    "H1": np.kron(_H, _I2),
    "H2": np.kron(_I2, _H),
}
KIND = {"CNOT12": "CNOT", "CNOT21": "CNOT", "T1": "T", "T2": "T", "S1": "S", "S2": "S", "H1": "H", "H2": "H"}


class UnknownSymbol(KeyError):
    pass


class BudgetExceeded(RuntimeError):
    pass


@dataclass
class SearchResult:
    circuit: list[str]
    fidelity: float
    evaluations: int
    method: str = ""
    seed: int | None = None
    trace: list[float] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.circuit)

    @property
    def counts(self) -> tuple[int, int, int, int]:
        """``(N_CNOT, N_T, N_S, N_H)``."""
        return gate_counts(self.circuit)

    def to_json(self, target: str = "CRtheta", angle: float | None = None) -> dict:
        c = self.counts
        return {
            "target": target,
            "angle": angle,
            "method": self.method,
            "best_fidelity": self.fidelity,
            "circuit": list(self.circuit),
            "counts": {"CNOT": c[0], "T": c[1], "S": c[2], "H": c[3]},
            "evaluations": int(self.evaluations),
            "seed": self.seed,
        }


def gate_counts(circuit) -> tuple[int, int, int, int]:
    kinds = [KIND[s] for s in circuit]
    return tuple(kinds.count(k) for k in ("CNOT", "T", "S", "H"))


def circuit_unitary(circuit, gates: dict = GATES) -> np.ndarray:
    u = np.eye(4, dtype=complex)
    for s in circuit:
        if s not in gates:
            raise UnknownSymbol(s)
        u = gates[s] @ u
    return u


def gate_fidelity(u: np.ndarray, target: np.ndarray) -> float:
    return float(abs(np.trace(u @ target.conj().T)) ** 2 / 16.0)


def cr_target(theta: float) -> np.ndarray:
    """Search target ``exp(-i theta Z x X)``.

    This sign makes ``CNOT12, H2, S2, H2, S1`` an exact circuit for
    ``theta = pi/4``; the pulse-synthesis gate ``models.cr`` uses the
    opposite sign. Best fidelities for the irrational angles are the same
    under both signs.
    """
    return cr(-theta)


# ---------------------------------------------------------------------------
# exhaustive search


def _phase_key(u: np.ndarray, decimals: int = 9) -> bytes:
    flat = u.ravel()
    k = int(np.argmax(np.abs(flat) > 1e-6))
    v = flat * (abs(flat[k]) / flat[k])
    v = np.round(v, decimals) + 0.0  # drop negative zeros
    return np.concatenate([v.real, v.imag]).tobytes()


def _key(seq: tuple[int, ...]) -> tuple:
    n_cnot = sum(1 for i in seq if i < 2)
    return (len(seq), n_cnot, seq)


def distinct_unitaries(max_depth: int, symbols=SYMBOLS, gates: dict = GATES):
    """Every distinct unitary of depth ``<= max_depth`` with its preferred gate list.

    The representative minimises ``(depth, number of CNOTs, symbol order)``.
    Returns ``(U (n, 4, 4), sequences, n_sequences)`` where the last entry is
    the number of gate sequences the set stands for.
    """
    mats = [gates[s] for s in symbols]
    best: dict[bytes, tuple] = {}
    layer = {(): np.eye(4, dtype=complex)}
    best[_phase_key(layer[()])] = ((), layer[()])
    for _ in range(max_depth):
        nxt = {}
        for seq, u in layer.items():
            for i, g in enumerate(mats):
                v = g @ u
                s2 = seq + (i,)
                k = _phase_key(v)
                old = best.get(k)
                if old is None or _key(s2) < _key(old[0]):
                    best[k] = (s2, v)
                    nxt[s2] = v
        # only new representatives can lead to new representatives one gate later
        layer = nxt
    # the pruning above keeps every extension of every representative, so all
    # unitaries reachable within max_depth are present
    seqs = [v[0] for v in best.values()]
    order = sorted(range(len(seqs)), key=lambda i: _key(seqs[i]))
    U = np.stack([best_val[1] for best_val in best.values()])[order]
    return U, [seqs[i] for i in order], sum(len(mats) ** l for l in range(max_depth + 1))


def exhaustive_search(target: np.ndarray, max_depth: int, symbols=SYMBOLS, gates: dict = GATES,
                      max_evaluations: int = 10**9, chunk: int = 512, tie_tol: float = 1e-12) -> SearchResult:
    """Global best circuit of depth ``<= max_depth``.

    Ties within ``tie_tol`` in fidelity go to lower depth, then fewer CNOTs,
    then the earlier symbol sequence.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    dl = ceil(max_depth / 2)
    dr = max_depth - dl
    UL, SL, nseq = distinct_unitaries(dl, symbols, gates)
    if dr == dl:
        UR, SR = UL, SL
    else:
        n_r = sum(1 for s in SL if len(s) <= dr)
        UR, SR = UL[:n_r], SL[:n_r]  # sorted by depth first
    n_eval = len(UL) * len(UR)
    if n_eval > max_evaluations:
        raise BudgetExceeded(f"{n_eval} pair evaluations exceed the cap {max_evaluations}")
    gd = target.conj().T
    # Tr(R L G^dag) = sum_ab R[a, b] W[b, a] with W = L G^dag
    W = (UL @ gd).transpose(0, 2, 1).reshape(len(UL), 16)
    R = UR.reshape(len(UR), 16)
    best_f = -1.0
    cands: list[tuple[int, int]] = []
    for lo in range(0, len(R), chunk):
        F = np.abs(R[lo:lo + chunk] @ W.T) ** 2 / 16.0
        m = float(F.max())
        if m > best_f + tie_tol:
            best_f = m
            cands = []
        if m >= best_f - tie_tol:
            best_f = max(best_f, m)
            rr, ll = np.nonzero(F >= best_f - tie_tol)
            cands += list(zip((rr + lo).tolist(), ll.tolist()))

    def key(rl):
        r, l = rl
        return _key(SL[l] + SR[r])

    r, l = min(cands, key=key)
    circ = [symbols[i] for i in SL[l] + SR[r]]
    f = gate_fidelity(circuit_unitary(circ, gates), target)
    return SearchResult(circ, f, n_eval, "exhaustive", None, [f])


# ---------------------------------------------------------------------------
# stochastic descent


def _moves(circ: list[int], mats: np.ndarray, gd: np.ndarray, max_depth: int):
    """(fidelities, move list) for every replace/insert/delete edit of ``circ``."""
    l = len(circ)
    A = np.empty((l + 1, 4, 4), dtype=complex)  # A[i] = G_i .. G_1
    A[0] = np.eye(4)
    for i, s in enumerate(circ):
        A[i + 1] = mats[s] @ A[i]
    Bs = np.empty((l + 1, 4, 4), dtype=complex)  # Bs[i] = G_l .. G_{i+1}
    Bs[l] = np.eye(4)
    for i in range(l - 1, -1, -1):
        Bs[i] = Bs[i + 1] @ mats[circ[i]]
    fids, moves = [], []
    vec_h = mats.reshape(len(mats), 16)
    if l:
        # replace position i (0-based): B[i+1] H A[i]
        Mr = A[:-1] @ gd @ Bs[1:]  # (l, 4, 4), Tr(H M)
        tr = vec_h @ Mr.transpose(0, 2, 1).reshape(l, 16).T  # (8, l)
        for i in range(l):
            for h in range(len(mats)):
                if h != circ[i]:
                    fids.append(abs(tr[h, i]) ** 2 / 16)
                    moves.append(("replace", i, h))
        # delete position i: B[i+1] A[i]
        td = np.einsum("iab,iba->i", Bs[1:], A[:-1] @ gd)
        for i in range(l):
            fids.append(abs(td[i]) ** 2 / 16)
            moves.append(("delete", i, -1))
    if l < max_depth:
        # insert at position i (before old gate i): B[i] H A[i]
        Mi = A @ gd @ Bs
        ti = vec_h @ Mi.transpose(0, 2, 1).reshape(l + 1, 16).T
        for i in range(l + 1):
            for h in range(len(mats)):
                fids.append(abs(ti[h, i]) ** 2 / 16)
                moves.append(("insert", i, h))
    return np.array(fids), moves


def _apply(circ, move):
    kind, i, h = move
    c = list(circ)
    if kind == "replace":
        c[i] = h
    elif kind == "delete":
        del c[i]
    else:
        c.insert(i, h)
    return c


def stochastic_descent(target: np.ndarray, max_depth: int = 20, seed: int = 0, max_moves: int = 200_000,
                       symbols=SYMBOLS, gates: dict = GATES, min_gain: float = 1e-12) -> SearchResult:
    """Hill climbing over circuits with random restarts.

    Each restart draws a random circuit, cycling the start depth through
    ``1..max_depth``. At every step the edits (single replacements, inserts,
    deletes) are visited in a seeded random order and the first one that
    raises the fidelity by more than ``min_gain`` is taken. A circuit with
    no such edit is a local maximum and triggers a restart. ``max_moves``
    caps the number of scored edits.
    """
    rng = np.random.default_rng(seed)
    mats = np.stack([gates[s] for s in symbols])
    gd = target.conj().T
    best_c: list[int] = []
    best_f = gate_fidelity(np.eye(4), target)
    trace = [best_f]
    n_eval = 1
    restart = 0
    while n_eval < max_moves:
        depth = restart % max_depth + 1
        restart += 1
        circ = list(rng.integers(0, len(symbols), depth))
        f = gate_fidelity(circuit_unitary([symbols[i] for i in circ], gates), target)
        n_eval += 1
        while n_eval < max_moves:
            fids, moves = _moves(circ, mats, gd, max_depth)
            order = rng.permutation(len(moves))
            n_eval += len(moves)
            better = order[fids[order] > f + min_gain]
            if better.size == 0:
                break
            j = better[0]
            circ, f = _apply(circ, moves[j]), float(fids[j])
        if f > best_f + min_gain or (best_f <= f <= best_f + min_gain and _key(tuple(circ)) < _key(tuple(best_c))):
            best_c, best_f = list(circ), f
        trace.append(best_f)
    circ = [symbols[i] for i in best_c]
    return SearchResult(circ, gate_fidelity(circuit_unitary(circ, gates), target), n_eval, "stochastic", seed, trace)


def write_result_json(path, res: SearchResult, target: str, angle: float | None) -> None:
    with open(path, "w") as fh:
        json.dump(res.to_json(target, angle), fh, sort_keys=True, indent=1)
        fh.write("\n")
