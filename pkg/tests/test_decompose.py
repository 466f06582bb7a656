import itertools

import numpy as np
import pytest

from somapulse.decompose import (
    GATES,
    SYMBOLS,
    BudgetExceeded,
    UnknownSymbol,
    circuit_unitary,
    cr_target,
    exhaustive_search,
    gate_fidelity,
    stochastic_descent,
    write_result_json,
)
from somapulse.models import CNOT


def test_alphabet_unitary():
    for g in GATES.values():
        np.testing.assert_allclose(g @ g.conj().T, np.eye(4), atol=1e-15)


def test_circuit_unitary_basics():
    assert np.array_equal(circuit_unitary([]), np.eye(4))
    np.testing.assert_allclose(circuit_unitary(["CNOT12", "CNOT12"]), np.eye(4), atol=1e-15)
    # left-to-right application
    np.testing.assert_allclose(circuit_unitary(["H1", "S1"]), GATES["S1"] @ GATES["H1"])
    with pytest.raises(UnknownSymbol):
        circuit_unitary(["X1"])


def test_exact_cr_quarter_pi_circuit():
    u = circuit_unitary(["CNOT12", "H2", "S2", "H2", "S1"])
    assert gate_fidelity(u, cr_target(np.pi / 4)) == pytest.approx(1.0, abs=1e-12)


def test_exhaustive_finds_cnot():
    r = exhaustive_search(CNOT, 1)
    assert r.fidelity == pytest.approx(1.0, abs=1e-12)
    assert r.circuit == ["CNOT12"] and r.counts == (1, 0, 0, 0)


def test_exhaustive_cr_quarter_pi():
    r = exhaustive_search(cr_target(np.pi / 4), 5)
    assert r.fidelity >= 1 - 1e-9
    assert r.counts[0] == 1 and sum(r.counts[1:]) == 4


def test_exhaustive_depth_zero_is_identity():
    r = exhaustive_search(cr_target(0.3), 0)
    assert r.circuit == [] and r.fidelity == pytest.approx(np.cos(0.3) ** 2)
    with pytest.raises(ValueError):
        exhaustive_search(CNOT, -1)


def _brute(target, depth, symbols=SYMBOLS):
    best = -1.0
    for l in range(depth + 1):
        for seq in itertools.product(symbols, repeat=l):
            best = max(best, gate_fidelity(circuit_unitary(seq), target))
    return best


@pytest.mark.parametrize("theta", [np.pi / np.sqrt(2), np.pi / np.sqrt(7), 0.7])
def test_exhaustive_equals_brute_force(theta):
    T = cr_target(theta)
    for depth in (3, 4):
        assert exhaustive_search(T, depth).fidelity == pytest.approx(_brute(T, depth), abs=1e-12)


def test_reported_fidelity_recomputes_exactly():
    T = cr_target(np.pi / np.sqrt(3))
    for r in (exhaustive_search(T, 6), stochastic_descent(T, 6, seed=1, max_moves=5000)):
        assert r.fidelity == gate_fidelity(circuit_unitary(r.circuit), T)
        assert sum(r.counts) == r.depth


def test_alphabet_reordering_invariant():
    T = cr_target(np.pi / np.sqrt(5))
    base = exhaustive_search(T, 6).fidelity
    rng = np.random.default_rng(0)
    for _ in range(3):
        perm = tuple(rng.permutation(SYMBOLS))
        assert exhaustive_search(T, 6, symbols=perm).fidelity == pytest.approx(base, abs=1e-12)


def test_inverse_pairs_never_help():
    T = cr_target(np.pi / np.sqrt(2))
    r = exhaustive_search(T, 6)
    for pad in (["H1", "H1"], ["H2", "H2"], ["CNOT12", "CNOT12"], ["CNOT21", "CNOT21"], ["S1"] * 4, ["T2"] * 8):
        f = gate_fidelity(circuit_unitary(r.circuit + pad), T)
        assert f == pytest.approx(r.fidelity, abs=1e-12)
        assert f <= exhaustive_search(T, 6).fidelity + 1e-12


def test_budget_cap():
    with pytest.raises(BudgetExceeded):
        exhaustive_search(CNOT, 6, max_evaluations=10)


def test_stochastic_trace_monotone_and_deterministic():
    T = cr_target(np.pi / np.sqrt(3))
    a = stochastic_descent(T, 8, seed=3, max_moves=20_000)
    b = stochastic_descent(T, 8, seed=3, max_moves=20_000)
    assert all(y >= x for x, y in zip(a.trace, a.trace[1:]))
    assert a.to_json() == b.to_json()
    assert a.depth <= 8


def test_stochastic_matches_exhaustive_small_depth():
    T = cr_target(np.pi / np.sqrt(7))
    e = exhaustive_search(T, 6)
    s = stochastic_descent(T, 6, seed=0, max_moves=100_000)
    assert abs(e.fidelity - s.fidelity) <= 1e-6


def test_result_json(tmp_path):
    import json

    r = exhaustive_search(CNOT, 2)
    write_result_json(tmp_path / "r.json", r, "CNOT", None)
    doc = json.loads((tmp_path / "r.json").read_text())
    assert set(doc) == {"target", "angle", "method", "best_fidelity", "circuit", "counts", "evaluations", "seed"}
    assert doc["circuit"] == ["CNOT12"] and doc["counts"]["CNOT"] == 1
