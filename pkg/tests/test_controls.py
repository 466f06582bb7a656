import csv

import numpy as np
import pytest
from scipy.integrate import trapezoid
from hypothesis import given, settings, strategies as st

from somapulse.baselines import propagate_amplitudes, qubit_infidelity, rotation, stirap_transfer
from somapulse.controls import (
    FourierCoeffs,
    GaussianEnvelope,
    NonpositiveWidth,
    TimeOutOfRange,
    ZeroAnharmonicity,
    bb1_sequence,
    corpse_angles,
    corpse_sequence,
    drag_waveforms,
    eval_fourier,
    flat_to_km,
    fourier_basis,
    gaussian,
    gaussian_derivative,
    km_to_flat,
    midpoints,
    ms_waveforms,
    sampled_envelope,
    stirap_waveforms,
    write_waveform_csv,
)

coeffs = st.integers(0, 2**32 - 1).map(lambda s: np.random.default_rng(s).normal(size=(4, 2)))


def test_zero_coefficients():
    c = FourierCoeffs(np.zeros((4, 2)), 0.01, 10.0)
    np.testing.assert_array_equal(eval_fourier(c, np.linspace(0, 10, 7)), 0.0)


def test_single_mode_midpoint():
    c = FourierCoeffs(np.array([[2.0]]), 0.01, 10.0)
    assert eval_fourier(c, 5.0)[0] == pytest.approx(0.02, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(coeffs, st.floats(0.5, 100))
def test_vanishes_at_ends(x, T):
    c = FourierCoeffs(x, 0.3, T)
    # sin(k pi) is ~1e-16 in floating point
    np.testing.assert_allclose(eval_fourier(c, [0.0, T]), 0.0, atol=1e-14 * np.abs(x).sum())


def test_time_out_of_range():
    c = FourierCoeffs(np.ones((2, 2)), 1.0, 10.0)
    with pytest.raises(TimeOutOfRange):
        eval_fourier(c, 10.5)
    with pytest.raises(TimeOutOfRange):
        eval_fourier(c, -0.1)


@settings(max_examples=40, deadline=None)
@given(coeffs, coeffs, st.floats(-3, 3), st.floats(-3, 3))
def test_linear_in_coefficients(x, y, a, b):
    t = np.linspace(0, 7, 11)
    lhs = eval_fourier(FourierCoeffs(a * x + b * y, 0.1, 7.0), t)
    rhs = a * eval_fourier(FourierCoeffs(x, 0.1, 7.0), t) + b * eval_fourier(FourierCoeffs(y, 0.1, 7.0), t)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_field_major_layout():
    x = np.array([[1, 10], [2, 20], [3, 30]], dtype=float)  # K=3, M=2
    c = FourierCoeffs(x)
    np.testing.assert_array_equal(c.flat(), [1, 2, 3, 10, 20, 30])
    np.testing.assert_array_equal(FourierCoeffs.from_flat(c.flat(), 3, 2).x, x)
    batch = np.stack([c.flat(), 2 * c.flat()])
    np.testing.assert_array_equal(flat_to_km(batch, 3, 2)[1], 2 * x)
    np.testing.assert_array_equal(km_to_flat(flat_to_km(batch, 3, 2)), batch)


def test_fourier_basis_matches_eval():
    T, N, K = 10.0, 50, 4
    x = np.random.default_rng(0).normal(size=(K, 2))
    u = fourier_basis(N, K) @ x
    np.testing.assert_allclose(u, eval_fourier(FourierCoeffs(x, 1.0, T), midpoints(T, N)), atol=1e-13)


def test_gaussian_zero_area():
    p = GaussianEnvelope(0, 5, 0.0)
    np.testing.assert_array_equal(gaussian(p, np.linspace(-1, 6, 50)), 0.0)


@pytest.mark.parametrize("t1,t2,theta,sigma", [(0, 1, np.pi, None), (2, 9, 0.3, 1.5), (0, 40, 2 * np.pi, 3.0)])
def test_gaussian_area_by_trapezoid(t1, t2, theta, sigma):
    p = GaussianEnvelope(t1, t2, theta, sigma)
    t = np.linspace(t1, t2, 10_000)
    assert trapezoid(gaussian(p, t), t) == pytest.approx(theta, rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 5), st.floats(0.5, 10), st.floats(0, 1))
def test_gaussian_symmetry(t1, width, frac):
    p = GaussianEnvelope(t1, t1 + width, 1.0)
    x = frac * width / 2
    assert gaussian(p, p.mid - x) == pytest.approx(float(gaussian(p, p.mid + x)), rel=1e-12)


def test_gaussian_zero_outside_window():
    p = GaussianEnvelope(1.0, 2.0, 1.0)
    assert gaussian(p, 0.5) == 0 and gaussian(p, 2.5) == 0


def test_nonpositive_width():
    with pytest.raises(NonpositiveWidth):
        GaussianEnvelope(0, 1, 1.0, sigma=0.0)
    with pytest.raises(NonpositiveWidth):
        GaussianEnvelope(1, 1, 1.0)


def test_gaussian_derivative_finite_difference():
    p = GaussianEnvelope(0, 10, 1.0)
    t = np.linspace(0.5, 9.5, 37)
    h = 1e-5
    fd = (gaussian(p, t + h) - gaussian(p, t - h)) / (2 * h)
    np.testing.assert_allclose(gaussian_derivative(p, t), fd, rtol=1e-6, atol=1e-9 * p.amplitude)


def test_sampled_envelope_exact_area():
    v = sampled_envelope(GaussianEnvelope(0, 10, 0.7), 10.0, 37)
    assert v.sum() * 10 / 37 == pytest.approx(0.7, rel=1e-14)


def test_drag_large_alpha_suppresses_correction():
    _, u1, u2, _ = drag_waveforms(1, np.sqrt(2), 1e6, 0.0, np.pi, 0.0, 10.0, 500)
    assert np.abs(u2).max() <= 1e-6 * np.abs(u1).max()


def test_drag_channel_two_is_derivative_over_alpha():
    alpha, T, n = -2.1, 10.0, 400
    env = GaussianEnvelope(0, T, np.pi)
    t, u1, u2, _ = drag_waveforms(1, 1, alpha, 0.0, np.pi, 0.0, T, n)
    h = 1e-5
    fd = (gaussian(env, t + h) - gaussian(env, t - h)) / (2 * h) / alpha
    interior = slice(5, -5)
    np.testing.assert_allclose(u2.imag[interior], fd[interior], rtol=1e-4, atol=1e-12)
    np.testing.assert_allclose(u2.imag[interior], gaussian_derivative(env, t)[interior] / alpha, rtol=1e-6)
    np.testing.assert_allclose(u2.real, 0.0, atol=1e-15)


def test_drag_real_envelope_on_resonance():
    _, u1, _, _ = drag_waveforms(1, 1, -0.34, 0.0, np.pi, 0.0, 10.0, 100)
    assert np.all(u1.imag == 0) and np.all(u1.real >= 0)


def test_drag_zero_alpha():
    with pytest.raises(ZeroAnharmonicity):
        drag_waveforms(1, 1, 0.0, 0.0, np.pi, 0.0, 10.0, 100)


def test_bb1_structure():
    seq = bb1_sequence(np.pi, 0.2, 1.0, 8.0)
    chi = np.arccos(-0.25)
    assert chi == pytest.approx(1.823477, abs=1e-6)
    edges = [seq.segments[0].t_start] + [s.t_end for s in seq.segments]
    np.testing.assert_allclose(edges, [0, 2, 4, 6, 8])
    assert sum(s.area for s in seq.segments) == pytest.approx(np.pi + 4 * np.pi)
    np.testing.assert_allclose([s.phase for s in seq.segments], [0.2, 0.2 + chi, 0.2 + 3 * chi, 0.2 + chi])


def test_corpse_angles_at_pi():
    np.testing.assert_allclose(corpse_angles(np.pi), [7 * np.pi / 3, 5 * np.pi / 3, np.pi / 3])


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 2 * np.pi))
def test_corpse_signed_sum(theta):
    for layout in ("constant_rabi", "thirds"):
        seq = corpse_sequence(theta, 0.0, 1.0, 9.0, layout)
        assert seq.signed_areas().sum() == pytest.approx(theta, abs=1e-12)


def test_corpse_thirds_layout():
    seq = corpse_sequence(np.pi / 2, 0.0, 1.0, 9.0, "thirds")
    np.testing.assert_allclose([s.t_end for s in seq.segments], [3, 6, 9])
    assert [s.sense for s in seq.segments] == [1, -1, 1]


@pytest.mark.parametrize("layout", ["constant_rabi", "thirds"])
@pytest.mark.parametrize("theta1,theta2", [(np.pi, 0.0), (np.pi / 2, 0.0), (np.pi / 2, 0.7)])
def test_corpse_on_resonance_rotation(layout, theta1, theta2):
    T, n = 20.0, 3000
    c = corpse_sequence(theta1, theta2, 1.0, T, layout).sample(n)
    U = propagate_amplitudes(np.zeros((2, 2), dtype=complex), [(0, 1, 1.0)], c, T)
    assert qubit_infidelity(U, rotation(theta1, theta2)) <= 1e-6


@pytest.mark.parametrize("maker", [lambda: bb1_sequence(1.0, 0.0, 1.0, 4.0),
                                   lambda: corpse_sequence(1.0, 0.0, 1.0, 6.0),
                                   lambda: corpse_sequence(1.0, 0.0, 1.0, 6.0, "thirds")])
def test_segments_tile(maker):
    seq = maker()
    assert seq.segments[0].t_start == 0.0
    assert seq.segments[-1].t_end == pytest.approx(seq.T, abs=1e-12)
    for a, b in zip(seq.segments[:-1], seq.segments[1:]):
        assert a.t_end == b.t_start


def test_segmented_pulse_rejects_gaps():
    from somapulse.controls import Segment, SegmentedPulse
    with pytest.raises(ValueError):
        SegmentedPulse([Segment(0, 1, 1, 0), Segment(1.5, 2, 1, 0)], 2.0)
    with pytest.raises(ValueError):
        SegmentedPulse([Segment(0, 1, 1, 0)], 2.0)


def test_segment_sample_areas():
    seq = bb1_sequence(np.pi / 2, 0.0, 1.0, 40.0)
    c = seq.sample(4000)
    dt = 40.0 / 4000
    for s in seq.segments:
        t = midpoints(40.0, 4000)
        m = (t >= s.t_start) & (t < s.t_end)
        assert np.abs(c[m]).sum() * dt == pytest.approx(s.area, rel=1e-12)


def test_stirap_ordering():
    T = 90.0
    t, u1, u2 = stirap_waveforms(1, 1, 0.0, 0.0, T, 9000)
    assert t[np.argmax(np.abs(u2))] == pytest.approx(T / 3, abs=0.02)
    assert t[np.argmax(np.abs(u1))] == pytest.approx(2 * T / 3, abs=0.02)
    assert np.all(u2[t > 2 * T / 3] == 0) and np.all(u1[t < T / 3] == 0)


def test_stirap_adiabatic_transfer():
    # Omega * T = 40 * 100 >= 20 pi
    r = stirap_transfer(Omega1=40, Omega2=40, T=100.0, n=20000)
    assert r.transfer >= 0.99
    assert r.max_intermediate <= 0.05


def test_ms_envelopes():
    d, th2 = 0.3, 0.4
    t, u1, u2 = ms_waveforms(2.0, 0.5, d, 1.1, th2, 10.0, 1000)
    np.testing.assert_allclose(np.abs(u1), 2.0 / 0.5 * np.abs(u2), rtol=1e-12)
    dphase = np.angle(u1 * np.conj(u2) * np.exp(-1j * (th2 + 2 * d * t)))
    np.testing.assert_allclose(dphase, 0.0, atol=1e-10)
    env = GaussianEnvelope(0, 10.0, 1.1)
    tt = np.linspace(0, 10, 10_000)
    assert trapezoid(gaussian(env, tt), tt) == pytest.approx(1.1, rel=1e-6)


def test_waveform_csv(tmp_path):
    t = midpoints(1.0, 4)
    write_waveform_csv(tmp_path / "w.csv", t, [np.ones(4), np.ones(4) * (1 + 2j)])
    rows = list(csv.reader(open(tmp_path / "w.csv")))
    assert rows[0] == ["t", "field_1", "field_2_re", "field_2_im"]
    assert float(rows[1][3]) == 2.0 and len(rows) == 5
