import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agreekit.design import DesignProblem, design, sample_reachable_weights
from agreekit.exceptions import InsufficientTrace, PreconditionError, StiffnessWarning
from agreekit.graph import EXAMPLE3_GRAPH
from agreekit.linalg import build_projection
from agreekit.simulation import (
    InputSignal,
    SimTrace,
    iss_report,
    simulate_static,
    simulate_tracking,
    write_trace,
)


@pytest.fixture(scope="module")
def consensus3():
    one = np.ones((3, 1))
    w = build_projection(one, one)
    return w, w.W - np.eye(3)


@pytest.fixture(scope="module")
def example3_protocol():
    w, _ = sample_reachable_weights(EXAMPLE3_GRAPH, 2, seed=1)
    cert = design(DesignProblem(EXAMPLE3_GRAPH, w, "numerical"))
    return w, cert


class TestStatic:
    def test_zero_matrix(self):
        x0 = np.array([1.0, -2.0, 0.5])
        tr = simulate_static(np.zeros((3, 3)), x0, 1.0, 0.1)
        assert np.all(tr.states == x0)

    def test_consensus_closed_form(self, consensus3):
        w, A = consensus3
        x0 = np.array([1.0, 2.0, 3.0])
        tr = simulate_static(A, x0, 10.0, 0.01, weights=w)
        # exp(A t) = W + exp(-t)(I - W)
        i6 = int(round(6.0 / 0.01))
        expected = w.W @ x0 + np.exp(-6.0) * (x0 - w.W @ x0)
        np.testing.assert_allclose(tr.states[i6], expected, atol=1e-12)
        assert tr.error_norms[i6] <= np.exp(-6.0) * np.linalg.norm(x0 - w.W @ x0) * (1 + 1e-9)
        np.testing.assert_allclose(tr.final_state, [2.0, 2.0, 2.0], atol=1e-4)

    def test_default_grid(self, consensus3):
        w, A = consensus3
        tr = simulate_static(A, [1.0, 0.0, 0.0], weights=w)
        assert len(tr) == 2001
        assert tr.times[-1] == pytest.approx(50.0)

    def test_trace_invariants(self, consensus3):
        w, A = consensus3
        x0 = np.array([0.3, -1.0, 2.0])
        tr = simulate_static(A, x0, 5.0, 0.5, weights=w)
        assert tr.times[0] == 0.0 and np.all(np.diff(tr.times) > 0)
        assert np.array_equal(tr.states[0], x0)
        np.testing.assert_array_equal(tr.error_norms, np.linalg.norm(tr.states - tr.reference, axis=1))

    def test_step_size_independence(self, example3_protocol):
        w, cert = example3_protocol
        x0 = np.random.default_rng(0).standard_normal(5)
        coarse = simulate_static(cert.A, x0, 20.0, 0.1)
        fine = simulate_static(cert.A, x0, 20.0, 0.05)
        np.testing.assert_allclose(fine.states[::2], coarse.states, atol=1e-12, rtol=0)

    def test_certified_decay(self, example3_protocol):
        w, cert = example3_protocol
        x0 = np.random.default_rng(3).standard_normal(5)
        tr = simulate_static(cert.A, x0, cert.limit_horizon, cert.limit_horizon / 2000, weights=w)
        assert tr.final_error <= 1e-6
        tail = tr.error_norms[int(5 / abs(cert.essential_abscissa) / tr.times[1]):]
        assert np.all(np.diff(tail) <= 1e-15)

    def test_bad_grid(self):
        with pytest.raises(PreconditionError):
            simulate_static(np.zeros((2, 2)), [1, 1], 1.0, 0.0)
        with pytest.raises(PreconditionError):
            simulate_static(np.zeros((2, 2)), [1, 1], 0.1, 1.0)

    def test_trace_rejects_bad_times(self):
        with pytest.raises(PreconditionError):
            SimTrace(np.array([0.0, 0.0]), np.zeros((2, 1)), np.zeros((2, 1)))


class TestInputs:
    def test_consistency(self):
        for sig in (InputSignal.constant([1.0, 2.0]), InputSignal.ramp_hold([1.0, 2.0], 3.0),
                    InputSignal.sinusoid([1.0, -1.0], 0.5, 2.0)):
            assert sig.consistency_defect(10.0) <= 1e-4

    def test_sinusoid_sup(self):
        sig = InputSignal.sinusoid([3.0, 4.0], 0.25, 2.0)
        assert sig.udot_sup(np.pi) == pytest.approx(0.25)

    def test_ramp_values(self):
        sig = InputSignal.ramp_hold([2.0], 4.0)
        assert sig.u(2.0)[0] == pytest.approx(1.0)
        assert sig.u(10.0)[0] == 2.0 and sig.udot(10.0)[0] == 0.0


class TestTracking:
    def test_constant_input_matches_static(self, example3_protocol):
        w, cert = example3_protocol
        u = np.random.default_rng(5).standard_normal(5)
        tr = simulate_tracking(cert.A, InputSignal.constant(u), 30.0, 0.05, weights=w)
        st_ = simulate_static(cert.A, u, 30.0, 0.05, weights=w)
        np.testing.assert_allclose(tr.states, st_.states, atol=1e-7)

    def test_ramp_hold_settles(self, consensus3):
        w, A = consensus3
        target = np.array([1.0, 2.0, 3.0])
        tr = simulate_tracking(A, InputSignal.ramp_hold(target, 5.0), 40.0, 0.05, weights=w)
        assert not tr.warnings
        np.testing.assert_allclose(tr.final_state, w.W @ target, atol=1e-6)
        assert tr.final_error <= 1e-6

    def test_error_confined_to_complement(self, example3_protocol):
        w, cert = example3_protocol
        u = InputSignal.sinusoid(np.arange(1.0, 6.0), 0.5, 1.5, offset=np.ones(5))
        tr = simulate_tracking(cert.A, u, 20.0, 0.02, weights=w)
        drift = np.abs((tr.states - tr.inputs) @ w.tau_rows.T)
        assert drift.max() <= 1e-6

    def test_stiffness_warning_on_floor(self, consensus3):
        w, A = consensus3
        with pytest.warns(StiffnessWarning):
            tr = simulate_tracking(-2e3 * np.eye(3) + A, InputSignal.sinusoid([1, 0, 0], 1.0, 1.0),
                                   0.2, 0.1, tol=1e-14, dt_min=1e-3)
        assert tr.warnings

    def test_linear_gain_in_input_rate(self, consensus3):
        w, A = consensus3
        steady = []
        for s in (0.01, 0.1, 1.0):
            tr = simulate_tracking(A, InputSignal.sinusoid([1.0, 0.0, -1.0], s), 30.0, 0.05, weights=w)
            steady.append(iss_report(tr).steady_error / s)
        assert max(steady) / min(steady) - 1 <= 0.15


class TestISS:
    def test_zero_input_rate(self, consensus3):
        w, A = consensus3
        tr = simulate_static(A, [1.0, 2.0, 4.0], 20.0, 0.05, weights=w)
        r = iss_report(tr)
        assert r.measured_gain is None
        assert r.measured_decay_rate == pytest.approx(1.0, rel=0.1)
        assert r.bound_satisfied_under_measured_constants

    def test_ramp_hold_bound(self, consensus3):
        w, A = consensus3
        tr = simulate_tracking(A, InputSignal.ramp_hold([1.0, -1.0, 0.5], 4.0), 30.0, 0.05, weights=w)
        r = iss_report(tr)
        assert r.bound_satisfied_under_measured_constants
        assert r.measured_decay_rate == pytest.approx(1.0, rel=0.1)

    def test_smoothed_noise_gain(self, consensus3):
        w, A = consensus3
        rng = np.random.default_rng(9)
        freqs = rng.uniform(0.2, 3.0, 6)
        phases = rng.uniform(0, 2 * np.pi, 6)
        dirs = rng.standard_normal((6, 3))
        raw = lambda t: (np.cos(freqs * t + phases) @ dirs)
        sup = max(np.linalg.norm(raw(t)) for t in np.linspace(0, 40, 4001))
        udot = lambda t: 0.1 * raw(t) / sup
        u = lambda t: 0.1 * ((np.sin(freqs * t + phases) - np.sin(phases)) / freqs) @ dirs / sup
        sig = InputSignal(u, udot, "smoothed noise")
        tr = simulate_tracking(A, sig, 40.0, 0.05, weights=w)
        r = iss_report(tr)
        assert r.steady_error <= r.measured_gain * 0.1 * 1.1

    def test_short_trace(self):
        tr = simulate_static(np.zeros((1, 1)), [1.0], 0.5, 0.1)
        with pytest.raises(InsufficientTrace):
            iss_report(tr)


def test_trace_files(tmp_path, consensus3):
    w, A = consensus3
    tr = simulate_static(A, [1.0, 2.0, 3.0], 2.0, 0.5, weights=w)
    write_trace(tmp_path / "run", tr, "demo")
    lines = (tmp_path / "run.csv").read_text().splitlines()
    assert lines[0] == "t,x1,x2,x3,e"
    assert len(lines) == len(tr) + 1
    assert (tmp_path / "run.svg").read_text().lstrip().startswith("<?xml")


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_static_reaches_projection_property(seed):
    rng = np.random.default_rng(seed)
    M, N = rng.standard_normal((4, 2)), rng.standard_normal((4, 2))
    w = build_projection(M, N)
    if np.linalg.cond(w.T) > 1e3:
        return
    B = -np.eye(2)
    A = w.error_basis @ B @ w.error_rows
    x0 = rng.standard_normal(4)
    tr = simulate_static(A, x0, 40.0, 0.1, weights=w)
    assert tr.final_error <= 1e-10 * max(1.0, np.linalg.cond(w.T)) * np.linalg.norm(x0) + 1e-12
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        tt = simulate_tracking(A, InputSignal.constant(x0), 5.0, 0.1, weights=w)
    np.testing.assert_allclose(tt.states, tr.states[:51], atol=1e-7)
