"""Time-domain simulation of agreement and tracking dynamics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as mio
from .exceptions import InsufficientTrace, PreconditionError, StiffnessWarning
from .linalg import abscissas, matrix_exponential

DEFAULT_HORIZON_DECADES = 50.0
DEFAULT_STEPS = 2000
RK_TOL = 1e-8
DT_MIN = 1e-6


@dataclass(frozen=True)
class SimTrace:
    """Sampled trajectory with its reference and error norms.

    ``inputs`` holds ``u(t)`` on the grid for tracking runs and is ``None``
    for static runs.
    """

    times: np.ndarray
    states: np.ndarray
    reference: np.ndarray
    error_norms: np.ndarray = field(init=False)
    inputs: np.ndarray | None = None
    udot_norms: np.ndarray | None = None
    warnings: tuple = ()

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise PreconditionError("times must start at 0 and increase strictly")
        object.__setattr__(self, "error_norms", np.linalg.norm(self.states - self.reference, axis=1))

    def __len__(self):
        return len(self.times)

    @property
    def final_state(self):
        return self.states[-1]

    @property
    def final_error(self):
        return float(self.error_norms[-1])

    def to_csv(self):
        n = self.states.shape[1]
        header = "t," + ",".join(f"x{i}" for i in range(1, n + 1)) + ",e\n"
        data = np.column_stack([self.times, self.states, self.error_norms])
        return header + mio.matrix_to_csv(data)


def _grid(horizon, dt):
    if dt <= 0:
        raise PreconditionError("dt must be positive")
    if horizon < dt:
        raise PreconditionError("horizon must be at least dt")
    steps = int(np.ceil(horizon / dt - 1e-9))
    return np.arange(steps + 1) * dt


def default_horizon(A, weights):
    """``50 / |essential abscissa|``: five decades of decay on the slowest mode."""
    ess = abscissas(A, weights).essential_spectral
    if not ess < 0:
        raise PreconditionError("default horizon needs a stable essential spectrum")
    return DEFAULT_HORIZON_DECADES / abs(ess)


def _resolve_grid(A, weights, horizon, dt):
    if horizon is None:
        if weights is None:
            raise PreconditionError("horizon is required without weights")
        horizon = default_horizon(A, weights)
    if dt is None:
        dt = horizon / DEFAULT_STEPS
    return _grid(horizon, dt)


def simulate_static(A, x0, horizon=None, dt=None, weights=None):
    """Propagate ``x' = A x`` exactly on a uniform grid.

    One matrix exponential ``exp(A dt)`` is computed and applied repeatedly.
    The reference is ``W x0`` when ``weights`` is given and zero otherwise.
    """
    A = np.asarray(A, dtype=float)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    times = _resolve_grid(A, weights, horizon, dt)
    step = matrix_exponential(A, times[1] - times[0])
    states = np.empty((len(times), x0.size))
    states[0] = x0
    for i in range(1, len(times)):
        states[i] = step @ states[i - 1]
    ref = weights.W @ x0 if weights is not None else np.zeros_like(x0)
    return SimTrace(times, states, np.tile(ref, (len(times), 1)))


# --------------------------------------------------------------------------
# inputs


@dataclass(frozen=True)
class InputSignal:
    """A differentiable input ``u`` with its derivative.

    ``breakpoints`` lists times where ``udot`` may jump; the consistency
    probe skips them.
    """

    u: object
    udot: object
    name: str = "custom"
    breakpoints: tuple = ()

    @classmethod
    def constant(cls, value):
        value = np.asarray(value, dtype=float)
        zero = np.zeros_like(value)
        return cls(lambda t: value.copy(), lambda t: zero.copy(), "constant")

    @classmethod
    def ramp_hold(cls, target, ramp_time, start=None):
        """Linear ramp from ``start`` (default 0) to ``target`` over ``ramp_time``, then hold."""
        target = np.asarray(target, dtype=float)
        start = np.zeros_like(target) if start is None else np.asarray(start, dtype=float)
        slope = (target - start) / ramp_time

        def u(t):
            return start + (target - start) * min(t / ramp_time, 1.0)

        def udot(t):
            return slope.copy() if t < ramp_time else np.zeros_like(target)

        return cls(u, udot, "ramp_hold", (float(ramp_time),))

    @classmethod
    def sinusoid(cls, direction, sup_udot, omega=1.0, offset=None):
        """``u = offset + c sin(omega t) d`` scaled so that ``sup ||udot|| = sup_udot``."""
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        amp = sup_udot / omega
        offset = np.zeros_like(d) if offset is None else np.asarray(offset, dtype=float)
        return cls(
            lambda t: offset + amp * np.sin(omega * t) * d,
            lambda t: amp * omega * np.cos(omega * t) * d,
            "sinusoid",
        )

    def udot_sup(self, horizon, samples=2001):
        ts = np.linspace(0.0, horizon, samples)
        return float(max(np.linalg.norm(self.udot(t)) for t in ts))

    def consistency_defect(self, horizon, h=1e-5, probes=50):
        """Largest ``||(u(t+h) - u(t))/h - udot(t)||`` on a probe grid."""
        worst = 0.0
        for t in np.linspace(0.0, horizon, probes):
            if any(abs(t - b) <= 2 * h for b in self.breakpoints):
                continue
            fd = (np.asarray(self.u(t + h)) - np.asarray(self.u(t))) / h
            worst = max(worst, float(np.linalg.norm(fd - self.udot(t))))
        return worst


def _rk4(A, udot, t, x, h):
    # endpoint samples are nudged inside the step so a derivative jump at a
    # breakpoint is read from the correct side
    eps = 1e-12 * h
    k1 = A @ x + udot(t + eps)
    k2 = A @ (x + 0.5 * h * k1) + udot(t + 0.5 * h)
    k3 = A @ (x + 0.5 * h * k2) + udot(t + 0.5 * h)
    k4 = A @ (x + h * k3) + udot(t + h - eps)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def simulate_tracking(A, signal, horizon=None, dt=None, weights=None, tol=RK_TOL, dt_min=DT_MIN):
    """Integrate ``x' = A x + udot(t)`` from ``x(0) = u(0)``.

    Classical RK4 with step doubling: each step is compared against two half
    steps and halved until the difference is below ``tol``.  Hitting
    ``dt_min`` emits a :class:`StiffnessWarning` and accepts the step.
    The reference is ``W u(t)`` (``u(t)`` without weights).
    """
    A = np.asarray(A, dtype=float)
    times = _resolve_grid(A, weights, horizon, dt)
    x = np.asarray(signal.u(0.0), dtype=float).copy()
    n = x.size
    states = np.empty((len(times), n))
    inputs = np.empty((len(times), n))
    udots = np.empty(len(times))
    states[0] = x
    inputs[0] = signal.u(0.0)
    udots[0] = np.linalg.norm(signal.udot(0.0))
    notes = []
    h = times[1] - times[0]
    for i in range(1, len(times)):
        t, t_end = times[i - 1], times[i]
        while t < t_end - 1e-15 * max(1.0, t_end):
            stop = min([b for b in signal.breakpoints if t < b < t_end], default=t_end)
            h = min(h, stop - t)
            while True:
                full = _rk4(A, signal.udot, t, x, h)
                half = _rk4(A, signal.udot, t + 0.5 * h, _rk4(A, signal.udot, t, x, 0.5 * h), 0.5 * h)
                err = float(np.linalg.norm(half - full))
                if err <= tol:
                    break
                if h / 2 < dt_min:
                    msg = f"step size floor {dt_min:g} reached at t = {t:.6g} (local error {err:.3g})"
                    if not notes:
                        warnings.warn(msg, StiffnessWarning, stacklevel=2)
                    notes.append(msg)
                    break
                h /= 2
            x = half
            t = stop if abs(t + h - stop) <= 1e-14 * max(1.0, stop) else t + h
            if err < tol / 64:
                h *= 2
        states[i] = x
        inputs[i] = signal.u(t_end)
        udots[i] = np.linalg.norm(signal.udot(t_end))
    ref = inputs @ weights.W.T if weights is not None else inputs.copy()
    return SimTrace(times, states, ref, inputs=inputs, udot_norms=udots, warnings=tuple(notes))


# --------------------------------------------------------------------------
# input-to-state bounds


@dataclass(frozen=True)
class ISSReport:
    measured_decay_rate: float
    measured_gain: float | None
    bound_satisfied_under_measured_constants: bool
    steady_error: float


def _fit_rate(times, errors):
    """Negative slope of ``log e`` while ``e`` stays above its numerical floor."""
    if errors.size < 3 or errors[0] <= 0:
        return float("nan")
    floor = max(1e-12, 1e-9 * errors[0])
    below = np.nonzero(errors <= floor)[0]
    stop = below[0] if below.size else errors.size
    if stop < 3:
        return float("nan")
    slope = np.polyfit(times[:stop], np.log(errors[:stop]), 1)[0]
    return float(-slope)


def iss_report(trace, tail_fraction=0.25):
    """Empirical decay rate, input gain and bound check for a trace.

    The decay rate ``rho`` is a log-linear fit of the error over the final
    input-free stretch of the run (the whole run when the input is constant).
    The gain ``gamma`` is the smallest constant with
    ``e(t) <= exp(-rho t) e(0) + gamma sup_{s<=t} ||udot(s)||`` at every
    sample where the input has moved; the bound is then checked on the
    remaining samples.  ``steady_error`` is the largest error over the final
    ``tail_fraction`` of the run.
    """
    if len(trace) < 10:
        raise InsufficientTrace(f"need at least 10 samples, got {len(trace)}")
    t = trace.times
    e = trace.error_norms
    udot = trace.udot_norms if trace.udot_norms is not None else np.zeros_like(t)
    running = np.maximum.accumulate(udot)
    steady = float(e[int(len(t) * (1.0 - tail_fraction)):].max())

    active = np.nonzero(udot > 0)[0]
    quiet = active[-1] + 1 if active.size else 0
    rate = _fit_rate(t[quiet:] - t[quiet] if quiet < len(t) else t[:0], e[quiet:])
    head = np.exp(-rate * t) * e[0] if np.isfinite(rate) else np.full_like(t, e[0])

    moved = running > 0
    if moved.any():
        gain = float(np.max(np.maximum(e[moved] - head[moved], 0.0) / running[moved]))
    else:
        gain = None
    bound = head + (gain or 0.0) * running
    slack = 1e-9 + 1e-6 * max(1.0, float(e.max()))
    ok = bool(np.all(e <= bound * (1 + 1e-6) + slack))
    return ISSReport(rate, gain, ok, steady)


def write_trace(path_stem, trace, title=""):
    """Write ``<stem>.csv`` and ``<stem>.svg`` (states and log error)."""
    stem = Path(path_stem)
    stem.with_suffix(".csv").write_text(trace.to_csv())
    plot_trace_svg(stem.with_suffix(".svg"), trace, title)


def plot_trace_svg(path, trace, title=""):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(trace.times, trace.states, linewidth=1)
    ax1.set_ylabel("state")
    if title:
        ax1.set_title(title)
    positive = np.where(trace.error_norms > 0, trace.error_norms, np.nan)
    ax2.semilogy(trace.times, positive, color="black", linewidth=1)
    ax2.set_xlabel("t")
    ax2.set_ylabel("error norm")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
