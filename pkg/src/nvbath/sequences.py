"""Pulse sequences and Monte-Carlo coherence traces for one bath.

The preparation pi/2 pulse is implicit: every sample starts with the
central spin along +x (see `dynamics.sample_initial_state`), so an FID is
a pulse-free run and a Hahn echo has a single pi pulse about x at half
the total time.

A Hahn echo curve is produced in one pass: the bath in this regime is
autonomous (the central spin stays in the equatorial plane, so its
back-action term is identically zero), which lets one bath trajectory
carry a separate central-spin replica per echo time, each with its own
pi-pulse step.  This is numerically identical to rerunning the bath per
echo time and is covered by an equivalence test against the generic
runner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .dynamics import EvolutionParams
from .errors import ConfigError
from .lattice import BathConfiguration

X_AXIS = (1.0, 0.0, 0.0)
Y_AXIS = (0.0, 1.0, 0.0)

KIND_FID = "FID"
KIND_HAHN = "HahnEcho"
KIND_CUSTOM = "Custom"


@dataclass
class PulseSequence:
    """Ordered ideal pulses on the central spin, after the implicit preparation."""

    events: list  # [(time_us, axis, angle_rad)]
    readout_times: list
    kind: str = KIND_CUSTOM

    def __post_init__(self):
        times = [t for t, _, _ in self.events]
        if any(t < 0 for t in times):
            raise ConfigError("pulse times must be non-negative")
        if sorted(times) != times or len(set(times)) != len(times):
            raise ConfigError("pulse events must be strictly ordered in time (no overlap)")
        if self.kind == KIND_HAHN:
            if len(self.events) != 1:
                raise ConfigError("a Hahn echo has exactly one pi pulse")
            t_pulse = self.events[0][0]
            total = max(self.readout_times)
            if not math.isclose(t_pulse, total / 2.0, rel_tol=1e-12):
                raise ConfigError("Hahn echo pi pulse must sit at half the total time")

    @classmethod
    def fid(cls, readout_times=()) -> "PulseSequence":
        return cls(events=[], readout_times=list(readout_times), kind=KIND_FID)

    @classmethod
    def hahn_echo(cls, total_time: float) -> "PulseSequence":
        return cls(
            events=[(total_time / 2.0, X_AXIS, np.pi)],
            readout_times=[total_time],
            kind=KIND_HAHN,
        )


@dataclass
class CoherenceTrace:
    """Monte-Carlo averaged coherence of the central spin."""

    times: np.ndarray
    coherence_x: np.ndarray
    coherence_y: np.ndarray
    stderr: np.ndarray
    M: int
    kind: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        eps = 1e-9
        for arr in (self.coherence_x, self.coherence_y):
            if arr.size and (np.max(arr) > 1.0 + eps or np.min(arr) < -1.0 - eps):
                raise ConfigError("coherence outside [-1, 1]")

    @property
    def echo_amplitude(self) -> np.ndarray:
        """Magnitude of the averaged transverse component."""
        return np.hypot(self.coherence_x, self.coherence_y)

    @property
    def signal(self) -> np.ndarray:
        """The decay curve to fit: <Rx> for FID, transverse magnitude for echoes."""
        if self.kind == KIND_HAHN:
            return self.echo_amplitude
        return self.coherence_x


def _sample_bath_batch(config, params, M, seed, n_central):
    """Initial (3, K+J, M) state block plus per-sample hyperfine offsets."""
    rng = np.random.default_rng(seed)
    J = config.n_spins
    K = n_central
    state = np.zeros((3, K + J, M))
    state[0, :K, :] = 1.0  # central replicas along +x
    z = rng.uniform(-1.0, 1.0, size=(M, J))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=(M, J))
    s = np.sqrt(1.0 - z * z)
    state[0, K:, :] = (s * np.cos(phi)).T
    state[1, K:, :] = (s * np.sin(phi)).T
    state[2, K:, :] = z.T
    if params.hyperfine_enabled:
        m_i = rng.integers(-1, 2, size=(M, J))
        a1 = params.a1_rad_per_us()
        per_spin = np.array([a1[axis] for axis in config.jt_axes])
        hz = np.ascontiguousarray((m_i * per_spin[None, :]).T.astype(float))
    else:
        hz = np.zeros((J, M))
    return state, hz


def _base_metadata(config, params, M, seed, dt, n_steps, kind):
    return {
        "kind": kind,
        "config_seed": config.seed,
        "concentration_ppm": config.concentration_ppm,
        "b_rms": config.b_rms,
        "sample_seed": int(seed),
        "M": M,
        "dt_us": dt,
        "n_steps": n_steps,
        "system_bath_scale": params.system_bath_scale,
        "hyperfine_enabled": params.hyperfine_enabled,
        "kernel": engine.KERNEL,
    }


def _fid_grid(config, params):
    """Step count and dt: grid ends exactly at t_max, dt within the bound."""
    bound = params.resolve_dt(config)
    stride = params.sample_stride or max(1, math.ceil(params.t_max / bound) // 400)
    n_steps = math.ceil(params.t_max / bound / stride) * stride
    dt = params.t_max / n_steps
    grid = np.arange(0, n_steps + 1, stride, dtype=np.int64)
    return dt, n_steps, grid


_NO_PULSES = (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), np.empty((0, 3, 3)))


def run_fid(config: BathConfiguration, params: EvolutionParams, M: int, seed) -> CoherenceTrace:
    """Free induction decay: pulse-free average of the central Rx, Ry."""
    if M < 1:
        raise ConfigError("M must be >= 1")
    dt, n_steps, grid = _fid_grid(config, params)
    state, hz = _sample_bath_batch(config, params, M, seed, n_central=1)
    rows = np.zeros(len(grid), dtype=np.int64)
    out_x = np.empty((len(grid), M))
    out_y = np.empty((len(grid), M))
    engine.evolve(
        state, 1, 0 if params.backaction_enabled else -1,
        config.couplings_system_bath, config.couplings_intra_bath, hz,
        params.system_bath_scale * engine.PSEUDOSPIN_SIGN,
        dt, n_steps, *_NO_PULSES, grid, rows, out_x, out_y,
    )
    ddof = 1 if M > 1 else 0
    return CoherenceTrace(
        times=grid * dt,
        coherence_x=out_x.mean(axis=1),
        coherence_y=out_y.mean(axis=1),
        stderr=out_x.std(axis=1, ddof=ddof) / np.sqrt(M),
        M=M,
        kind=KIND_FID,
        metadata=_base_metadata(config, params, M, seed, dt, n_steps, KIND_FID),
    )


def _echo_schedule(total_times, dt_bound):
    """Snap echo total times onto an even-step grid with the pulse at half."""
    t = np.asarray(total_times, dtype=float)
    if t.ndim != 1 or len(t) == 0:
        raise ConfigError("total_times must be a non-empty 1-d sequence")
    if np.any(np.diff(t) <= 0):
        raise ConfigError("total_times must be sorted strictly ascending")
    if t[0] <= 0:
        raise ConfigError("echo times must be positive")
    T = float(t[-1])
    n_steps = 2 * math.ceil(T / (2.0 * dt_bound))
    dt = T / n_steps
    readout_steps = 2 * np.round(t / (2.0 * dt)).astype(np.int64)
    readout_steps = np.maximum(readout_steps, 2)
    if np.any(np.diff(readout_steps) <= 0):
        raise ConfigError("echo times collide after snapping to the step grid")
    return dt, n_steps, readout_steps


def run_hahn_echo(
    config: BathConfiguration,
    params: EvolutionParams,
    M: int,
    total_times,
    seed,
) -> CoherenceTrace:
    """Hahn echo amplitude at each total time, from one bath trajectory.

    Per total time t: prepare, evolve to t/2, ideal pi pulse about x,
    evolve to t, read the rephased transverse component.  All times are
    serviced by per-time central replicas sharing the bath.
    """
    if M < 1:
        raise ConfigError("M must be >= 1")
    dt, n_steps, readout_steps = _echo_schedule(total_times, params.resolve_dt(config))
    n_t = len(readout_steps)
    state, hz = _sample_bath_batch(config, params, M, seed, n_central=n_t)
    pulse_steps = (readout_steps // 2).astype(np.int64)
    pulse_rows = np.arange(n_t, dtype=np.int64)
    pi_x = engine.rotation_matrix(X_AXIS, np.pi)
    pulse_mats = np.broadcast_to(pi_x, (n_t, 3, 3)).copy()
    order = np.argsort(pulse_steps, kind="stable")
    rows = np.arange(n_t, dtype=np.int64)
    out_x = np.empty((n_t, M))
    out_y = np.empty((n_t, M))
    engine.evolve(
        state, n_t, 0 if params.backaction_enabled else -1,
        config.couplings_system_bath, config.couplings_intra_bath, hz,
        params.system_bath_scale * engine.PSEUDOSPIN_SIGN,
        dt, n_steps,
        pulse_steps[order], pulse_rows[order], pulse_mats[order],
        readout_steps, rows, out_x, out_y,
    )
    cx = out_x.mean(axis=1)
    cy = out_y.mean(axis=1)
    ddof = 1 if M > 1 else 0
    sx = out_x.std(axis=1, ddof=ddof) / np.sqrt(M)
    sy = out_y.std(axis=1, ddof=ddof) / np.sqrt(M)
    amp = np.hypot(cx, cy)
    stderr = np.where(amp > 1e-12, np.hypot(cx * sx, cy * sy) / np.maximum(amp, 1e-12),
                      np.maximum(sx, sy))
    meta = _base_metadata(config, params, M, seed, dt, n_steps, KIND_HAHN)
    meta["requested_total_times"] = list(np.asarray(total_times, dtype=float))
    return CoherenceTrace(
        times=readout_steps * dt,
        coherence_x=cx,
        coherence_y=cy,
        stderr=stderr,
        M=M,
        kind=KIND_HAHN,
        metadata=meta,
    )


def run_custom(
    config: BathConfiguration,
    params: EvolutionParams,
    sequence: PulseSequence,
    M: int,
    seed,
) -> CoherenceTrace:
    """Generic runner: arbitrary ideal pulses on the central spin.

    Pulse and readout times are snapped to the nearest integration step.
    An empty event list reproduces `run_fid` exactly; a single pi pulse
    about x at t/2 with readout at t reproduces `run_hahn_echo`.
    """
    if M < 1:
        raise ConfigError("M must be >= 1")
    dt, n_steps, grid = _fid_grid(config, params)
    if sequence.readout_times:
        record_steps = np.round(np.asarray(sequence.readout_times, dtype=float) / dt
                                ).astype(np.int64)
        if np.any(record_steps < 0) or np.any(record_steps > n_steps):
            raise ConfigError("readout times outside [0, t_max]")
        if np.any(np.diff(record_steps) <= 0):
            raise ConfigError("readout times collide after snapping to the step grid")
    else:
        record_steps = grid
    pulse_steps = np.array([round(t / dt) for t, _, _ in sequence.events], dtype=np.int64)
    if np.any(pulse_steps > n_steps):
        raise ConfigError("pulse beyond t_max")
    if len(np.unique(pulse_steps)) != len(pulse_steps):
        raise ConfigError("pulse events overlap after snapping to the step grid")
    pulse_mats = np.array(
        [engine.rotation_matrix(axis, angle) for _, axis, angle in sequence.events]
    ).reshape(-1, 3, 3)
    pulse_rows = np.zeros(len(pulse_steps), dtype=np.int64)
    rows = np.zeros(len(record_steps), dtype=np.int64)
    state, hz = _sample_bath_batch(config, params, M, seed, n_central=1)
    out_x = np.empty((len(record_steps), M))
    out_y = np.empty((len(record_steps), M))
    engine.evolve(
        state, 1, 0 if params.backaction_enabled else -1,
        config.couplings_system_bath, config.couplings_intra_bath, hz,
        params.system_bath_scale * engine.PSEUDOSPIN_SIGN,
        dt, n_steps, pulse_steps, pulse_rows, pulse_mats,
        record_steps, rows, out_x, out_y,
    )
    ddof = 1 if M > 1 else 0
    meta = _base_metadata(config, params, M, seed, dt, n_steps, KIND_CUSTOM)
    meta["events"] = [(t, list(ax), ang) for t, ax, ang in sequence.events]
    return CoherenceTrace(
        times=record_steps * dt,
        coherence_x=out_x.mean(axis=1),
        coherence_y=out_y.mean(axis=1),
        stderr=out_x.std(axis=1, ddof=ddof) / np.sqrt(M),
        M=M,
        kind=sequence.kind if sequence.kind != KIND_HAHN else KIND_CUSTOM,
        metadata=meta,
    )


def record_bath_field(
    config: BathConfiguration,
    params: EvolutionParams,
    M: int,
    seed,
    t_max: float,
    n_record: int,
):
    """Time series of the dephasing field at the central spin, per sample.

    Pulse-free bath evolution; the field is the z-field the central spin
    experiences, including the system-bath scale factor, so its variance
    is b^2 for an unpolarized bath.  Returns (times, field[(Q, M)]).
    """
    bound = params.resolve_dt(config)
    stride = max(1, math.ceil(t_max / bound) // n_record)
    n_steps = math.ceil(t_max / bound / stride) * stride
    dt = t_max / n_steps
    grid = np.arange(0, n_steps + 1, stride, dtype=np.int64)
    state, hz = _sample_bath_batch(config, params, M, seed, n_central=1)
    empty = np.empty(0, dtype=np.int64)
    out_field = np.empty((len(grid), M))
    engine.evolve(
        state, 1, 0 if params.backaction_enabled else -1,
        config.couplings_system_bath, config.couplings_intra_bath, hz,
        params.system_bath_scale * engine.PSEUDOSPIN_SIGN,
        dt, n_steps, *_NO_PULSES,
        empty, empty, np.empty((0, M)), np.empty((0, M)),
        field_steps=grid, out_field=out_field,
    )
    return grid * dt, out_field
