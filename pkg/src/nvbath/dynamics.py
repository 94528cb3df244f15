"""Mean-field equations of motion for one Monte-Carlo sample.

Each spin is a unit Bloch vector R_k precessing in the local field of the
others, dR_k/dt = B_k x R_k, with operator expectations S = R/2.  The
central spin (index 0) is a symmetric pseudospin-1/2 standing in for the
two-level reduction of the S = 1 defect; its levels shift the bath by
+-A_j/2, and it dephases in the net bath field along z.

The per-sample API here is the readable reference; `sequences` drives the
same kernel batched over samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine
from .errors import ConfigError
from .lattice import BathConfiguration
from .units import mhz_to_rad_per_us

DEFAULT_A1_MHZ = {"111": 114.0, "11-1": 86.0, "1-11": 86.0, "-111": 86.0}


@dataclass
class EvolutionParams:
    """Integration and model settings for trajectory runs."""

    dt: float | None = None          # us; None = auto from the step rule
    t_max: float = 1.0               # us
    sample_stride: int | None = None  # record every this many steps; None = auto
    hyperfine_enabled: bool = False
    a1_mhz: dict = field(default_factory=lambda: dict(DEFAULT_A1_MHZ))
    system_bath_scale: float = engine.DEFAULT_SYSTEM_BATH_SCALE
    backaction_enabled: bool = True

    def a1_rad_per_us(self) -> dict:
        return {axis: mhz_to_rad_per_us(v) for axis, v in self.a1_mhz.items()}

    def hyperfine_offsets(self, config: BathConfiguration, m_i: np.ndarray) -> np.ndarray:
        """Static z-field offsets A1(axis_j) * mI_j, rad/us."""
        a1 = self.a1_rad_per_us()
        per_spin = np.array([a1[axis] for axis in config.jt_axes])
        return per_spin * np.asarray(m_i, dtype=float)

    def max_hyperfine_offset(self) -> float:
        if not self.hyperfine_enabled:
            return 0.0
        return max(abs(v) for v in self.a1_rad_per_us().values())

    def resolve_dt(self, config: BathConfiguration) -> float:
        """Validated step size: auto-selected, or checked against the rule."""
        bound = engine.stable_dt(
            config.couplings_system_bath,
            config.couplings_intra_bath,
            self.system_bath_scale,
            self.max_hyperfine_offset(),
        )
        if self.dt is None:
            return bound
        if self.dt > bound * (1.0 + 1e-12):
            raise ConfigError(
                f"dt = {self.dt} exceeds the stability bound {bound:.3e} us "
                f"(dt * max|B| <= {engine.MAX_PHASE_PER_STEP})"
            )
        return self.dt


@dataclass
class SpinEnsembleState:
    """Bloch vectors of all spins at one instant, for one sample."""

    R: np.ndarray                    # (J+1, 3); row 0 is the central spin
    time: float = 0.0
    nuclear_mI: np.ndarray | None = None  # (J,) in {-1, 0, +1}, static

    @property
    def n_bath(self) -> int:
        return len(self.R) - 1

    def copy(self) -> "SpinEnsembleState":
        return SpinEnsembleState(
            R=self.R.copy(),
            time=self.time,
            nuclear_mI=None if self.nuclear_mI is None else self.nuclear_mI.copy(),
        )


def sample_initial_state(
    config: BathConfiguration,
    seed,
    params: EvolutionParams | None = None,
) -> SpinEnsembleState:
    """Unpolarized bath, central spin along +x (the post-preparation state).

    Bath vectors are uniform on the unit sphere (z uniform in [-1, 1],
    azimuth uniform).  When hyperfine is enabled each spin also gets a
    static nuclear projection mI drawn uniformly from {-1, 0, +1}.
    """
    params = params or EvolutionParams()
    rng = np.random.default_rng(seed)
    J = config.n_spins
    R = np.empty((J + 1, 3))
    R[0] = (1.0, 0.0, 0.0)
    z = rng.uniform(-1.0, 1.0, size=J)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=J)
    s = np.sqrt(1.0 - z * z)
    R[1:, 0] = s * np.cos(phi)
    R[1:, 1] = s * np.sin(phi)
    R[1:, 2] = z
    m_i = rng.integers(-1, 2, size=J) if params.hyperfine_enabled else None
    return SpinEnsembleState(R=R, nuclear_mI=m_i)


def _offsets_for(state: SpinEnsembleState, config: BathConfiguration,
                 params: EvolutionParams) -> np.ndarray:
    if params.hyperfine_enabled and state.nuclear_mI is not None:
        return params.hyperfine_offsets(config, state.nuclear_mI)
    return np.zeros(config.n_spins)


def local_field(
    k: int,
    state: SpinEnsembleState,
    config: BathConfiguration,
    params: EvolutionParams | None = None,
) -> np.ndarray:
    """Local field B_k (rad/us) on spin k in the doubly rotating frame.

    k = 0: the central spin sees z * sb * 0.5 * sum_j A_j Rz_j.
    k >= 1: bath spin j sees the back-action 0.5 * A_j * P0z plus the
    intra-bath sums, with the -1/4 transverse factor of the flip-flop
    term, plus its static hyperfine offset when enabled.
    """
    params = params or EvolutionParams()
    R = state.R
    A = config.couplings_system_bath
    D = config.couplings_intra_bath
    sb = params.system_bath_scale * engine.PSEUDOSPIN_SIGN
    if k == 0:
        return np.array([0.0, 0.0, 0.5 * sb * float(A @ R[1:, 2])])
    j = k - 1
    offsets = _offsets_for(state, config, params)
    row = D[j]
    bz = 0.5 * sb * A[j] * R[0, 2] + 0.5 * float(row @ R[1:, 2]) + offsets[j]
    bx = -0.25 * float(row @ R[1:, 0])
    by = -0.25 * float(row @ R[1:, 1])
    return np.array([bx, by, bz])


def _to_kernel_layout(state: SpinEnsembleState) -> np.ndarray:
    return np.ascontiguousarray(state.R.T[:, :, None])  # (3, J+1, 1)


def step(
    state: SpinEnsembleState,
    config: BathConfiguration,
    dt: float,
    params: EvolutionParams | None = None,
) -> SpinEnsembleState:
    """One 4th-order Runge-Kutta step followed by renormalization."""
    params = params or EvolutionParams()
    buf = _to_kernel_layout(state)
    hz = _offsets_for(state, config, params)[:, None]
    empty = np.empty(0, dtype=np.int64)
    engine.evolve(
        buf, 1, 0 if params.backaction_enabled else -1,
        config.couplings_system_bath,
        config.couplings_intra_bath,
        hz,
        params.system_bath_scale * engine.PSEUDOSPIN_SIGN,
        dt, 1,
        empty, empty, np.empty((0, 3, 3)),
        empty, empty, np.empty((0, 1)), np.empty((0, 1)),
    )
    new = state.copy()
    new.R = np.ascontiguousarray(buf[:, :, 0].T)
    new.time = state.time + dt
    return new


def apply_pulse(state: SpinEnsembleState, axis, angle: float) -> SpinEnsembleState:
    """Instantaneous ideal rotation of the central spin only."""
    mat = engine.rotation_matrix(axis, angle)
    new = state.copy()
    new.R[0] = mat @ state.R[0]
    return new


def classical_energy(
    state: SpinEnsembleState,
    config: BathConfiguration,
    params: EvolutionParams | None = None,
) -> float:
    """Mean-field energy functional; conserved between pulses.

    H = sb * (Rz0/2) * sum_j A_j Rz_j/2
        + sum_{j<k} d_jk [Rz_j Rz_k / 4 - (Rx_j Rx_k + Ry_j Ry_k) / 8]
        + sum_j hz_j Rz_j / 2
    """
    params = params or EvolutionParams()
    R = state.R
    A = config.couplings_system_bath
    D = config.couplings_intra_bath
    sb = params.system_bath_scale * engine.PSEUDOSPIN_SIGN
    rz = R[1:, 2]
    e = 0.25 * sb * R[0, 2] * float(A @ rz)
    e += 0.125 * float(rz @ D @ rz)
    e -= 0.0625 * float(R[1:, 0] @ D @ R[1:, 0] + R[1:, 1] @ D @ R[1:, 1])
    offsets = _offsets_for(state, config, params)
    e += 0.5 * float(offsets @ rz)
    return e
