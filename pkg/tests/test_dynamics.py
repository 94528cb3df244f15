import numpy as np
import pytest
from scipy.integrate import solve_ivp

from nvbath import dynamics, engine, lattice
from nvbath.errors import ConfigError, NumericalError

SB = engine.DEFAULT_SYSTEM_BATH_SCALE


def two_spin_config(d_value=1.3, a1=2.0, a2=-0.7):
    """Hand-built two-bath-spin configuration with prescribed couplings."""
    D = np.array([[0.0, d_value], [d_value, 0.0]])
    return lattice.BathConfiguration(
        positions=np.array([[0.0, 0.0, 3.0], [3.0, 0.0, 0.0]]),
        jt_axes=["111", "11-1"],
        couplings_system_bath=np.array([a1, a2]),
        couplings_intra_bath=D,
        b_rms=0.5 * np.sqrt(a1**2 + a2**2),
        seed=0,
        concentration_ppm=10.0,
        n_cells_per_axis=10,
    )


def test_local_field_zero_bath_z():
    cfg = two_spin_config()
    st = dynamics.sample_initial_state(cfg, 1)
    st.R[1:, 2] = 0.0
    b0 = dynamics.local_field(0, st, cfg)
    assert np.allclose(b0, 0.0, atol=1e-15)


def test_local_field_two_spin_hand_formula():
    cfg = two_spin_config(d_value=1.3, a1=2.0, a2=-0.7)
    params = dynamics.EvolutionParams(system_bath_scale=1.0)
    st = dynamics.sample_initial_state(cfg, 2, params)
    r0, r1, r2 = st.R
    b0 = dynamics.local_field(0, st, cfg, params)
    assert np.allclose(b0, [0, 0, 0.5 * (2.0 * r1[2] - 0.7 * r2[2])], rtol=1e-13)
    b1 = dynamics.local_field(1, st, cfg, params)
    expect = np.array([
        -0.25 * 1.3 * r2[0],
        -0.25 * 1.3 * r2[1],
        0.5 * 2.0 * r0[2] + 0.5 * 1.3 * r2[2],
    ])
    assert np.allclose(b1, expect, rtol=1e-13)
    b2 = dynamics.local_field(2, st, cfg, params)
    expect2 = np.array([
        -0.25 * 1.3 * r1[0],
        -0.25 * 1.3 * r1[1],
        0.5 * (-0.7) * r0[2] + 0.5 * 1.3 * r1[2],
    ])
    assert np.allclose(b2, expect2, rtol=1e-13)


def test_larmor_precession_angle():
    # central spin held along z feeds a constant field 0.5*A to the bath spin
    cfg = two_spin_config(d_value=0.0, a1=4.0, a2=0.0)
    cfg.couplings_system_bath = np.array([4.0, 0.0])
    params = dynamics.EvolutionParams(system_bath_scale=1.0)
    st = dynamics.sample_initial_state(cfg, 3, params)
    st.R[0] = (0.0, 0.0, 1.0)
    st.R[1] = (1.0, 0.0, 0.0)
    st.R[2] = (0.0, 0.0, 1.0)
    omega = 0.5 * 4.0
    dt = 0.001 / omega
    n = int(round(1.0 / (omega * dt)))  # total angle 1 rad
    s = st
    for _ in range(n):
        s = dynamics.step(s, cfg, dt, params)
    angle = np.arctan2(s.R[1, 1], s.R[1, 0])
    assert abs(angle - omega * n * dt) < 1e-8


def test_rk4_convergence_order(small_bath):
    params = dynamics.EvolutionParams()
    st = dynamics.sample_initial_state(small_bath, 11)
    t_total = 0.2 * small_bath.t2_star_predicted
    dt0 = params.resolve_dt(small_bath)

    def final_state(dt):
        n = int(round(t_total / dt))
        s = st
        for _ in range(n):
            s = dynamics.step(s, small_bath, t_total / n, params)
        return s.R

    r1 = final_state(dt0)
    r2 = final_state(dt0 / 2)
    r3 = final_state(dt0 / 4)
    e12 = np.max(np.abs(r1 - r2))
    e23 = np.max(np.abs(r2 - r3))
    order = np.log2(e12 / e23)
    assert order >= 3.8


def test_energy_conservation(bath_10ppm):
    params = dynamics.EvolutionParams()
    # moderate step (phase/step 0.02) so the RK4 energy drift sits below 1e-6
    dt = 0.4 * params.resolve_dt(bath_10ppm)
    st = dynamics.sample_initial_state(bath_10ppm, 21)
    e0 = dynamics.classical_energy(st, bath_10ppm, params)
    scale = abs(e0)
    s = st
    for _ in range(2000):
        s = dynamics.step(s, bath_10ppm, dt, params)
    e1 = dynamics.classical_energy(s, bath_10ppm, params)
    assert abs(e1 - e0) / scale < 1e-6


def test_norm_preservation(small_bath):
    params = dynamics.EvolutionParams()
    dt = params.resolve_dt(small_bath)
    s = dynamics.sample_initial_state(small_bath, 31)
    for _ in range(200):
        s = dynamics.step(s, small_bath, dt, params)
        norms = np.linalg.norm(s.R, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-9


def test_prerenormalization_drift(small_bath):
    from nvbath import sequences
    params = dynamics.EvolutionParams()
    state, hz = sequences._sample_bath_batch(small_bath, params, 8, 41, 1)
    bound = engine.max_field_estimate(
        small_bath.couplings_system_bath, small_bath.couplings_intra_bath, SB)
    dt = 0.04 / bound
    empty = np.empty(0, dtype=np.int64)
    engine.evolve(
        state, 1, 0, small_bath.couplings_system_bath,
        small_bath.couplings_intra_bath, hz, SB, dt, 10_000,
        empty, empty, np.empty((0, 3, 3)), empty, empty,
        np.empty((0, 8)), np.empty((0, 8)), renormalize=False,
    )
    norms = np.sqrt((state**2).sum(axis=0))
    assert np.max(np.abs(norms - 1.0)) < 1e-6


def test_ising_limit_z_constant():
    # transverse field factors vanish with the flip-flop terms removed,
    # so every bath z-component is a constant of motion
    cfg = two_spin_config(d_value=0.9)
    cfg.couplings_intra_bath = np.zeros((2, 2))  # freeze the flip-flops entirely
    params = dynamics.EvolutionParams()
    bound = engine.max_field_estimate(cfg.couplings_system_bath,
                                      cfg.couplings_intra_bath, SB)
    dt = 0.01 / bound
    s = dynamics.sample_initial_state(cfg, 51, params)
    z0 = s.R[1:, 2].copy()
    for _ in range(1000):
        s = dynamics.step(s, cfg, dt, params)
    assert np.max(np.abs(s.R[1:, 2] - z0)) < 1e-10


def test_pulse_basics():
    cfg = two_spin_config()
    st = dynamics.sample_initial_state(cfg, 61)
    st.R[0] = (0.0, 0.0, 1.0)
    flipped = dynamics.apply_pulse(st, (1.0, 0.0, 0.0), np.pi)
    assert np.allclose(flipped.R[0], (0.0, 0.0, -1.0), atol=1e-15)
    assert np.array_equal(flipped.R[1:], st.R[1:])

    st.R[0] = (0.0, 0.0, 1.0)
    quarter = dynamics.apply_pulse(st, (0.0, 1.0, 0.0), np.pi / 2)
    assert np.allclose(quarter.R[0], (1.0, 0.0, 0.0), atol=1e-15)


def test_pulse_involution():
    cfg = two_spin_config()
    st = dynamics.sample_initial_state(cfg, 62)
    once = dynamics.apply_pulse(st, (1.0, 0.0, 0.0), np.pi)
    twice = dynamics.apply_pulse(once, (1.0, 0.0, 0.0), np.pi)
    assert np.max(np.abs(twice.R[0] - st.R[0])) < 1e-12


def test_pulse_axis_validation():
    cfg = two_spin_config()
    st = dynamics.sample_initial_state(cfg, 63)
    with pytest.raises(ValueError):
        dynamics.apply_pulse(st, (1.0, 1.0, 0.0), np.pi)


def test_initial_state_statistics(bath_10ppm):
    # pooled over samples: uniform-sphere moments of the bath vectors
    params = dynamics.EvolutionParams()
    zs = []
    for seed in range(150):
        st = dynamics.sample_initial_state(bath_10ppm, 1000 + seed, params)
        assert np.array_equal(st.R[0], [1.0, 0.0, 0.0])
        zs.append(st.R[1:, 2])
    z = np.concatenate(zs)  # 12000 draws
    assert abs(z.mean()) < 3.5 / np.sqrt(len(z) * 3)  # std of z is 1/sqrt(3)
    assert abs((z**2).mean() - 1.0 / 3.0) < 3e-2
    norms = np.linalg.norm(st.R, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-12)


def test_initial_state_hyperfine_labels(bath_10ppm):
    params = dynamics.EvolutionParams(hyperfine_enabled=True)
    st = dynamics.sample_initial_state(bath_10ppm, 71, params)
    assert st.nuclear_mI is not None
    assert set(np.unique(st.nuclear_mI)) <= {-1, 0, 1}
    offsets = params.hyperfine_offsets(bath_10ppm, st.nuclear_mI)
    a1 = params.a1_rad_per_us()
    for j, (axis, m) in enumerate(zip(bath_10ppm.jt_axes, st.nuclear_mI)):
        assert offsets[j] == a1[axis] * m


def test_step_rule_enforced(bath_10ppm):
    bound = dynamics.EvolutionParams().resolve_dt(bath_10ppm)
    with pytest.raises(ConfigError):
        dynamics.EvolutionParams(dt=2.1 * bound).resolve_dt(bath_10ppm)


def test_nan_abort():
    cfg = two_spin_config()
    st = dynamics.sample_initial_state(cfg, 81)
    st.R[1] = (np.nan, 0.0, 0.0)
    with pytest.raises(NumericalError):
        dynamics.step(st, cfg, 1e-3)


def test_flip_flop_pair_against_independent_integrator():
    """Isolated bath pair: kernel vs scipy high-accuracy integration."""
    d = 2.0
    cfg = two_spin_config(d_value=d, a1=0.0, a2=0.0)
    params = dynamics.EvolutionParams(system_bath_scale=1.0)
    st = dynamics.sample_initial_state(cfg, 91, params)
    st.R[0] = (1.0, 0.0, 0.0)
    st.R[1] = (1.0, 0.0, 0.0)   # x-hat
    st.R[2] = (0.0, 0.0, 1.0)   # z-hat

    def rhs(t, y):
        r = y.reshape(2, 3)
        b1 = np.array([-0.25 * d * r[1, 0], -0.25 * d * r[1, 1], 0.5 * d * r[1, 2]])
        b2 = np.array([-0.25 * d * r[0, 0], -0.25 * d * r[0, 1], 0.5 * d * r[0, 2]])
        return np.concatenate([np.cross(b1, r[0]), np.cross(b2, r[1])])

    t_end = 6.0
    sol = solve_ivp(rhs, (0.0, t_end), np.concatenate([st.R[1], st.R[2]]),
                    rtol=1e-12, atol=1e-12, dense_output=True)
    n = 3000
    s = st
    for _ in range(n):
        s = dynamics.step(s, cfg, t_end / n, params)
    ref = sol.y[:, -1].reshape(2, 3)
    assert np.max(np.abs(s.R[1:] - ref)) < 1e-6

    # flip-flop frequency scales linearly with the coupling
    def zexchange_freq(dval):
        c = two_spin_config(d_value=dval, a1=0.0, a2=0.0)

        def rhs2(t, y):
            r = y.reshape(2, 3)
            b1 = np.array([-0.25 * dval * r[1, 0], -0.25 * dval * r[1, 1],
                           0.5 * dval * r[1, 2]])
            b2 = np.array([-0.25 * dval * r[0, 0], -0.25 * dval * r[0, 1],
                           0.5 * dval * r[0, 2]])
            return np.concatenate([np.cross(b1, r[0]), np.cross(b2, r[1])])

        ts = np.linspace(0, 40.0 / dval, 4096)
        sol2 = solve_ivp(rhs2, (0, ts[-1]), np.array([1.0, 0, 0, 0, 0, 1.0]),
                         t_eval=ts, rtol=1e-10, atol=1e-10)
        z1 = sol2.y[2]
        spec = np.abs(np.fft.rfft(z1 - z1.mean()))
        freqs = np.fft.rfftfreq(len(ts), ts[1] - ts[0])
        return freqs[np.argmax(spec)]

    f1 = zexchange_freq(1.0)
    f2 = zexchange_freq(2.0)
    assert abs(f2 / f1 - 2.0) < 0.05
