import numpy as np
import pytest

from nvbath import dynamics, lattice, sequences
from nvbath.errors import ConfigError
from tests.conftest import frozen_copy

SQ3 = np.sqrt(3.0)


def empty_bath_config():
    return lattice.BathConfiguration(
        positions=np.empty((0, 3)),
        jt_axes=[],
        couplings_system_bath=np.empty(0),
        couplings_intra_bath=np.empty((0, 0)),
        b_rms=1.0,  # placeholder scale for grids
        seed=0,
        concentration_ppm=10.0,
        n_cells_per_axis=10,
    )


def classical_static_fid(times, A):
    """Frozen-bath closed form: product of per-spin sinc factors.

    Each bath spin contributes <cos(k A/2 u t)> with u uniform on [-1, 1]
    and k the spin-length correction, i.e. sinc(k A t / 2).
    """
    x = SQ3 * np.outer(times, A) / 2.0
    return np.prod(np.sinc(x / np.pi), axis=1)


def test_empty_bath_fid_constant():
    cfg = empty_bath_config()
    params = dynamics.EvolutionParams(t_max=2.0)
    tr = sequences.run_fid(cfg, params, M=16, seed=1)
    assert np.array_equal(tr.coherence_x, np.ones(len(tr.times)))
    assert np.allclose(tr.coherence_y, 0.0, atol=1e-15)


def test_fid_starts_at_exactly_one(bath_10ppm):
    params = dynamics.EvolutionParams(t_max=0.2 * bath_10ppm.t2_star_predicted)
    tr = sequences.run_fid(bath_10ppm, params, M=32, seed=2)
    assert tr.times[0] == 0.0
    assert tr.coherence_x[0] == 1.0
    assert tr.stderr[0] == 0.0


def test_frozen_bath_matches_static_average(bath_10ppm):
    cfg = frozen_copy(bath_10ppm)
    t2p = cfg.t2_star_predicted
    params = dynamics.EvolutionParams(t_max=1.2 * t2p)
    M = 10_000
    tr = sequences.run_fid(cfg, params, M=M, seed=3)
    pred = classical_static_fid(tr.times, cfg.couplings_system_bath)
    stderr = np.maximum(tr.stderr, 1e-4)
    assert np.max(np.abs(tr.coherence_x - pred) / (3.0 * stderr + 1e-12)) < 1.0

    # early-decay window: the static average also tracks the two-point
    # quantum dephasing product (second moments match by construction)
    half = tr.times <= 0.5 * t2p
    qpred = np.prod(np.cos(np.outer(tr.times[half], cfg.couplings_system_bath) / 2.0), axis=1)
    assert np.max(np.abs(tr.coherence_x[half] - qpred)) < 3.0 * np.max(stderr[half]) + 0.01


def test_static_bath_echo_is_one(bath_10ppm):
    cfg = frozen_copy(bath_10ppm)
    params = dynamics.EvolutionParams()
    times = np.linspace(0.5, 4.0, 6) * cfg.t2_star_predicted
    tr = sequences.run_hahn_echo(cfg, params, M=64, total_times=times, seed=4)
    assert np.max(np.abs(tr.echo_amplitude - 1.0)) < 1e-6


def test_cpmg2_static_bath_refocuses(bath_10ppm):
    cfg = frozen_copy(bath_10ppm)
    t_total = 2.0 * cfg.t2_star_predicted
    params = dynamics.EvolutionParams(t_max=t_total)
    seq = sequences.PulseSequence(
        events=[(t_total / 4, sequences.X_AXIS, np.pi),
                (3 * t_total / 4, sequences.X_AXIS, np.pi)],
        readout_times=[t_total],
    )
    tr = sequences.run_custom(cfg, params, seq, M=64, seed=5)
    amp = np.hypot(tr.coherence_x[-1], tr.coherence_y[-1])
    assert abs(amp - 1.0) < 1e-6


def test_custom_empty_sequence_reproduces_fid(bath_10ppm):
    params = dynamics.EvolutionParams(t_max=0.8 * bath_10ppm.t2_star_predicted)
    fid = sequences.run_fid(bath_10ppm, params, M=40, seed=6)
    custom = sequences.run_custom(
        bath_10ppm, params, sequences.PulseSequence.fid(), M=40, seed=6)
    assert np.array_equal(fid.times, custom.times)
    assert np.array_equal(fid.coherence_x, custom.coherence_x)
    assert np.array_equal(fid.coherence_y, custom.coherence_y)


def test_custom_pi_pulse_reproduces_hahn_echo(bath_10ppm):
    params = dynamics.EvolutionParams()
    total = np.array([1.0, 2.0]) * bath_10ppm.t2_star_predicted
    echo = sequences.run_hahn_echo(bath_10ppm, params, M=40,
                                   total_times=total, seed=7)
    dt = echo.metadata["dt_us"]
    for i, t_req in enumerate(echo.times):
        n_steps = int(round(t_req / dt))
        p = dynamics.EvolutionParams(dt=dt, t_max=t_req, sample_stride=n_steps)
        seq = sequences.PulseSequence(
            events=[(t_req / 2, sequences.X_AXIS, np.pi)], readout_times=[t_req])
        custom = sequences.run_custom(bath_10ppm, p, seq, M=40, seed=7)
        assert custom.times[-1] == echo.times[i]
        assert custom.coherence_x[-1] == echo.coherence_x[i]
        assert custom.coherence_y[-1] == echo.coherence_y[i]


def test_echo_never_below_fid(bath_10ppm):
    params = dynamics.EvolutionParams()
    t2p = bath_10ppm.t2_star_predicted
    total = np.linspace(0.4, 2.4, 6) * t2p
    echo = sequences.run_hahn_echo(bath_10ppm, params, M=400,
                                   total_times=total, seed=8)
    pf = dynamics.EvolutionParams(t_max=total[-1])
    fid = sequences.run_fid(bath_10ppm, pf, M=400, seed=8)
    fid_at = np.interp(echo.times, fid.times, np.abs(fid.coherence_x))
    slack = 3.0 * (echo.stderr + np.interp(echo.times, fid.times, fid.stderr))
    assert np.all(echo.echo_amplitude + slack >= fid_at - 1e-12)


def test_trace_determinism(bath_10ppm):
    params = dynamics.EvolutionParams(t_max=0.5 * bath_10ppm.t2_star_predicted)
    a = sequences.run_fid(bath_10ppm, params, M=25, seed=9)
    b = sequences.run_fid(bath_10ppm, params, M=25, seed=9)
    assert np.array_equal(a.coherence_x, b.coherence_x)
    assert np.array_equal(a.stderr, b.stderr)
    c = sequences.run_fid(bath_10ppm, params, M=25, seed=10)
    assert not np.array_equal(a.coherence_x, c.coherence_x)


def test_stderr_scales_inverse_sqrt_m(bath_10ppm):
    params = dynamics.EvolutionParams(t_max=1.0 * bath_10ppm.t2_star_predicted)
    scaled = {}
    for M in (100, 1000, 10_000):
        tr = sequences.run_fid(bath_10ppm, params, M=M, seed=11)
        i = len(tr.times) // 2
        scaled[M] = tr.stderr[i] * np.sqrt(M)
    vals = np.array(list(scaled.values()))
    assert np.max(vals) / np.min(vals) < 1.2


def test_coherence_bounds(bath_10ppm):
    params = dynamics.EvolutionParams(t_max=2.0 * bath_10ppm.t2_star_predicted)
    tr = sequences.run_fid(bath_10ppm, params, M=64, seed=12)
    assert np.all(np.abs(tr.coherence_x) <= 1.0 + 1e-12)
    assert np.all(tr.stderr >= 0.0)


def test_overlapping_pulses_rejected():
    with pytest.raises(ConfigError):
        sequences.PulseSequence(
            events=[(1.0, sequences.X_AXIS, np.pi), (1.0, sequences.Y_AXIS, np.pi)],
            readout_times=[2.0],
        )


def test_snapped_pulse_collision_rejected(bath_10ppm):
    params = dynamics.EvolutionParams(t_max=1.0 * bath_10ppm.t2_star_predicted)
    dt_probe = sequences.run_fid(bath_10ppm, params, M=1, seed=1).metadata["dt_us"]
    seq = sequences.PulseSequence(
        events=[(0.5, sequences.X_AXIS, np.pi), (0.5 + dt_probe / 8, sequences.X_AXIS, np.pi)],
        readout_times=[1.0 * bath_10ppm.t2_star_predicted],
    )
    with pytest.raises(ConfigError):
        sequences.run_custom(bath_10ppm, params, seq, M=2, seed=13)


def test_echo_times_must_ascend(bath_10ppm):
    with pytest.raises(ConfigError):
        sequences.run_hahn_echo(bath_10ppm, dynamics.EvolutionParams(), 4,
                                [2.0, 1.0], seed=14)


def test_hahn_sequence_invariant():
    seq = sequences.PulseSequence.hahn_echo(3.0)
    assert seq.kind == sequences.KIND_HAHN
    assert seq.events[0][0] == 1.5
    with pytest.raises(ConfigError):
        sequences.PulseSequence(events=[(1.0, sequences.X_AXIS, np.pi)],
                                readout_times=[3.0], kind=sequences.KIND_HAHN)


def test_batch_sampler_matches_per_sample(small_bath):
    params = dynamics.EvolutionParams()
    state, _ = sequences._sample_bath_batch(small_bath, params, 1, 42, n_central=1)
    single = dynamics.sample_initial_state(small_bath, 42, params)
    assert np.allclose(state[:, 1:, 0].T, single.R[1:], atol=1e-15)
    assert np.array_equal(state[:, 0, 0], single.R[0])


def test_field_record_variance(bath_10ppm):
    # frozen bath: recorded field is static per sample with variance b^2
    cfg = frozen_copy(bath_10ppm)
    params = dynamics.EvolutionParams()
    times, field = sequences.record_bath_field(cfg, params, M=4000, seed=15,
                                               t_max=0.05, n_record=8)
    assert np.allclose(field.std(axis=1)[0], field.std(axis=1)[-1], rtol=1e-6)
    var = field[0].var()
    rel = abs(var - cfg.b_rms**2) / cfg.b_rms**2
    assert rel < 0.1  # 4000 samples of a heavy-ish tailed sum
