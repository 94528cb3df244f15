"""Decay-law fitting, bath noise spectra, and closed-form references.

Spectral conventions used throughout (documented once, applied
everywhere): frequencies are angular (rad/us); spectra are stored on the
non-negative half axis but hold the two-sided density, so the full-axis
integral of a density S is S[0]*dw + 2*sum(S[1:])*dw and equals the
variance of the underlying signal (Parseval).  The Ornstein-Uhlenbeck
reference spectrum follows the same convention: full-axis integral b^2,
half width at half maximum 1/tau_c.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from . import sequences
from .dynamics import EvolutionParams
from .errors import ConfigError
from .lattice import BathConfiguration

MODEL_GAUSSIAN = "Gaussian"
MODEL_STRETCHED = "StretchedExp"
MODEL_KLAUDER_ANDERSON = "KlauderAnderson"

ALPHA_BOUNDS = (0.5, 6.0)
FID_FIT_FLOOR = 0.1    # fit FID points down to this coherence
SE_FIT_FLOOR = 0.05    # fit echo points down to this amplitude
STDERR_FLOOR = 1e-3    # weight floor; exact points (stderr 0) get finite weight


def ka_exponent(t, b: float, tau_c: float):
    """Decay exponent chi(t) of the Ornstein-Uhlenbeck echo law.

    chi = (b tau_c)^2 (t/tau_c - 3 - e^(-t/tau_c) + 4 e^(-t/(2 tau_c))),
    evaluated via expm1 so the small-t cubic regime does not suffer
    cancellation.  Quasi-static limit: chi -> b^2 t^3 / (12 tau_c);
    long-time decay rate dchi/dt -> b^2 tau_c.
    """
    if b <= 0 or tau_c <= 0:
        raise ConfigError("ka_exponent requires b > 0 and tau_c > 0")
    x = np.asarray(t, dtype=float) / tau_c
    # x - 3 - e^(-x) + 4 e^(-x/2)  ==  x - expm1(-x) + 4 expm1(-x/2)
    g = x - np.expm1(-x) + 4.0 * np.expm1(-x / 2.0)
    return (b * tau_c) ** 2 * g


def ka_decay(t, b: float, tau_c: float):
    """Echo decay E(t) = exp(-chi(t)) under Ornstein-Uhlenbeck noise."""
    return np.exp(-ka_exponent(t, b, tau_c))


def gaussian_decay(t, t2_star):
    return np.exp(-((np.asarray(t) / t2_star) ** 2))


def stretched_exp_decay(t, t2, alpha):
    return np.exp(-((np.asarray(t) / t2) ** alpha))


@dataclass
class FitResult:
    model: str
    parameters: dict
    covariance: np.ndarray | None
    residual_rms: float
    converged: bool
    n_points: int = 0
    message: str = ""


def _fit_window(times, signal, floor):
    """Points from t=0 down to the first crossing below `floor`."""
    below = np.nonzero(signal < floor)[0]
    end = below[0] if len(below) else len(signal)
    return slice(0, max(end, 0))


def _initial_t2(times, signal):
    """Crossing of 1/e, linearly interpolated; fallback to the last time."""
    below = np.nonzero(signal < np.exp(-1.0))[0]
    if len(below) == 0 or below[0] == 0:
        return float(times[-1])
    i = below[0]
    t0, t1 = times[i - 1], times[i]
    y0, y1 = signal[i - 1], signal[i]
    if y0 == y1:
        return float(t1)
    return float(t0 + (y0 - np.exp(-1.0)) * (t1 - t0) / (y0 - y1))


def fit_decay(
    trace: sequences.CoherenceTrace,
    model: str,
    fixed: dict | None = None,
    residual_threshold: float = 0.1,
) -> FitResult:
    """Weighted least-squares fit of a decay model to a coherence trace.

    Weights are 1/stderr^2 with a floor; FID-like traces are fitted down
    to 0.1, echoes down to 0.05, so the noise floor does not dominate.
    For the Klauder-Anderson model pass fixed={"b": value} to fit only
    the bath correlation time.
    """
    fixed = fixed or {}
    signal = trace.signal
    floor = SE_FIT_FLOOR if trace.kind == sequences.KIND_HAHN else FID_FIT_FLOOR
    win = _fit_window(trace.times, signal, floor)
    t = trace.times[win]
    y = signal[win]
    sigma = np.maximum(trace.stderr[win], STDERR_FLOOR)
    if len(t) < 10:
        return FitResult(model, {}, None, np.inf, False, len(t),
                         "fewer than 10 points above the fit floor")
    t2_init = _initial_t2(t, y)

    if model == MODEL_GAUSSIAN:
        func = gaussian_decay
        p0, bounds, names = [t2_init], ([1e-4], [1e4]), ["T2_star"]
    elif model == MODEL_STRETCHED:
        func = stretched_exp_decay
        p0 = [t2_init, 2.0]
        bounds = ([1e-4, ALPHA_BOUNDS[0]], [1e4, ALPHA_BOUNDS[1]])
        names = ["T2", "alpha"]
    elif model == MODEL_KLAUDER_ANDERSON:
        if "b" in fixed:
            b = float(fixed["b"])
            func = lambda tt, tau_c: ka_decay(tt, b, tau_c)  # noqa: E731
            p0, bounds, names = [t2_init], ([1e-3], [1e4]), ["tau_c"]
        else:
            func = lambda tt, bb, tau_c: ka_decay(tt, bb, tau_c)  # noqa: E731
            p0 = [1.0 / max(t2_init, 1e-6), t2_init]
            bounds = ([1e-4, 1e-3], [1e4, 1e4])
            names = ["b", "tau_c"]
    else:
        raise ConfigError(f"unknown fit model {model!r}")

    try:
        popt, pcov = curve_fit(
            func, t, y, p0=p0, sigma=sigma, bounds=bounds, method="trf", maxfev=20000
        )
    except Exception as exc:  # non-convergence is a result, not a crash
        return FitResult(model, {}, None, np.inf, False, len(t), f"fit failed: {exc}")

    resid = float(np.sqrt(np.mean((func(t, *popt) - y) ** 2)))
    params = dict(zip(names, (float(v) for v in popt)))
    params.update({k: float(v) for k, v in fixed.items()})
    physical = all(v > 0 for v in params.values())
    if "alpha" in params:
        physical &= ALPHA_BOUNDS[0] <= params["alpha"] <= ALPHA_BOUNDS[1]
    converged = physical and resid < residual_threshold
    return FitResult(model, params, pcov, resid, converged, len(t))


def lorentzian_spectrum(omega, b: float, tau_c: float):
    """Two-sided O-U spectral density: integral b^2, HWHM 1/tau_c."""
    if b <= 0 or tau_c <= 0:
        raise ConfigError("lorentzian_spectrum requires b > 0 and tau_c > 0")
    w = np.asarray(omega, dtype=float)
    gamma = 1.0 / tau_c
    return (b * b / np.pi) * gamma / (w * w + gamma * gamma)


def filter_power_spectrum_se(omega, t: float):
    """Power spectrum |sin^2(w t/4) / (w/4)|^2 of the echo sequence.

    Blocks DC (the echo refocuses static fields); first maximum near
    w ~ 4.66/t; exact zeros at w t/4 = n pi.
    """
    if t <= 0:
        raise ConfigError("filter_power_spectrum_se requires t > 0")
    w = np.asarray(omega, dtype=float)
    quarter = w / 4.0
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(quarter == 0.0, 0.0, np.sin(quarter * t) ** 2 / quarter) ** 2
    return val


@dataclass
class NoiseSpectrum:
    """Welch-averaged spectrum of the bath field at the central spin."""

    omega: np.ndarray        # rad/us, non-negative half axis
    power: np.ndarray        # two-sided density (see module docstring)
    n_realizations: int
    window: str = "hann"
    metadata: dict = field(default_factory=dict)

    def total_power(self) -> float:
        """Full-axis integral; equals the field mean square by Parseval.

        rfft half-axis layout: interior bins stand for +-omega pairs, the
        DC and (even-length) Nyquist bins appear once.
        """
        dw = self.omega[1] - self.omega[0]
        tail = self.power[1:-1].sum() if len(self.power) > 2 else 0.0
        nyq = self.power[-1] if len(self.power) > 1 else 0.0
        return float((self.power[0] + 2.0 * tail + nyq) * dw)


_WINDOWS = {
    "hann": np.hanning,
    "boxcar": np.ones,
}


def noise_spectrum(
    config: BathConfiguration,
    params: EvolutionParams,
    M: int,
    seed,
    window: str = "hann",
    t_max: float = 100.0,
    n_record: int = 4096,
    omega_min: float | None = None,
) -> NoiseSpectrum:
    """Spectrum of B(t) = sb/2 * sum_j A_j Rz_j(t) from pulse-free bath runs.

    Periodograms of M independent realizations are averaged (Welch over
    realizations); the window's mean-square is divided out so the
    full-axis integral estimates the field variance.
    """
    if omega_min is not None and t_max < 4.0 * (2.0 * np.pi / omega_min):
        raise ConfigError(
            f"trace length {t_max} us is shorter than 4 periods of omega_min"
        )
    if window not in _WINDOWS:
        raise ConfigError(f"unknown window {window!r}; use one of {sorted(_WINDOWS)}")
    times, field_rec = sequences.record_bath_field(config, params, M, seed, t_max, n_record)
    # drop the final sample so the segment length is even and dt uniform
    x = field_rec[:-1, :]
    n = x.shape[0]
    dt = float(times[1] - times[0])
    w = _WINDOWS[window](n)
    w2 = float(np.mean(w * w))
    xw = x * w[:, None]
    spec = np.fft.rfft(xw, axis=0)
    # two-sided density in angular frequency: |X dt|^2 / (2 pi T w2)
    T = n * dt
    pxx = (np.abs(spec) ** 2) * (dt * dt) / (2.0 * np.pi * T * w2)
    power = pxx.mean(axis=1)
    omega = 2.0 * np.pi * np.fft.rfftfreq(n, d=dt)
    return NoiseSpectrum(
        omega=omega,
        power=power,
        n_realizations=M,
        window=window,
        metadata={
            "config_seed": config.seed,
            "concentration_ppm": config.concentration_ppm,
            "b_rms": config.b_rms,
            "sample_seed": int(seed),
            "t_max_us": t_max,
            "dt_record_us": dt,
            "backaction_enabled": params.backaction_enabled,
        },
    )


def t2star_from_spectrum(spectrum: NoiseSpectrum) -> float:
    """Dephasing time implied by the total noise power.

    A quasi-static Gaussian field of variance P dephases as
    exp(-P t^2 / 2), so T2* = sqrt(2/P); the constant is pinned by the
    frozen-bath consistency test (P = b^2 gives sqrt(2)/b).
    """
    p_total = spectrum.total_power()
    if p_total <= 0:
        raise ConfigError("spectrum has no power")
    dw = spectrum.omega[1] - spectrum.omega[0]
    top = spectrum.omega >= spectrum.omega[-1] / 10.0
    top_power = 2.0 * spectrum.power[top].sum() * dw
    if top_power > 0.2 * p_total:
        warnings.warn(
            "more than 20% of the noise power sits in the top frequency decade; "
            "the recording grid is probably too coarse",
            stacklevel=2,
        )
    return float(np.sqrt(2.0 / p_total))


def filter_band(omega, t: float, weight: float = 0.5) -> tuple[float, float]:
    """Central frequency band carrying `weight` of the echo filter's area.

    Returns the (lo, hi) quantile frequencies of the normalized cumulative
    integral of the echo filter power at total time t, symmetric in
    probability around the median, e.g. the interquartile band for
    weight = 0.5.
    """
    w = np.asarray(omega, dtype=float)
    f = filter_power_spectrum_se(w, t)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(w))])
    total = cum[-1]
    if total <= 0:
        raise ConfigError("filter has no weight on this grid")
    lo_q, hi_q = 0.5 - weight / 2.0, 0.5 + weight / 2.0
    lo = float(np.interp(lo_q * total, cum, w))
    hi = float(np.interp(hi_q * total, cum, w))
    return lo, hi


def histogram(values, bins) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-width histogram; returns (counts, bin_edges)."""
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        raise ConfigError("histogram of empty data")
    return np.histogram(vals, bins=bins)


def histogram_mode(values, bins) -> float:
    """Center of the most populated bin."""
    counts, edges = histogram(values, bins)
    i = int(np.argmax(counts))
    return 0.5 * (edges[i] + edges[i + 1])
