"""Command-line interface: bath generation, simulation, sweeps, spectra.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
failure.  All data go to CSV; every CSV has a JSON sidecar carrying the
full effective configuration and seeds, so any output can be regenerated
from its own metadata.  The default output directory is NVBATH_OUTDIR or
the working directory.
"""

import os

# Single-threaded BLAS by default: config-level parallelism comes from
# worker processes, and nested BLAS threads only add contention.  Must
# run before numpy is first imported, hence the placement.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__, analysis, engine, lattice, montecarlo, oracle, sequences
from .dynamics import EvolutionParams
from .errors import ConfigError, NumericalError

CONFIG_VERSION = 1


@dataclass
class RunConfig:
    """Everything a run needs; parsed from JSON with unknown keys rejected."""

    version: int = CONFIG_VERSION
    concentration_ppm: float = 10.0
    target_spin_count: int = 80
    seed: int = 0
    m_samples: int = 2000
    dt_us: float | None = None
    t_max_us: float | None = None
    sample_stride: int | None = None
    hyperfine_enabled: bool = False
    exclusion_threshold: float = 50.0
    system_bath_scale: float = engine.DEFAULT_SYSTEM_BATH_SCALE
    echo_n_times: int = 22
    spectrum_window: str = "hann"
    spectrum_t_max_us: float = 100.0
    spectrum_n_record: int = 4096
    spectrum_m: int = 128
    sweep_f_ppm: list = field(default_factory=lambda: [1.0, 5.0, 10.0, 50.0, 100.0])
    sweep_n_configs: int = 40
    sweep_m_fid: int = 400
    sweep_m_echo: int = 300
    oracle_n_bath: int = 6
    oracle_m: int = 20000
    threads: int | None = None

    @classmethod
    def from_file(cls, path: str | Path | None, overrides: dict | None = None) -> "RunConfig":
        data = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(data, dict):
                raise ConfigError("config file must hold a JSON object")
            if data.get("version") != CONFIG_VERSION:
                raise ConfigError(
                    f"config version {data.get('version')!r} unsupported "
                    f"(expected {CONFIG_VERSION})"
                )
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        for key, value in (overrides or {}).items():
            if value is not None:
                cfg = replace(cfg, **{key: value})
        return cfg

    def evolution_params(self) -> EvolutionParams:
        return EvolutionParams(
            dt=self.dt_us,
            t_max=self.t_max_us if self.t_max_us is not None else 1.0,
            sample_stride=self.sample_stride,
            hyperfine_enabled=self.hyperfine_enabled,
            system_bath_scale=self.system_bath_scale,
        )


def _outdir(args) -> Path:
    out = args.outdir or os.environ.get("NVBATH_OUTDIR") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path: Path, header: list, columns: list):
    rows = zip(*columns)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _write_sidecar(path: Path, payload: dict):
    payload = dict(payload)
    payload["nvbath_version"] = __version__
    payload["kernel"] = engine.KERNEL
    path.write_text(json.dumps(payload, indent=1, sort_keys=True, default=float))


def _trace_csv(path: Path, trace: sequences.CoherenceTrace):
    _write_csv(
        path,
        ["time_us", "coherence_x", "coherence_y", "stderr"],
        [trace.times, trace.coherence_x, trace.coherence_y, trace.stderr],
    )


def cmd_gen_bath(args) -> int:
    cfg = RunConfig.from_file(args.config, {"seed": args.seed,
                                            "concentration_ppm": args.concentration})
    spec = lattice.LatticeSpec(
        concentration_ppm=cfg.concentration_ppm,
        target_spin_count=cfg.target_spin_count,
        seed=cfg.seed,
        exclusion_threshold=cfg.exclusion_threshold,
    )
    bath = lattice.place_bath_spins(spec)
    out = _outdir(args) / (args.out or f"bath_f{cfg.concentration_ppm:g}_seed{cfg.seed}.json")
    lattice.save_bath(bath, out)
    print(f"bath: J={bath.n_spins} f={cfg.concentration_ppm:g} ppm seed={cfg.seed}")
    print(f"b = {bath.b_rms:.6g} rad/us   predicted T2* = sqrt(2)/b = "
          f"{bath.t2_star_predicted:.6g} us   rejected draws = {bath.n_rejected}")
    print(f"wrote {out}")
    return 0


def _load_bath(path) -> lattice.BathConfiguration:
    if path is None:
        raise ConfigError("--bath is required (generate one with gen-bath)")
    if not Path(path).exists():
        raise ConfigError(f"bath file {path} not found")
    return lattice.load_bath(path)


def cmd_simulate(args) -> int:
    cfg = RunConfig.from_file(args.config, {"seed": args.seed, "m_samples": args.m})
    bath = _load_bath(args.bath)
    params = cfg.evolution_params()
    base = _outdir(args) / (args.out or f"trace_{args.kind}_seed{cfg.seed}")
    sample_seed = montecarlo.derived_seed(cfg.seed, bath.concentration_ppm, 0,
                                          montecarlo.STREAM_FID)
    fit_payload = {}
    if args.kind == "fid":
        t_max = cfg.t_max_us or montecarlo.FID_T_MAX_FACTOR * bath.t2_star_predicted
        params = replace(params, t_max=t_max)
        trace = sequences.run_fid(bath, params, cfg.m_samples, sample_seed)
        fit = analysis.fit_decay(trace, analysis.MODEL_GAUSSIAN)
        fit_payload["gaussian"] = {"parameters": fit.parameters,
                                   "residual_rms": fit.residual_rms,
                                   "converged": fit.converged}
    elif args.kind == "echo":
        t_max = cfg.t_max_us or montecarlo.ECHO_T_MAX_FACTOR * bath.t2_star_predicted
        times = np.linspace(t_max / cfg.echo_n_times, t_max, cfg.echo_n_times)
        trace = sequences.run_hahn_echo(bath, params, cfg.m_samples, times, sample_seed)
        for model, fixed in ((analysis.MODEL_STRETCHED, None),
                             (analysis.MODEL_KLAUDER_ANDERSON, {"b": bath.b_rms})):
            fit = analysis.fit_decay(trace, model, fixed=fixed)
            fit_payload[model] = {"parameters": fit.parameters,
                                  "residual_rms": fit.residual_rms,
                                  "converged": fit.converged}
    else:  # custom
        if not args.sequence:
            raise ConfigError("--sequence FILE is required for kind=custom")
        seq_data = json.loads(Path(args.sequence).read_text())
        seq = sequences.PulseSequence(
            events=[(float(t), tuple(axis), float(angle))
                    for t, axis, angle in seq_data.get("events", [])],
            readout_times=[float(t) for t in seq_data.get("readout_times", [])],
        )
        t_max = cfg.t_max_us or (max(seq.readout_times) if seq.readout_times else 1.0)
        params = replace(params, t_max=t_max)
        trace = sequences.run_custom(bath, params, seq, cfg.m_samples, sample_seed)

    csv_path = base.with_suffix(".csv")
    _trace_csv(csv_path, trace)
    _write_sidecar(base.with_suffix(".json"), {
        "effective_config": asdict(cfg),
        "bath_file": str(args.bath),
        "bath_seed": bath.seed,
        "sample_seed": sample_seed,
        "kind": args.kind,
        "trace_metadata": trace.metadata,
        "fits": fit_payload,
    })
    print(f"wrote {csv_path}")
    for model, info in fit_payload.items():
        print(f"{model}: {info['parameters']} residual_rms={info['residual_rms']:.4g} "
              f"converged={info['converged']}")
    return 0


def cmd_sweep(args) -> int:
    cfg = RunConfig.from_file(args.config, {"seed": args.seed})
    params = cfg.evolution_params()
    outdir = _outdir(args)
    results = []
    for f_ppm in cfg.sweep_f_ppm:
        ens = montecarlo.run_ensemble(
            f_ppm, cfg.sweep_n_configs, cfg.sweep_m_fid, cfg.sweep_m_echo,
            params, cfg.seed, n_spins=cfg.target_spin_count,
            workers=args.threads or cfg.threads,
        )
        results.append(ens)
        per_f = outdir / f"sweep_f{f_ppm:g}.csv"
        recs = ens.per_config
        _write_csv(
            per_f,
            ["config_index", "b", "t2_star", "t2", "alpha", "tau_c"],
            [
                [r.config_index for r in recs],
                [r.b for r in recs],
                [r.t2_star if r.t2_star else float("nan") for r in recs],
                [r.t2 if r.t2 else float("nan") for r in recs],
                [r.alpha if r.alpha else float("nan") for r in recs],
                [r.tau_c if r.tau_c else float("nan") for r in recs],
            ],
        )
        print(f"f={f_ppm:g} ppm done: {per_f}")
    summary = montecarlo.sweep_summary(results)
    _write_sidecar(outdir / "sweep_summary.json", {
        "effective_config": asdict(cfg),
        "summary": summary,
    })
    for key in ("regression_t2_star", "regression_t2"):
        if key in summary:
            reg = summary[key]
            print(f"{key}: slope = {reg['slope']:.4g} /us/ppm, R^2 = {reg['r_squared']:.4f}")
    print(f"wrote {outdir / 'sweep_summary.json'}")
    return 0


def cmd_spectrum(args) -> int:
    cfg = RunConfig.from_file(args.config, {"seed": args.seed})
    bath = _load_bath(args.bath)
    params = cfg.evolution_params()
    outdir = _outdir(args)

    tau_c = args.tau_c
    t2_fit = None
    if tau_c is None:
        t_max = montecarlo.ECHO_T_MAX_FACTOR * bath.t2_star_predicted
        times = np.linspace(t_max / cfg.echo_n_times, t_max, cfg.echo_n_times)
        echo_seed = montecarlo.derived_seed(cfg.seed, bath.concentration_ppm, 0,
                                            montecarlo.STREAM_ECHO)
        echo = sequences.run_hahn_echo(bath, params, cfg.sweep_m_echo, times, echo_seed)
        ka = analysis.fit_decay(echo, analysis.MODEL_KLAUDER_ANDERSON,
                                fixed={"b": bath.b_rms})
        if not ka.converged:
            raise NumericalError("Klauder-Anderson fit for tau_c did not converge; "
                                 "pass --tau-c explicitly")
        tau_c = ka.parameters["tau_c"]
        se = analysis.fit_decay(echo, analysis.MODEL_STRETCHED)
        t2_fit = se.parameters.get("T2") if se.converged else None
        print(f"SE fit: tau_c = {tau_c:.4g} us" +
              (f", T2 = {t2_fit:.4g} us" if t2_fit else ""))

    spec_seed = montecarlo.derived_seed(cfg.seed, bath.concentration_ppm, 0,
                                        montecarlo.STREAM_SPECTRUM)
    spectrum = analysis.noise_spectrum(
        bath, params, cfg.spectrum_m, spec_seed,
        window=cfg.spectrum_window,
        t_max=cfg.spectrum_t_max_us,
        n_record=cfg.spectrum_n_record,
    )
    lor = analysis.lorentzian_spectrum(spectrum.omega, bath.b_rms, tau_c)
    base = outdir / (args.out or f"spectrum_seed{cfg.seed}")
    _write_csv(base.with_suffix(".csv"), ["omega_rad_per_us", "S_sim", "S_lorentzian"],
               [spectrum.omega, spectrum.power, lor])
    t_filter = t2_fit or (montecarlo.ECHO_T_MAX_FACTOR * bath.t2_star_predicted / 2)
    filt = analysis.filter_power_spectrum_se(spectrum.omega, t_filter)
    filter_path = Path(str(base) + "_se_filter.csv")
    _write_csv(filter_path, ["omega_rad_per_us", "filter_power"],
               [spectrum.omega, filt])
    _write_sidecar(base.with_suffix(".json"), {
        "effective_config": asdict(cfg),
        "bath_file": str(args.bath),
        "tau_c_us": tau_c,
        "t2_fit_us": t2_fit,
        "filter_time_us": t_filter,
        "t2_star_from_spectrum_us": analysis.t2star_from_spectrum(spectrum),
        "t2_star_predicted_us": bath.t2_star_predicted,
        "total_power": spectrum.total_power(),
        "b_squared": bath.b_rms**2,
        "spectrum_metadata": spectrum.metadata,
    })
    print(f"wrote {base.with_suffix('.csv')} and {filter_path}")
    return 0


def cmd_oracle_diff(args) -> int:
    cfg = RunConfig.from_file(args.config, {"seed": args.seed})
    if args.n_bath is not None:
        cfg = replace(cfg, oracle_n_bath=args.n_bath)
    if cfg.oracle_n_bath > oracle.MAX_BATH_SPINS:
        raise ConfigError(f"oracle bath size {cfg.oracle_n_bath} exceeds "
                          f"{oracle.MAX_BATH_SPINS}")
    spec = lattice.LatticeSpec(
        concentration_ppm=cfg.concentration_ppm,
        target_spin_count=cfg.oracle_n_bath,
        seed=cfg.seed,
        exclusion_threshold=cfg.exclusion_threshold,
    )
    bath = lattice.place_bath_spins(spec)
    system = oracle.SmallSystem.from_bath(bath)
    t_max = args.t_max or 0.5 * bath.t2_star_predicted
    times = np.linspace(0.0, t_max, 60)

    exact = oracle.exact_coherence(system, sequences.PulseSequence.fid(), times)
    params = replace(cfg.evolution_params(), t_max=t_max,
                     sample_stride=None, dt=None)
    mf_seed = montecarlo.derived_seed(cfg.seed, cfg.concentration_ppm, 0,
                                      montecarlo.STREAM_FID)
    mf = sequences.run_fid(bath, params, cfg.oracle_m, mf_seed)
    mf_interp = np.interp(times, mf.times, mf.coherence_x)
    diff = mf_interp - exact.coherence_x
    outdir = _outdir(args)
    _trace_csv(outdir / "oracle_exact.csv", exact)
    _trace_csv(outdir / "oracle_meanfield.csv", mf)
    report = {
        "effective_config": asdict(cfg),
        "J": bath.n_spins,
        "b_rms": bath.b_rms,
        "t_max_us": t_max,
        "max_abs_diff": float(np.max(np.abs(diff))),
        "rms_diff": float(np.sqrt(np.mean(diff**2))),
        "oracle_mode": exact.metadata["oracle"],
        "meanfield_M": cfg.oracle_m,
    }
    _write_sidecar(outdir / "oracle_diff.json", report)
    print(f"J={report['J']} max|diff| = {report['max_abs_diff']:.4g}, "
          f"rms = {report['rms_diff']:.4g} over t <= {t_max:.4g} us")
    print(f"wrote {outdir / 'oracle_diff.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nvbath",
        description="Central-spin decoherence in a dipolar electron spin bath",
    )
    parser.add_argument("--version", action="version", version=f"nvbath {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--outdir", help="output directory (default $NVBATH_OUTDIR or .)")
        p.add_argument("--seed", type=int, default=None, help="master seed override")

    p = sub.add_parser("gen-bath", help="generate and serialize a bath configuration")
    common(p)
    p.add_argument("--concentration", type=float, default=None, help="f in ppm")
    p.add_argument("--out", help="output file name")
    p.set_defaults(func=cmd_gen_bath)

    p = sub.add_parser("simulate", help="run FID/echo/custom on a bath file")
    common(p)
    p.add_argument("--bath", required=False, help="bath JSON from gen-bath")
    p.add_argument("--kind", choices=["fid", "echo", "custom"], default="fid")
    p.add_argument("--m", type=int, default=None, help="Monte-Carlo samples override")
    p.add_argument("--sequence", help="JSON pulse sequence (kind=custom)")
    p.add_argument("--out", help="output base name")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="concentration sweep of T2*, T2")
    common(p)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("spectrum", help="bath noise spectrum for a bath file")
    common(p)
    p.add_argument("--bath", required=False)
    p.add_argument("--tau-c", type=float, default=None,
                   help="skip the SE fit and use this correlation time")
    p.add_argument("--out", help="output base name")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("oracle-diff", help="mean-field vs exact small-system FID")
    common(p)
    p.add_argument("--n-bath", type=int, default=None, help="bath size J <= 12")
    p.add_argument("--t-max", type=float, default=None)
    p.set_defaults(func=cmd_oracle_diff)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
