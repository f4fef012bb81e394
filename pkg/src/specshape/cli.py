"""Experiment runner: reproduce the reference figures as CSV artifacts and
expose ad-hoc synth/estimate/crb/rmse subcommands.

Every CSV gets a header row and a sidecar JSON manifest recording the
fully resolved configuration, package version, and runtime; rerunning
with the same configuration and seed reproduces the CSV byte for byte.
Exit codes: 0 success, 2 usage, 3 validation, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path as FilePath

import numpy as np

from . import __version__, crb, estimators
from .channel import ChannelProfile
from .scenario import (
    FrequencyGrid,
    Path,
    Scenario,
    ValidationError,
    load_scenario,
    nyquist_lag,
    C_LIGHT,
)
from .synth import observe, synthesize

FINE_SPACING_HZ = 0.15e9
AUTO_REFINE_ABOVE_M = 0.09

FIGURE_IDS = (
    "fig6a", "fig6b", "fig6c", "fig6d", "fig7", "fig8", "fig9",
    "fig10", "fig11", "fig12", "fig13",
)

_FIG6_SNR = {"fig6a": 20.0, "fig6b": 10.0, "fig6c": 0.0, "fig6d": -10.0}

_VB_PATHS = (
    Path(theta_deg=60.0, excess_length_m=0.0, gain_linear=1.0),
    Path(theta_deg=100.0, excess_length_m=0.5, gain_linear=10.0 ** (-6.0 / 20.0)),
)


@dataclass(frozen=True)
class ExperimentSpec:
    figure_id: str
    out_dir: FilePath
    seed: int = 0
    jobs: int = 1
    trials: int | None = None
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.figure_id not in FIGURE_IDS:
            raise ValidationError(f"unknown figure id: {self.figure_id}")


def _fmt(value) -> str:
    if isinstance(value, float) and np.isinf(value):
        return "inf"
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def _write_csv(path: FilePath, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_manifest(out_dir: FilePath, name: str, config: dict,
                    files: list[str], runtime_s: float) -> None:
    manifest = {
        "figure_id": name,
        "config": config,
        "version": __version__,
        "files": files,
        "runtime_s": runtime_s,
    }
    with open(out_dir / f"{name}_manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, default=str)
        f.write("\n")


def _parallel_map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(item) for item in items]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _theta_sweep() -> np.ndarray:
    return np.arange(1.0, 180.0, 1.0)


def _base_scenario(spec: ExperimentSpec, **kwargs) -> Scenario:
    defaults = dict(
        d_m=5e-3,
        grid=FrequencyGrid(),
        paths=(Path(theta_deg=60.0),),
        channel=ChannelProfile(kind="dry", range_m=100.0),
        snr_db=20.0,
        seed=spec.seed,
    )
    defaults.update(kwargs)
    merged = {**defaults, **spec.overrides}
    return Scenario(**merged)


def _ssh_crb_point(args) -> float:
    scenario, theta = args
    return float(crb.fim_ssh_doa(scenario, theta).crb_deg[0])


def _run_fig6(spec: ExperimentSpec) -> list[str]:
    snr_db = _FIG6_SNR[spec.figure_id]
    scenario = _base_scenario(spec, snr_db=snr_db)
    thetas = _theta_sweep()
    ssh = _parallel_map(_ssh_crb_point, [(scenario, t) for t in thetas], spec.jobs)
    rows = []
    for theta, crb_ssh in zip(thetas, ssh):
        rows.append([
            theta,
            crb_ssh,
            crb.crb_ula(7, snr_db, theta),
            crb.crb_ula(111, snr_db, theta),
            crb.crb_lens(15, 7.5, snr_db, theta),
            crb.crb_lens(201, 100.5, snr_db, theta),
        ])
    name = f"{spec.figure_id}_crb_vs_theta.csv"
    _write_csv(spec.out_dir / name,
               ["theta_deg", "crb_ssh_deg", "crb_ula_7_deg", "crb_ula_111_deg",
                "crb_la_15_deg", "crb_la_201_deg"], rows)
    return [name]


def _run_fig7(spec: ExperimentSpec) -> list[str]:
    ranges = (10.0, 100.0, 1000.0)
    thetas = _theta_sweep()
    columns = []
    for range_m in ranges:
        scenario = _base_scenario(
            spec, snr_db=5.0,
            channel=ChannelProfile(kind="humid", water_vapor_g_m3=10.0, range_m=range_m),
        )
        columns.append(_parallel_map(_ssh_crb_point, [(scenario, t) for t in thetas], spec.jobs))
    rows = [[t, *vals] for t, *vals in zip(thetas, *columns)]
    name = "fig7_crb_vs_theta_humid_ranges.csv"
    _write_csv(spec.out_dir / name,
               ["theta_deg"] + [f"crb_range_{int(r)}m_deg" for r in ranges], rows)
    return [name]


def _run_fig8(spec: ExperimentSpec) -> list[str]:
    gaps_mm = (1.0, 5.0, 10.0)
    thetas = _theta_sweep()
    columns = []
    for d_mm in gaps_mm:
        scenario = _base_scenario(spec, snr_db=0.0, d_m=d_mm * 1e-3)
        columns.append(_parallel_map(_ssh_crb_point, [(scenario, t) for t in thetas], spec.jobs))
    rows = [[t, *vals] for t, *vals in zip(thetas, *columns)]
    name = "fig8_crb_vs_theta_gaps.csv"
    _write_csv(spec.out_dir / name,
               ["theta_deg"] + [f"crb_d_{d:g}mm_deg" for d in gaps_mm], rows)
    return [name]


def _joint_crb_point(args) -> tuple[float, float]:
    scenario, theta_i, theta_d, index = args
    result = crb.fim_joint(scenario, theta_i, theta_d)
    return float(result.crb_deg[index]), index


def _run_fig9(spec: ExperimentSpec) -> list[str]:
    scenario = _base_scenario(
        spec, snr_db=5.0,
        paths=(Path(theta_deg=90.0, aod_deg=90.0),), tx_mode="pair",
    )
    thetas = _theta_sweep()
    rows = []
    for theta in thetas:
        aod = crb.fim_joint(scenario, 90.0, theta).crb_deg[1]
        doa = crb.fim_joint(scenario, theta, 90.0).crb_deg[0]
        rows.append([theta, aod, doa])
    name = "fig9_joint_crb_vs_theta.csv"
    _write_csv(spec.out_dir / name, ["theta_deg", "crb_aod_deg", "crb_doa_deg"], rows)
    return [name]


def _run_fig10(spec: ExperimentSpec) -> list[str]:
    trials = spec.trials or 1000
    snrs = np.arange(-10.0, 20.1, 2.0)
    rows = []
    for snr_db in snrs:
        scenario = _base_scenario(spec, snr_db=float(snr_db))
        ssh = crb.rmse_monte_carlo(scenario, "ssh_mmse", trials=trials)
        ula = crb.array_rmse_monte_carlo("ula", 60, float(snr_db), 60.0,
                                         trials=trials, seed=spec.seed)
        lens = crb.array_rmse_monte_carlo("lens", 80, float(snr_db), 60.0,
                                          trials=trials, seed=spec.seed)
        bound = crb.fim_ssh_doa(scenario, 60.0).crb_deg[0]
        rows.append([snr_db, ssh.rmse_deg[0], ula.rmse_deg[0], lens.rmse_deg[0], bound])
    name = "fig10_rmse_vs_snr.csv"
    _write_csv(spec.out_dir / name,
               ["snr_db", "rmse_ssh_deg", "rmse_ula_60_deg", "rmse_la_80_deg",
                "crb_ssh_deg"], rows)
    return [name]


def _run_fig11(spec: ExperimentSpec) -> list[str]:
    trials = spec.trials or 400
    snrs = np.arange(-10.0, 20.1, 5.0)
    rows = []
    for snr_db in snrs:
        scenario = _base_scenario(
            spec, snr_db=float(snr_db),
            paths=(Path(theta_deg=60.0, aod_deg=60.0),), tx_mode="pair",
        )
        mc = crb.rmse_monte_carlo(scenario, "joint_mmse", trials=trials)
        bound = crb.fim_joint(scenario, 60.0, 60.0).crb_deg
        rows.append([snr_db, mc.rmse_deg[0], mc.rmse_deg[1], bound[0], bound[1]])
    name = "fig11_joint_rmse_vs_snr.csv"
    _write_csv(spec.out_dir / name,
               ["snr_db", "rmse_doa_deg", "rmse_aod_deg", "crb_doa_deg",
                "crb_aod_deg"], rows)
    return [name]


def _run_fig12(spec: ExperimentSpec) -> list[str]:
    scenario = _base_scenario(spec, paths=_VB_PATHS, snr_db=20.0)
    obs = observe(scenario, noise_free=True)
    curve = estimators.matched_filter(obs, scenario.d_m)
    rows = [[t, e] for t, e in zip(curve.theta_deg, curve.energy)]
    name = "fig12_matched_filter.csv"
    _write_csv(spec.out_dir / name, ["theta_deg", "energy"], rows)
    return [name]


def _run_fig13(spec: ExperimentSpec) -> list[str]:
    grid = FrequencyGrid(100e9, 1000e9, 6001)
    scenario = _base_scenario(spec, paths=_VB_PATHS, grid=grid, snr_db=20.0)
    obs = observe(scenario, noise_free=True)
    spectrum_rows = [[f, p] for f, p in zip(grid.frequencies_hz, obs.z**2)]
    zspec = estimators.zeta_spectrum(obs)
    zeta_rows = [
        [z, d, m]
        for z, d, m in zip(zspec.zeta_s, zspec.distance_m, zspec.magnitude)
    ]
    names = ["fig13_spectrum.csv", "fig13_zeta_spectrum.csv"]
    _write_csv(spec.out_dir / names[0], ["f_hz", "power"], spectrum_rows)
    _write_csv(spec.out_dir / names[1], ["zeta_s", "distance_m", "magnitude"], zeta_rows)
    return names


_FIGURE_RUNNERS = {
    "fig6a": _run_fig6, "fig6b": _run_fig6, "fig6c": _run_fig6, "fig6d": _run_fig6,
    "fig7": _run_fig7, "fig8": _run_fig8, "fig9": _run_fig9, "fig10": _run_fig10,
    "fig11": _run_fig11, "fig12": _run_fig12, "fig13": _run_fig13,
}


def run_figure(spec: ExperimentSpec) -> list[FilePath]:
    """Produce the CSV artifacts and manifest for one figure."""
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    start = time.monotonic()
    files = _FIGURE_RUNNERS[spec.figure_id](spec)
    runtime = time.monotonic() - start
    config = {
        "figure_id": spec.figure_id,
        "seed": spec.seed,
        "trials": spec.trials,
        "overrides": spec.overrides,
    }
    _write_manifest(spec.out_dir, spec.figure_id, config, files, runtime)
    return [spec.out_dir / name for name in files]


def _maybe_refine_grid(scenario: Scenario) -> Scenario:
    """Refine the grid to 0.15 GHz spacing when relative distances beyond
    the default unambiguous range are in play."""
    longest = max(p.excess_length_m for p in scenario.paths)
    if longest <= AUTO_REFINE_ABOVE_M:
        return scenario
    if C_LIGHT * nyquist_lag(scenario.grid) > 2.0 * longest:
        return scenario
    grid = scenario.grid
    n = int(round(grid.bandwidth_hz / FINE_SPACING_HZ)) + 1
    print(
        f"note: refining grid to {n} samples for unambiguous distances",
        file=sys.stderr,
    )
    return scenario.replace(grid=FrequencyGrid(grid.f_start_hz, grid.f_stop_hz, n))


def _cmd_synth(args) -> int:
    scenario = load_scenario(args.scenario)
    obs = observe(scenario, noise_free=args.noise_free)
    rows = [
        [f, z, mr, mi]
        for f, z, mr, mi in zip(
            scenario.grid.frequencies_hz, obs.z,
            obs.mean.values.real, obs.mean.values.imag,
        )
    ]
    header = ["f_hz", "z", "mean_re", "mean_im"]
    if args.out:
        _write_csv(FilePath(args.out), header, rows)
        _write_sidecar(FilePath(args.out), "synth", scenario, args)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerows([[_fmt(v) for v in row] for row in rows])
    return 0


def _write_sidecar(out: FilePath, command: str, scenario: Scenario, args) -> None:
    from .scenario import _scenario_to_dict

    manifest = {
        "command": command,
        "scenario": _scenario_to_dict(scenario),
        "version": __version__,
        "noise_free": bool(getattr(args, "noise_free", False)),
    }
    with open(out.with_suffix(out.suffix + ".manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


def _cmd_estimate(args) -> int:
    scenario = _maybe_refine_grid(load_scenario(args.scenario))
    obs = observe(scenario, noise_free=args.noise_free)
    report = estimators.build_report(obs, scenario.d_m, tx_mode=scenario.tx_mode)
    text = report.to_json()
    if args.out:
        FilePath(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _parse_sweep(sweep: str) -> np.ndarray:
    try:
        name, start, stop, step = sweep.split(":")
        if name != "theta":
            raise ValueError
        start, stop, step = float(start), float(stop), float(step)
    except ValueError:
        raise ValidationError(f"bad sweep spec (want theta:start:stop:step): {sweep}")
    return np.arange(start, stop + step / 2.0, step)


def _cmd_crb(args) -> int:
    scenario = load_scenario(args.scenario)
    thetas = _parse_sweep(args.sweep) if args.sweep else np.asarray(
        [scenario.paths[0].theta_deg]
    )
    rows = []
    vapor = scenario.channel.water_vapor_g_m3
    for theta in thetas:
        if scenario.tx_mode == "pair":
            bound = crb.fim_joint(scenario, theta, scenario.paths[0].aod_deg)
            value = bound.crb_deg[0]
            method = "ssh_joint"
        else:
            value = crb.fim_ssh_doa(scenario, float(theta)).crb_deg[0]
            method = "ssh"
        rows.append([theta, value, method, scenario.snr_db, scenario.d_m,
                     scenario.channel.range_m, vapor])
        for n in args.ula or ():
            rows.append([theta, crb.crb_ula(n, scenario.snr_db, theta), f"ula_{n}",
                         scenario.snr_db, scenario.d_m, scenario.channel.range_m, vapor])
        for m in args.lens or ():
            rows.append([theta, crb.crb_lens(m, m / 2.0, scenario.snr_db, theta),
                         f"lens_{m}", scenario.snr_db, scenario.d_m,
                         scenario.channel.range_m, vapor])
    header = ["theta_deg", "crb_deg", "method", "snr_db", "d_m", "range_m",
              "vapor_g_m3"]
    if args.out:
        _write_csv(FilePath(args.out), header, rows)
        _write_sidecar(FilePath(args.out), "crb", scenario, args)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerows([[_fmt(v) for v in row] for row in rows])
    return 0


def _cmd_rmse(args) -> int:
    scenario = load_scenario(args.scenario)
    result = crb.rmse_monte_carlo(scenario, args.estimator, trials=args.trials)
    payload = {
        "estimator": args.estimator,
        "trials": result.n_trials,
        "failures": result.n_failures,
        "rmse_deg": [float(v) for v in result.rmse_deg],
        "mc_stderr_deg": [float(v) for v in result.mc_stderr_deg],
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        FilePath(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_run_figure(args) -> int:
    overrides = {}
    if args.overrides:
        with open(args.overrides) as f:
            overrides = json.load(f)
    spec = ExperimentSpec(
        figure_id=args.figure_id,
        out_dir=FilePath(args.out),
        seed=args.seed,
        jobs=args.jobs,
        trials=args.trials,
        overrides=overrides,
    )
    files = run_figure(spec)
    for path in files:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specshape",
        description="Spectrum-shaping link discovery: synthesis, estimation, bounds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-figure", help="reproduce a reference figure as CSV")
    p.add_argument("figure_id", choices=FIGURE_IDS)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--overrides", help="JSON file of scenario field overrides")
    p.set_defaults(func=_cmd_run_figure)

    p = sub.add_parser("synth", help="synthesize one observation as CSV")
    p.add_argument("--scenario", required=True)
    p.add_argument("--noise-free", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("estimate", help="single-shot estimate report as JSON")
    p.add_argument("--scenario", required=True)
    p.add_argument("--noise-free", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("crb", help="Cramer-Rao bound sweep as CSV")
    p.add_argument("--scenario", required=True)
    p.add_argument("--sweep", help="theta:start:stop:step")
    p.add_argument("--ula", type=int, action="append", help="add a ULA baseline with N elements")
    p.add_argument("--lens", type=int, action="append", help="add a lens baseline with M elements")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_crb)

    p = sub.add_parser("rmse", help="Monte Carlo estimator RMSE as JSON")
    p.add_argument("--scenario", required=True)
    p.add_argument("--estimator", default="ssh_mmse",
                   choices=("ssh_mmse", "ssh_peak", "joint_mmse"))
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_rmse)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (estimators.EstimationError, crb.EstimatorAbortError,
            np.linalg.LinAlgError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
