"""
🔬 lambda-scope: командная строка симулятора детектора.

Каждая подкоманда пишет CSV (единицы в первой строке-комментарии)
и одну JSON сводку <подкоманда>_summary.json в каталог вывода.
"""

import argparse
import logging
import math
import os
import sys
import time
from functools import partial
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from config_loader import RunConfig, load_config
from core_model import REFERENCE_OMEGA_D, REFERENCE_OMEGA_D_IMP, DriveSpec
from detector_metrics import (
    DurationDistribution,
    dead_time,
    detection_band,
    efficiency_eta2,
    efficiency_point,
    eta1_closed_form,
    optimal_pulse_length,
    probe_phases,
    readout_model,
    zeno_time,
)
from dressed_engine import (
    build_hamiltonian,
    closed_form_impedance_match,
    diagonalize_dressed,
    dressed_rates_row,
    find_impedance_match,
    transition_frequencies,
)
from lindblad_dynamics import (
    PulseSpec,
    capture_tracking,
    dark_count_rate,
    evolve_single_photon,
    excited_lifetime,
    lambda_group_delay,
    moving_average,
    reflection_coefficient,
    reflection_map,
    truncation_check,
)
from regression_suite import RegressionSuite
from run_environment import check_dependencies, setup_environment, show_startup_banner
from simulation_errors import ConfigError, LambdaScopeError, RegressionFailure
from tools.report_tools import FigureReport, console, print_checks, print_report, write_csv, write_summary
from tools.sweep_tools import SweepRunner

logger = logging.getLogger("lambda_scope")

EFFICIENCY_UNITS = {
    "omega_d_GHz": "GHz",
    "Omega_d_MHz": "MHz",
    "omega_s_GHz": "GHz",
    "l_ns": "ns",
    "Delta_t_ns": "ns",
    "F": "1",
    "pbar_max": "1",
    "eta1": "1",
    "eta2": "1",
}


def operating_drive(config: RunConfig, omega_d: Optional[float] = None) -> DriveSpec:
    """Накачка в точке согласования импедансов (или с заданной Ω_d)"""
    omega_d = config.drive.omega_d if omega_d is None else omega_d
    if config.drive.Omega_d is not None and omega_d == config.drive.omega_d:
        return DriveSpec(omega_d=omega_d, Omega_d=config.drive.Omega_d)
    Omega_imp = find_impedance_match(config.dispersive(), omega_d, tuple(config.drive.match_bracket))
    return DriveSpec(omega_d=omega_d, Omega_d=Omega_imp)


def _output(config: RunConfig, filename: str) -> str:
    return os.path.join(config.run.out, filename)


def _reference_drive(config: RunConfig, omega_d: Optional[float] = None) -> bool:
    """Опорные значения относятся к накачке 4.832 ГГц"""
    return math.isclose(config.drive.omega_d if omega_d is None else omega_d, REFERENCE_OMEGA_D)


# --- Скорости распада ---

def cmd_dressed_rates(config: RunConfig, runner: SweepRunner) -> FigureReport:
    """Нормированные скорости κ̃ по мощности накачки"""
    report = FigureReport("dressed-rates")
    dp = config.dispersive()
    omega_d = config.drive.omega_d

    rows = runner.map(partial(dressed_rates_row, dp, omega_d), config.grids.rates_Omega_d)
    frame = pd.DataFrame(rows)
    Omega_imp = find_impedance_match(dp, omega_d, tuple(config.drive.match_bracket))
    distance = (frame["Omega_d_MHz"] - Omega_imp).abs()
    frame["nearest_match"] = (distance == distance.min()).astype(int)

    units = {"omega_drive_GHz": "GHz", "Omega_d_MHz": "MHz", "nearest_match": "flag"}
    units.update({c: f"kappa_{c[1]}" for c in frame.columns if c.startswith(("ka", "kb"))})
    report.csv_paths.append(write_csv(frame, _output(config, "dressed_rates.csv"), units))

    reference = _reference_drive(config)
    report.add("Omega_imp", Omega_imp, REFERENCE_OMEGA_D_IMP if reference else None,
               0.2 if reference else None, "MHz")
    report.add("Omega_imp_closed_form", closed_form_impedance_match(dp, omega_d), unit="MHz")
    report.add("kb51_max_deviation", float((frame["kb51"] - 1.0).abs().max()), 0.0, 0.05)
    return report


# --- Отражение ---

def cmd_reflection_map(config: RunConfig, runner: SweepRunner) -> FigureReport:
    """|r_s| на сетке (Ω_d, ω_s) с линиями ω̃_31 и ω̃_41"""
    report = FigureReport("reflection-map")
    dp = config.dispersive()
    grids = config.grids

    frame = reflection_map(dp, config.drive.omega_d, grids.map_Omega_d, grids.map_omega_s, mapper=runner.map)
    units = {"Omega_d_MHz": "MHz", "omega_s_GHz": "GHz", "abs_r": "1", "arg_r": "rad",
             "omega_31_GHz": "GHz", "omega_41_GHz": "GHz"}
    report.csv_paths.append(write_csv(frame, _output(config, "reflection_map.csv"), units))

    drive = operating_drive(config)
    r_match = abs(reflection_coefficient(dp, drive, config.pulse.omega_s))
    lowest = frame.loc[frame["abs_r"].idxmin()]
    report.add("abs_r_at_match", r_match, 0.0, 0.1)
    report.add("abs_r_min", float(lowest["abs_r"]))
    report.metadata.update({"Omega_imp_MHz": drive.Omega_d,
                            "min_at": {"Omega_d_MHz": float(lowest["Omega_d_MHz"]),
                                       "omega_s_GHz": float(lowest["omega_s_GHz"])}})
    return report


# --- Отклик на импульс ---

def _pulse_task(config: RunConfig, drive: DriveSpec, pulse: PulseSpec, n_b_mean: float):
    settings = config.integrator
    probe = config.probe_spec(n_b_mean) if n_b_mean > 0 else None
    return evolve_single_photon(config.dispersive(), drive, probe, pulse, settings.tmax, settings.dt,
                                settings.record_dt, verify=settings.verify_step)


def _background_task(config: RunConfig, drive: DriveSpec, n_b_mean: float) -> Dict[str, float]:
    """Время жизни |2̃⟩, мертвое время и темновой счет при одной мощности пробы"""
    dp = config.dispersive()
    dt = config.integrator.background_dt
    probe = config.probe_spec(n_b_mean) if n_b_mean > 0 else None
    lifetime = excited_lifetime(dp, drive, probe, dt=dt)
    dark = dark_count_rate(dp, drive, probe, dt=dt)
    zeno = zeno_time(probe, dp.kappa_b) if probe is not None else None
    return {
        "n_b_mean": n_b_mean,
        "Gamma_per_us": lifetime.Gamma,
        "lifetime_us": lifetime.lifetime_us,
        "dead_time_us": dead_time(lifetime.Gamma),
        "dark_rate_per_us": dark.rate,
        "dark_per_photon": dark.per_photon,
        "zeno_angular_ns": zeno.angular_ns if zeno else np.nan,
        "zeno_linear_ns": zeno.linear_ns if zeno else np.nan,
    }


def cmd_pulse_response(config: RunConfig, runner: SweepRunner) -> FigureReport:
    """Захват однофотонного импульса при разных мощностях пробы"""
    report = FigureReport("pulse-response")
    dp = config.dispersive()
    grids = config.grids
    settings = config.integrator
    drive = operating_drive(config)
    pulse = PulseSpec(omega_s=config.pulse.omega_s, length=config.pulse.length)

    trajectories = runner.map(partial(_pulse_task, config, drive, pulse), grids.n_b)
    convergence = {}
    for n_b, traj in zip(grids.n_b, trajectories):
        frame = traj.to_frame()
        units = {"t_ns": "ns", "p_e": "1", "n_a": "photons", "n_b": "photons"}
        for Delta_t in grids.Delta_t:
            column = f"pbar_e_{Delta_t:g}ns"
            averaged = moving_average(traj, Delta_t)
            frame[column] = averaged.pbar_e
            units[column] = "1"
            report.metadata.setdefault("pbar_max", {})[f"{n_b:g}/{Delta_t:g}"] = averaged.pbar_max
        path = _output(config, f"pulse_response_nb{n_b:g}.csv")
        report.csv_paths.append(write_csv(frame, path, units))
        convergence[f"{n_b:g}"] = {k: v for k, v in traj.meta.items() if isinstance(v, (int, float))}

        if n_b == 0:
            tracking = capture_tracking(traj, pulse, lambda_group_delay(dp, drive))
            report.add("max_p_e_probe_off", traj.max_p_e, 1.0, 0.05)
            report.add("tracking_probe_off", tracking, 0.0, 0.05)
    report.metadata["convergence"] = convergence

    # без сигнала p_e остается у нуля
    probe = config.probe_spec()
    silent = PulseSpec(omega_s=pulse.omega_s, length=pulse.length, amplitude=0.0)
    quiet = evolve_single_photon(dp, drive, probe, silent, settings.tmax, settings.dt, settings.record_dt,
                                 verify=False)
    report.add("zero_signal_max_p_e", quiet.max_p_e, 0.0, 0.05)

    background = pd.DataFrame(runner.map(partial(_background_task, config, drive), grids.n_b))
    units = {"n_b_mean": "photons", "Gamma_per_us": "1/us", "lifetime_us": "us", "dead_time_us": "us",
             "dark_rate_per_us": "1/us", "dark_per_photon": "1", "zeno_angular_ns": "ns",
             "zeno_linear_ns": "ns"}
    report.csv_paths.append(write_csv(background, _output(config, "background.csv"), units))
    for _, row in background.iterrows():
        n_b = row["n_b_mean"]
        if n_b == 0:
            report.add("lifetime_probe_off", row["lifetime_us"], 16.0, 1.0, "us")
        elif math.isclose(n_b, 0.05):
            report.add("lifetime_nb0.05", row["lifetime_us"], 6.0, 1.5, "us")
            report.add("dark_count_time_nb0.05", 1.0 / row["dark_rate_per_us"], 142.0, 71.0, "us")

    if settings.check_truncation:
        report.metadata["truncation_change"] = truncation_check(dp, drive, probe, pulse, settings.tmax,
                                                                settings.dt)
    report.metadata["Omega_imp_MHz"] = drive.Omega_d
    return report


# --- Эффективность ---

def _efficiency_rows(config: RunConfig, runner: SweepRunner, Delta_ts: Sequence[float],
                     points: List[tuple]) -> List[Dict[str, Any]]:
    settings = config.integrator
    task = partial(efficiency_point, config.dispersive(), config.probe_spec(), list(Delta_ts),
                   settings.tmax, settings.dt, settings.record_dt)
    return [row for rows in runner.map(task, points) for row in rows]


def cmd_efficiency(config: RunConfig, runner: SweepRunner) -> FigureReport:
    """Эффективность по длине импульса, карта (Ω_d, ω_s) и полоса для нескольких накачек"""
    report = FigureReport("efficiency")
    grids = config.grids
    dp = config.dispersive()
    drive = operating_drive(config)
    omega_s = config.pulse.omega_s
    reference = _reference_drive(config)

    # длина импульса
    lengths = pd.DataFrame(_efficiency_rows(
        config, runner, grids.Delta_t,
        [(drive.omega_d, drive.Omega_d, omega_s, length) for length in grids.lengths]))
    report.csv_paths.append(write_csv(lengths, _output(config, "efficiency_lengths.csv"), EFFICIENCY_UNITS))
    optima = {}
    for Delta_t, group in lengths.groupby("Delta_t_ns"):
        optima[float(Delta_t)] = optimal_pulse_length(group["l_ns"].to_numpy(), group["eta1"].to_numpy())
    primary = max(optima, key=lambda k: optima[k]["eta"])
    best = optima[primary]
    report.add("eta1_max", best["eta"], 0.91 if reference else None, 0.03 if reference else None)
    report.add("l_opt", best["length_ns"], 90.0 if reference else None, 20.0 if reference else None, "ns")
    report.add("Delta_t_primary", primary, unit="ns")
    report.metadata["optima"] = {f"{k:g}": v for k, v in optima.items()}

    # карта (Ω_d, ω_s)
    length = best["length_ns"]
    points = [(drive.omega_d, Om, ws, length) for Om in grids.efficiency_Omega_d for ws in grids.efficiency_omega_s]
    grid = pd.DataFrame(_efficiency_rows(config, runner, [primary], points))
    report.csv_paths.append(write_csv(grid, _output(config, "efficiency_map.csv"), EFFICIENCY_UNITS))
    report.add("eta1_map_max", float(grid["eta1"].max()))

    # полоса детектирования для каждой накачки
    offsets = np.asarray(grids.efficiency_omega_s) - float(np.mean(grids.efficiency_omega_s))
    band_rows, summary = [], []
    for omega_d in config.drive.band_drives or [drive.omega_d]:
        band_drive = operating_drive(config, omega_d)
        lines = transition_frequencies(diagonalize_dressed(build_hamiltonian(dp, band_drive)))
        center = 0.5 * (lines["omega_31"] + lines["omega_41"])
        rows = _efficiency_rows(config, runner, [primary],
                                [(omega_d, band_drive.Omega_d, float(center + off), length) for off in offsets])
        band_rows.extend(rows)
        band = detection_band([r["omega_s_GHz"] for r in rows], [r["eta1"] for r in rows])
        summary.append({"omega_d_GHz": omega_d, "Omega_imp_MHz": band_drive.Omega_d,
                        "center_GHz": band.center, "peak_eta": band.peak_eta,
                        "width_90_MHz": band.widths[0.9], "width_80_MHz": band.widths[0.8]})
        if omega_d == drive.omega_d:
            report.add("width_90", band.widths[0.9], 9.0 if reference else None, 2.0 if reference else None, "MHz")
            report.add("width_80", band.widths[0.8], 20.0 if reference else None, 3.0 if reference else None, "MHz")

    report.csv_paths.append(write_csv(pd.DataFrame(band_rows), _output(config, "efficiency_band.csv"),
                                      EFFICIENCY_UNITS))
    band_units = {"omega_d_GHz": "GHz", "Omega_imp_MHz": "MHz", "center_GHz": "GHz", "peak_eta": "1",
                  "width_90_MHz": "MHz", "width_80_MHz": "MHz"}
    report.csv_paths.append(write_csv(pd.DataFrame(summary), _output(config, "efficiency_band_summary.csv"),
                                      band_units))
    centers = [row["center_GHz"] for row in summary]
    report.metadata["band_centers_increasing"] = all(a < b for a, b in zip(centers, centers[1:]))
    return report


# --- Сравнение η₁ и η₂ ---

def cmd_appendix(config: RunConfig, runner: SweepRunner) -> FigureReport:
    """η₁ и η₂ для экспоненциального распада по окну Δt"""
    report = FigureReport("appendix")
    dp = config.dispersive()
    probe = config.probe_spec()
    phases = probe_phases(dp, probe.omega_p)

    rows = []
    for Gamma_inv in config.grids.Gamma_inv_us:
        Gamma = 1.0 / Gamma_inv
        Q = DurationDistribution.exponential(Gamma)
        for Delta_t in config.grids.appendix_Delta_t:
            readout = readout_model(probe, phases, Delta_t)
            rows.append({
                "Delta_t_ns": Delta_t,
                "Gamma_inv_us": Gamma_inv,
                "eta1": eta1_closed_form(Gamma, readout.SNR, Delta_t),
                "eta2": efficiency_eta2(Q, readout),
                "eta2_step": efficiency_eta2(Q, readout, step=True),
                "F": readout.F,
            })
    frame = pd.DataFrame(rows)
    units = {"Delta_t_ns": "ns", "Gamma_inv_us": "us", "eta1": "1", "eta2": "1", "eta2_step": "1", "F": "1"}
    report.csv_paths.append(write_csv(frame, _output(config, "appendix.csv"), units))

    for Gamma_inv, group in frame.groupby("Gamma_inv_us"):
        within = group[group["Delta_t_ns"] <= 1000.0]
        if within.empty:
            continue
        deviation = float((within["eta1"] - within["eta2"]).abs().max())
        # второй порядок по ΓΔt
        bound = (within["Delta_t_ns"].max() / (Gamma_inv * 1e3)) ** 2 / 20.0
        report.add(f"max_deviation_{Gamma_inv:g}us", deviation, 0.0, bound)
    return report


# --- Регрессия ---

def cmd_regression(config: RunConfig, runner: SweepRunner, only: Optional[Sequence[int]] = None) -> FigureReport:
    """Проверки по опорным значениям; при провале RegressionFailure"""
    report = FigureReport("regression")
    checks = RegressionSuite(config, runner).run(only)
    print_checks(checks)
    failed = [c["id"] for c in checks if not c["passed"]]
    report.add("checks_passed", len(checks) - len(failed), len(checks), 0)
    report.metadata["checks"] = checks
    if failed:
        raise RegressionFailure(f"{len(failed)} of {len(checks)} regression checks failed: {failed}",
                                {"failed": failed, "checks": checks})
    return report


COMMANDS: Dict[str, Callable[[RunConfig, SweepRunner], FigureReport]] = {
    "dressed-rates": cmd_dressed_rates,
    "reflection-map": cmd_reflection_map,
    "pulse-response": cmd_pulse_response,
    "efficiency": cmd_efficiency,
    "appendix": cmd_appendix,
    "regression": cmd_regression,
}


def _run_metadata(config: RunConfig, runner: SweepRunner, started: float) -> Dict[str, Any]:
    return {
        "wall_clock_s": round(time.time() - started, 2),
        "config": config.source,
        "integrator": config.integrator.model_dump(),
        "truncation": [config.device.n_a_max, config.device.n_b_max],
        **runner.metadata(),
    }


def run_command(name: str, config: RunConfig, runner: Optional[SweepRunner] = None,
                only: Optional[Sequence[int]] = None) -> int:
    """Выполнение подкоманды, запись сводки и код выхода"""
    runner = runner or SweepRunner(config.run.workers)
    started = time.time()
    exit_code = 0
    try:
        if name == "regression":
            report = cmd_regression(config, runner, only)
        else:
            report = COMMANDS[name](config, runner)
    except LambdaScopeError as e:
        logger.error(f"❌ {name} failed: {e.message}")
        report = FigureReport(name, error=e.to_dict())
        exit_code = e.exit_code

    report.metadata.update(_run_metadata(config, runner, started))
    summary = write_summary(report, config.run.out)
    print_report(report)
    logger.info(f"📊 Summary written to {summary}")
    return exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lambda-scope",
                                     description="Continuous microwave photon detector simulator")
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON or YAML file overlaid on config/reference_defaults.json "
                        "(default: reference values only; config/quick_config.json for smoke runs)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--workers", type=int, help="worker processes for grid sweeps")
    parser.add_argument("--dt", type=float, help="integrator step, ns")
    parser.add_argument("--na-max", type=int, dest="na_max", help="Fock truncation of resonator A")
    parser.add_argument("--nb-max", type=int, dest="nb_max", help="Fock truncation of resonator B")
    parser.add_argument("--only", type=int, nargs="+", help="regression check numbers to run")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--no-banner", action="store_true", help="skip the startup banner")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Главная функция запуска"""
    args = build_parser().parse_args(argv)
    if not args.no_banner:
        show_startup_banner()

    if check_dependencies():
        return 1

    try:
        config = load_config(args.config, out=args.out, workers=args.workers, dt=args.dt,
                             na_max=args.na_max, nb_max=args.nb_max,
                             level="DEBUG" if args.verbose else None)
        setup_environment(config.run.out, config.logging.file, config.logging.level)
    except ConfigError as e:
        console.print(f"❌ {e.message}")
        if e.details:
            console.print(e.details)
        return e.exit_code

    logger.info(f"🚀 Running {args.subcommand} with config {config.source or 'defaults'}")
    try:
        return run_command(args.subcommand, config, only=args.only)
    except KeyboardInterrupt:
        print("\n🛑 Interrupted")
        return 130


if __name__ == "__main__":
    sys.exit(main())
