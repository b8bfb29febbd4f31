#!/usr/bin/env python3
"""
LeakSentinel command line.

Exit codes: 0 clean run, 2 configuration or scenario error, 3 training failure.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from leaksentinel import __version__
from leaksentinel.config import (
    WINDOW_PRESETS,
    ConfigError,
    MonitorConfig,
    PowerParams,
    Settings,
    TrainingConfig,
    load_scenario,
)
from leaksentinel.database import Database
from leaksentinel.detector import TrainingFailure, simulate
from leaksentinel.dsp import frame_spectrum, spectrum_frame
from leaksentinel.frontend import FrontEnd, frequency_response
from leaksentinel.power import average_power, power_sweep, simulate_energy
from leaksentinel.protocol import HostEmulator
from leaksentinel.reports import (
    power_frame,
    response_figure,
    verdict_line,
    write_csv,
    write_timeline,
    write_timeline_html,
)
from leaksentinel.sweeps import material_sweep, standoff_sweep

logger = logging.getLogger("leaksentinel")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRAINING = 3


def _configure_logging(level: str, verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _monitor_config(args: argparse.Namespace, suggested: Optional[MonitorConfig] = None) -> MonitorConfig:
    if getattr(args, "preset", None):
        base = WINDOW_PRESETS[args.preset]
    else:
        base = suggested or MonitorConfig()
    values = base.model_dump()
    for flag, key in (("n", "n"), ("tau", "tau_s"), ("t_alarm", "t_alarm")):
        if getattr(args, flag, None) is not None:
            values[key] = getattr(args, flag)
    return MonitorConfig(**values)


def _training_config(args: argparse.Namespace) -> TrainingConfig:
    if getattr(args, "train_size", None) is None:
        return TrainingConfig()
    return TrainingConfig(set_size=args.train_size)


def _archive(settings: Settings, enabled: bool, command: str, scenario: Optional[str], **fields) -> None:
    if not enabled:
        return
    try:
        db = Database(settings.db_path)
        db.record_run(command, scenario, **fields)
        db.close()
    except Exception as e:
        logger.warning("could not archive run: %s", e)


def cmd_run(args: argparse.Namespace, settings: Settings) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    monitor = _monitor_config(args, scenario.monitor)
    training = _training_config(args)
    if not monitor.threshold_advisory:
        logger.info("T=%d is outside the recommended 80-90%% of N=%d", monitor.t_alarm, monitor.n)
    duration = args.duration if args.duration is not None else scenario.duration_s

    try:
        training_result, timeline = simulate(scenario, training, monitor, duration, max_sessions=args.max_sessions)
    except TrainingFailure as e:
        print(f"✗ Training failed: {e}")
        _archive(settings, not args.no_archive, "run", scenario.name, seed=scenario.seed, n=monitor.n,
                 tau_s=monitor.tau_s, t_alarm=monitor.t_alarm, train_size=training.set_size,
                 duration_s=duration, status="failed", notes=str(e))
        return EXIT_TRAINING

    out_dir = Path(args.out or settings.out_dir) / scenario.name
    write_timeline(timeline, out_dir / "timeline.csv")
    report = simulate_energy(timeline, PowerParams())
    acq_per_poll = sum(r.acquisitions for r in timeline.records) / len(timeline)
    write_csv(power_frame(report, monitor.tau_s, acq_per_poll), out_dir / "power.csv")
    if args.html:
        write_timeline_html(timeline, out_dir / "timeline.html", f"{scenario.name} (N={monitor.n}, tau={monitor.tau_s} s)")
    if args.spectrum:
        write_csv(spectrum_frame(frame_spectrum(FrontEnd(), scenario, 0.0)), out_dir / "spectrum.csv")

    verdict, first = timeline.verdict
    print(f"✓ Trained in {training_result.sessions} session(s), {training_result.ticks} acquisitions")
    print(f"✓ Outputs written to: {out_dir}")
    print(verdict_line(timeline, scenario.name))

    _archive(settings, not args.no_archive, "run", scenario.name, seed=scenario.seed, n=monitor.n,
             tau_s=monitor.tau_s, t_alarm=monitor.t_alarm, train_size=training.set_size, duration_s=duration,
             verdict=verdict, first_trigger_s=first, alarms=timeline.alarm_count,
             avg_power_uw=report.avg_power_uw, output_dir=str(out_dir))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, settings: Settings) -> int:
    out_dir = Path(args.out or settings.out_dir)
    jobs = args.jobs if args.jobs is not None else settings.jobs
    monitor = _monitor_config(args)
    training = _training_config(args)

    if args.kind == "power":
        frame = power_sweep(PowerParams(), acq_per_poll=args.acq)
        path = write_csv(frame, out_dir / "sweep_power.csv")
        print(f"✓ Power sweep written to: {path}")
        return EXIT_OK

    if args.kind == "standoff":
        result = standoff_sweep(args.source, seeds=args.seeds, base_seed=args.base_seed, training=training,
                                monitor=monitor, n_jobs=jobs)
        path = write_csv(result.placements, out_dir / f"sweep_standoff_{args.source}.csv")
        summary = "not detected" if result.range_m is None else f"{result.range_m:.2f} m"
        print(f"✓ {args.source} detection range: {summary}")
    else:
        result = material_sweep(seeds=args.seeds, base_seed=args.base_seed, training=training, monitor=monitor,
                                n_jobs=jobs)
        path = write_csv(result.placements, out_dir / "sweep_material.csv")
        for row in result.placements.itertuples():
            print(f"  - {row.label}: {row.detection_distance_m} m (measured {row.measured_min_m}-{row.measured_max_m} m)")
        summary = "material"
    print(f"✓ Sweep written to: {path}")
    _archive(settings, not args.no_archive, "sweep", f"{args.kind}:{args.source}", seed=args.base_seed,
             n=monitor.n, tau_s=monitor.tau_s, t_alarm=monitor.t_alarm, train_size=training.set_size,
             verdict=summary, output_dir=str(out_dir))
    return EXIT_OK


def cmd_freq_response(args: argparse.Namespace, settings: Settings) -> int:
    frame = frequency_response(args.chain, points=args.points)
    out_dir = Path(args.out or settings.out_dir)
    path = write_csv(frame, out_dir / f"freq_response_{args.chain}.csv")
    if args.html:
        response_figure(frame, args.chain).write_html(str(out_dir / f"freq_response_{args.chain}.html"),
                                                      include_plotlyjs="cdn")
    print(f"✓ Frequency response written to: {path}")
    return EXIT_OK


def cmd_power(args: argparse.Namespace, settings: Settings) -> int:
    report = average_power(PowerParams(), args.tau, args.acq)
    print(f"Average power:   {report.avg_power_uw:.1f} µW")
    print(f"Sleep fraction:  {report.sleep_fraction * 100:.2f} %")
    print(f"Peak current:    {report.peak_current_a * 1e3:.1f} mA")
    print(f"Lifetime:        {report.lifetime_years:.2f} years")
    return EXIT_OK


def cmd_host(args: argparse.Namespace, settings: Settings) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    if args.script == "-":
        lines = sys.stdin.read().splitlines()
    else:
        lines = Path(args.script).read_text(encoding="utf-8").splitlines()
    try:
        trace = HostEmulator(scenario).run_script(lines)
    except ValueError as e:
        print(f"✗ Script error: {e}")
        return EXIT_CONFIG
    text = "\n".join(trace) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"✓ Trace written to: {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_history(args: argparse.Namespace, settings: Settings) -> int:
    db = Database(settings.db_path)
    runs = db.get_runs(limit=args.limit)
    if not runs:
        print("No runs archived yet")
    for run in runs:
        trigger = "-" if run.first_trigger_s is None else f"{run.first_trigger_s:.1f}s"
        print(f"{run.id:5d}  {run.timestamp:%Y-%m-%d %H:%M}  {run.command:5s}  {str(run.scenario):24s}  "
              f"{str(run.verdict):10s}  {trigger:>8s}  {run.status}")
    db.close()
    return EXIT_OK


def _add_window_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--n', type=int, help='Event set size N (10-255)')
    parser.add_argument('--tau', type=int, help='Polling period in seconds (1-30)')
    parser.add_argument('--t-alarm', type=int, help='Alarm threshold T (T <= N)')
    parser.add_argument('--train-size', type=int, help='Training set size (10-255)')
    parser.add_argument('--preset', choices=sorted(WINDOW_PRESETS), help='Deployment window preset')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leaksentinel",
        description="Acoustic leak sensor simulator",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python run.py run spray_5m --n 20 --tau 2 --t-alarm 17
  python run.py run quiet --duration 3600 --out results
  python run.py sweep standoff --source jet --seeds 3
  python run.py sweep material
  python run.py freq-response --chain full
  python run.py host break_in commands.txt
        """
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('-v', '--verbose', action='store_true', help='Debug logging')

    subparsers = parser.add_subparsers(dest='command', help='Commands')

    run_parser = subparsers.add_parser('run', help='Train and monitor one scenario')
    run_parser.add_argument('scenario', help='Scenario file or bundled scenario name')
    run_parser.add_argument('--seed', type=int, help='Override the scenario seed')
    run_parser.add_argument('--duration', type=float, help='Monitoring duration in seconds')
    run_parser.add_argument('--out', help='Output directory (default: LEAKSENTINEL_OUT_DIR)')
    run_parser.add_argument('--html', action='store_true', help='Also write an HTML timeline plot')
    run_parser.add_argument('--spectrum', action='store_true', help='Also dump the spectrum of the first monitoring frame')
    run_parser.add_argument('--no-archive', action='store_true', help='Do not record the run in the archive')
    run_parser.add_argument('--max-sessions', type=int, default=50, help='Training session cap')
    _add_window_flags(run_parser)

    sweep_parser = subparsers.add_parser('sweep', help='Detection-range and power sweeps')
    sweep_parser.add_argument('kind', choices=['standoff', 'material', 'power'])
    sweep_parser.add_argument('--source', choices=['spray', 'jet'], default='spray')
    sweep_parser.add_argument('--seeds', type=int, default=3, help='Seeds per placement (default: 3)')
    sweep_parser.add_argument('--base-seed', type=int, default=0)
    sweep_parser.add_argument('--jobs', type=int, help='Parallel workers (default: LEAKSENTINEL_JOBS)')
    sweep_parser.add_argument('--acq', type=float, nargs='+', default=[1.0], help='Acquisitions per poll (power)')
    sweep_parser.add_argument('--out', help='Output directory')
    sweep_parser.add_argument('--no-archive', action='store_true')
    _add_window_flags(sweep_parser)

    freq_parser = subparsers.add_parser('freq-response', help='Dump a front-end frequency response')
    freq_parser.add_argument('--chain', choices=['full', 'analog', 'resonator'], default='full')
    freq_parser.add_argument('--points', type=int, default=400)
    freq_parser.add_argument('--out', help='Output directory')
    freq_parser.add_argument('--html', action='store_true')

    power_parser = subparsers.add_parser('power', help='Power and lifetime for a duty cycle')
    power_parser.add_argument('--tau', type=float, default=2.0)
    power_parser.add_argument('--acq', type=float, default=1.0, help='Mean acquisitions per poll')

    host_parser = subparsers.add_parser('host', help='Replay a host command script')
    host_parser.add_argument('scenario', help='Scenario file or bundled scenario name')
    host_parser.add_argument('script', help="Command script ('-' for stdin)")
    host_parser.add_argument('--seed', type=int)
    host_parser.add_argument('--out', help='Write the trace to a file')

    history_parser = subparsers.add_parser('history', help='List archived runs')
    history_parser.add_argument('--limit', type=int, default=20)

    return parser


COMMANDS = {
    'run': cmd_run,
    'sweep': cmd_sweep,
    'freq-response': cmd_freq_response,
    'power': cmd_power,
    'host': cmd_host,
    'history': cmd_history,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_CONFIG

    try:
        settings = Settings()
    except ConfigError as e:
        print(f"✗ {e}")
        return EXIT_CONFIG
    _configure_logging(settings.log_level, args.verbose)

    try:
        return COMMANDS[args.command](args, settings)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(p) for p in first["loc"])
        print(f"✗ Invalid configuration: {key}: {first['msg']}")
        return EXIT_CONFIG
    except (ConfigError, ValueError) as e:
        print(f"✗ {e}")
        return EXIT_CONFIG


if __name__ == '__main__':
    sys.exit(main())
