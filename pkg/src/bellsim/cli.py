"""Command-line front end.

Commands:

  verdict   print the event table, pairwise causal classes and loophole
            verdicts for a scenario (exit 0 when both loopholes are closed,
            1 otherwise)
  run       simulate a scenario and write tag files, CSV mirrors, sidecars
            and a run manifest
  analyze   discover the clock offset between two tag files, compensate
            drift, match coincidences and report the Bell estimate
  tomo      reconstruct a two-photon state from counts (or simulate counts)
            and report entanglement metrics with bootstrap errors
  table2    run all four scenario presets and print their verdicts and
            Bell values side by side

Exit codes: 0 success, 1 verdict-open, 2 input error, 3 numerical or
analysis failure.  BELLSIM_THREADS caps table2 parallelism.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import coincidence, config, quantum, tagio, tomography
from .errors import (
    BellsimError,
    ConfigurationError,
    InputError,
    InsufficientDataError,
    NoSignalError,
    NumericalError,
)
from .photonsim import RunResult, ScenarioConfig, run_experiment
from .spacetime import build_scenario_events, gamma, simultaneity_frame, verdicts

EXIT_OK = 0
EXIT_VERDICT_OPEN = 1
EXIT_INPUT_ERROR = 2
EXIT_NUMERICAL_ERROR = 3


@dataclass(frozen=True)
class RunManifest:
    """Audit record of one simulation run."""

    scenario: str
    config_hash: str
    seed: int
    duration_s: float
    locality_closed: bool
    freedom_closed: bool
    settings_stochastic: bool
    outputs: dict[str, str]
    tag_counts: dict[str, int]
    started_utc: str
    wall_s: float

    def write(self, path: Path) -> None:
        payload = json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"
        tagio.atomic_write_bytes(path, payload.encode())


def _load_scenario(args) -> tuple[ScenarioConfig, str]:
    """Configuration plus the hash of its defining text."""
    if getattr(args, "config", None):
        text = Path(args.config).read_text()
        cfg = config.parse_config(text)
    else:
        name = getattr(args, "scenario", None) or "d"
        text = config.preset_text(name)
        cfg = config.parse_config(text)
    if getattr(args, "duration", None) is not None:
        cfg = replace(cfg, run_duration_s=float(args.duration))
    if getattr(args, "window", None) is not None:
        cfg = replace(cfg, coincidence_window_s=float(args.window))
    return cfg, config.config_hash(text)


def _print_verdict_report(cfg: ScenarioConfig) -> bool:
    events = build_scenario_events(cfg.geometry)
    stochastic = cfg.alice_source.stochastic and cfg.bob_source.stochastic
    verdict = verdicts(events, stochastic, slack_s=cfg.geometry.slack_s)

    print(f"scenario: {cfg.name}")
    print("events (t, x, duration):")
    for event in events:
        print(
            f"  {event.label:>2}  t = {event.t * 1e6:12.3f} us   "
            f"x = {event.x / 1e3:10.3f} km   duration = {event.duration * 1e9:6.1f} ns"
        )
    print("pairwise intervals (margin after duration padding and slack):")
    for l1, l2, cls in verdict.pair_report:
        print(f"  ({l1},{l2}): {cls.kind.value:>10}   margin = {cls.margin_m / 1e3:10.3f} km")
    meas_a = events[1]
    meas_b = events[2]
    try:
        v = simultaneity_frame(meas_a, meas_b)
        g = gamma(v)
        separation = abs(meas_b.x - meas_a.x) / g
        print(
            f"simultaneity frame of (A,B): v = {v / 299792458.0:+.3f} c, "
            f"gamma = {g:.3f}, contracted separation = {separation / 1e3:.1f} km"
        )
    except BellsimError:
        pass
    print(f"settings stochastic: {_yn(verdict.settings_stochastic)}")
    print(f"locality loophole:         {_closed(verdict.locality_closed)}")
    print(f"freedom-of-choice loophole: {_closed(verdict.freedom_closed)}")
    return verdict.locality_closed and verdict.freedom_closed


def _yn(flag: bool) -> str:
    return "yes" if flag else "no"


def _angles_text(angles_deg: tuple[float, float]) -> str:
    if any(np.isnan(a) for a in angles_deg):
        return "elliptical (outside the linear-polarizer plane)"
    return f"({angles_deg[0]:.2f}, {angles_deg[1]:.2f}) deg"


def _closed(flag: bool) -> str:
    return "CLOSED" if flag else "OPEN"


def cmd_verdict(args) -> int:
    cfg, _ = _load_scenario(args)
    both_closed = _print_verdict_report(cfg)
    return EXIT_OK if both_closed else EXIT_VERDICT_OPEN


def _write_run_outputs(result: RunResult, out_dir: Path, cfg_hash: str,
                       started: str, wall_s: float) -> RunManifest:
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {
        "alice_tags": str(out_dir / "alice.tags"),
        "bob_tags": str(out_dir / "bob.tags"),
        "alice_csv": str(out_dir / "alice.csv"),
        "bob_csv": str(out_dir / "bob.csv"),
    }
    tagio.write_tags(result.alice, outputs["alice_tags"])
    tagio.write_tags(result.bob, outputs["bob_tags"])
    tagio.write_tags_csv(result.alice, outputs["alice_csv"])
    tagio.write_tags_csv(result.bob, outputs["bob_csv"])
    sidecar = {
        "scenario": result.config.name,
        "config_hash": cfg_hash,
        "seed": result.seed,
        "duration_s": result.config.run_duration_s,
        "locality_closed": result.verdict.locality_closed,
        "freedom_closed": result.verdict.freedom_closed,
        "settings_stochastic": result.verdict.settings_stochastic,
    }
    for side in ("alice", "bob"):
        tagio.write_sidecar(
            out_dir / f"{side}.tags.meta", {**sidecar, "side": side}
        )
    manifest = RunManifest(
        scenario=result.config.name,
        config_hash=cfg_hash,
        seed=result.seed,
        duration_s=result.config.run_duration_s,
        locality_closed=result.verdict.locality_closed,
        freedom_closed=result.verdict.freedom_closed,
        settings_stochastic=result.verdict.settings_stochastic,
        outputs=outputs,
        tag_counts={"alice": len(result.alice), "bob": len(result.bob)},
        started_utc=started,
        wall_s=wall_s,
    )
    manifest.write(out_dir / "manifest.json")
    return manifest


def cmd_run(args) -> int:
    cfg, cfg_hash = _load_scenario(args)
    out_dir = Path(args.out)
    started = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    t0 = time.perf_counter()
    result = run_experiment(cfg, args.seed)
    wall = time.perf_counter() - t0
    manifest = _write_run_outputs(result, out_dir, cfg_hash, started, wall)
    print(f"scenario {cfg.name}: wrote {manifest.tag_counts['alice']} alice tags, "
          f"{manifest.tag_counts['bob']} bob tags to {out_dir}")
    print(f"verdicts: locality {_closed(manifest.locality_closed)}, "
          f"freedom-of-choice {_closed(manifest.freedom_closed)}")
    return EXIT_OK


def _print_bell_estimate(est: coincidence.BellEstimate, total: int,
                         accidentals: float) -> None:
    print("correlation coefficients:")
    for a_deg, b_deg, e, sigma, n in est.rows():
        print(f"  E({a_deg:g}, {b_deg:g}) = {e:+.4f} +- {sigma:.4f}   (n = {n})")
    print(f"coincidences: {total}   estimated accidentals: {accidentals:.1f}")
    print(f"S = {est.s_value:.4f} +- {est.sigma_s:.4f}   "
          f"({est.sigma_above_2:.1f} standard deviations above 2)")


def _write_bell_csv(path: Path, est: coincidence.BellEstimate, total: int,
                    accidentals: float, offset_ps: int) -> None:
    lines = ["quantity,a_deg,b_deg,value,sigma,n"]
    for a_deg, b_deg, e, sigma, n in est.rows():
        lines.append(f"E,{a_deg:g},{b_deg:g},{e:.6f},{sigma:.6f},{n}")
    lines.append(f"S,,,{est.s_value:.6f},{est.sigma_s:.6f},{total}")
    lines.append(f"sigma_above_2,,,{est.sigma_above_2:.4f},,")
    lines.append(f"offset_ps,,,{offset_ps},,")
    lines.append(f"estimated_accidentals,,,{accidentals:.3f},,")
    tagio.atomic_write_bytes(path, ("\n".join(lines) + "\n").encode())


def cmd_analyze(args) -> int:
    alice = tagio.read_tags(args.alice)
    bob = tagio.read_tags(args.bob)
    window = args.window if args.window is not None else coincidence.DEFAULT_WINDOW_S
    result = coincidence.analyze_streams(alice, bob, window_s=window)
    est = result.estimate
    cs = result.coincidences
    print(f"clock offset: {result.offset_ps / 1e6:.4f} us")
    _print_bell_estimate(est, cs.total, cs.estimated_accidentals)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_bell_csv(out_dir / "bell.csv", est, cs.total,
                    cs.estimated_accidentals, result.offset_ps)
    if args.histogram:
        centers, counts = coincidence.delta_histogram(alice, bob, result.offset_ps)
        lines = ["delta_ps,count"]
        lines.extend(f"{int(c)},{int(n)}" for c, n in zip(centers, counts))
        tagio.atomic_write_bytes(
            out_dir / "delta_histogram.csv", ("\n".join(lines) + "\n").encode()
        )
    return EXIT_OK


def _write_rho_csv(out_dir: Path, rho: np.ndarray) -> None:
    for part, grid in (("real", rho.real), ("imag", rho.imag)):
        lines = [",".join(f"{grid[i, j]:+.6f}" for j in range(4)) for i in range(4)]
        tagio.atomic_write_bytes(
            out_dir / f"rho_{part}.csv", ("\n".join(lines) + "\n").encode()
        )


def cmd_tomo(args) -> int:
    if args.simulate is not None:
        visibility, n_per_setting = args.simulate
        data = tomography.simulate_counts(
            quantum.werner(float(visibility)), float(n_per_setting), args.seed
        )
        n_exposure = float(n_per_setting)
    elif args.counts:
        data = tomography.read_counts_csv(args.counts)
        n_exposure = float(np.mean(data.counts)) * 4.0
    else:
        raise InputError("tomo needs either --counts FILE or --simulate V N")

    fit = tomography.mle_reconstruct(data)
    if not fit.converged:
        print(f"warning: reconstruction did not converge ({fit.message})",
              file=sys.stderr)
    rep = tomography.report(
        fit.rho, n_bootstrap=args.bootstrap, seed=args.seed,
        n_per_setting=n_exposure,
    )
    print("reconstructed density matrix (real part):")
    for row in rep.rho.real:
        print("   " + "  ".join(f"{x:+.4f}" for x in row))
    print(f"tangle                    T     = {rep.tangle:.4f} +- {rep.tangle_sigma:.4f}")
    print(f"linear entropy            S_L   = {rep.linear_entropy:.4f} +- {rep.linear_entropy_sigma:.4f}")
    print(f"fully entangled fraction  F_opt = {rep.fully_entangled_fraction:.4f} +- {rep.fully_entangled_fraction_sigma:.4f}")
    print(f"S at the standard angles  S     = {rep.s_fixed_angles:.4f} +- {rep.s_fixed_angles_sigma:.4f}")
    print(f"S at optimal angles       S_opt = {rep.s_optimal:.4f} +- {rep.s_optimal_sigma:.4f}")
    print(f"optimal analyzer settings: alice {_angles_text(rep.optimal_alice_angles_deg)}, "
          f"bob {_angles_text(rep.optimal_bob_angles_deg)}")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_rho_csv(out_dir, rep.rho)
    lines = ["metric,value,sigma"]
    lines.append(f"tangle,{rep.tangle:.6f},{rep.tangle_sigma:.6f}")
    lines.append(f"linear_entropy,{rep.linear_entropy:.6f},{rep.linear_entropy_sigma:.6f}")
    lines.append(
        f"fully_entangled_fraction,{rep.fully_entangled_fraction:.6f},"
        f"{rep.fully_entangled_fraction_sigma:.6f}"
    )
    lines.append(f"s_fixed_angles,{rep.s_fixed_angles:.6f},{rep.s_fixed_angles_sigma:.6f}")
    lines.append(f"s_optimal,{rep.s_optimal:.6f},{rep.s_optimal_sigma:.6f}")
    tagio.atomic_write_bytes(out_dir / "metrics.csv", ("\n".join(lines) + "\n").encode())
    return EXIT_OK


def _table2_row(name: str, seed: int, duration_scale: float):
    cfg = config.load_preset(name)
    if duration_scale != 1.0:
        cfg = replace(cfg, run_duration_s=cfg.run_duration_s * duration_scale)
    result = run_experiment(cfg, seed)
    analysis = coincidence.analyze_streams(result.alice, result.bob)
    return name, result.verdict, analysis.estimate


def cmd_table2(args) -> int:
    max_threads = int(os.environ.get("BELLSIM_THREADS", "1"))
    rows = []
    if max_threads > 1:
        with ThreadPoolExecutor(max_workers=min(max_threads, 4)) as pool:
            futures = [
                pool.submit(_table2_row, name, args.seed + i, args.duration_scale)
                for i, name in enumerate(config.PRESET_NAMES)
            ]
            rows = [f.result() for f in futures]
    else:
        rows = [
            _table2_row(name, args.seed + i, args.duration_scale)
            for i, name in enumerate(config.PRESET_NAMES)
        ]

    print(f"{'scenario':>8}  {'locality':>9}  {'freedom':>9}  {'S':>7}  "
          f"{'sigma_S':>8}  {'above 2':>8}")
    lines = ["scenario,locality_closed,freedom_closed,S,sigma_S,sigma_above_2"]
    for name, verdict, est in rows:
        print(f"{name:>8}  {_closed(verdict.locality_closed):>9}  "
              f"{_closed(verdict.freedom_closed):>9}  {est.s_value:7.3f}  "
              f"{est.sigma_s:8.3f}  {est.sigma_above_2:8.1f}")
        lines.append(
            f"{name},{verdict.locality_closed},{verdict.freedom_closed},"
            f"{est.s_value:.5f},{est.sigma_s:.5f},{est.sigma_above_2:.2f}"
        )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tagio.atomic_write_bytes(out_dir / "table2.csv", ("\n".join(lines) + "\n").encode())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bellsim",
        description="Simulate and analyze a long-distance Bell experiment "
                    "with space-like separated setting choices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_scenario_args(p):
        p.add_argument("--scenario", choices=config.PRESET_NAMES,
                       help="preset scenario name")
        p.add_argument("--config", help="path to a scenario configuration file")
        p.add_argument("--duration", type=float,
                       help="override the run duration in seconds")

    p_verdict = sub.add_parser("verdict", help="loophole-closure report")
    add_scenario_args(p_verdict)
    p_verdict.set_defaults(func=cmd_verdict)

    p_run = sub.add_parser("run", help="simulate a run and write tag files")
    add_scenario_args(p_run)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--window", type=float,
                       help="override the coincidence window in seconds")
    p_run.set_defaults(func=cmd_run)

    p_an = sub.add_parser("analyze", help="coincidence analysis of tag files")
    p_an.add_argument("--alice", required=True, help="alice binary tag file")
    p_an.add_argument("--bob", required=True, help="bob binary tag file")
    p_an.add_argument("--window", type=float, default=None,
                      help="coincidence window in seconds (default 1.5e-9)")
    p_an.add_argument("--out", required=True, help="output directory")
    p_an.add_argument("--histogram", action="store_true",
                      help="also write a time-difference histogram CSV")
    p_an.set_defaults(func=cmd_analyze)

    p_tomo = sub.add_parser("tomo", help="two-photon state tomography")
    p_tomo.add_argument("--counts", help="counts CSV (alice_proj,bob_proj,count)")
    p_tomo.add_argument("--simulate", nargs=2, metavar=("V", "N"),
                        help="simulate counts from a Werner state")
    p_tomo.add_argument("--seed", type=int, default=0)
    p_tomo.add_argument("--bootstrap", type=int, default=40)
    p_tomo.add_argument("--out", required=True, help="output directory")
    p_tomo.set_defaults(func=cmd_tomo)

    p_t2 = sub.add_parser("table2", help="four-scenario summary table")
    p_t2.add_argument("--seed", type=int, default=0)
    p_t2.add_argument("--duration-scale", type=float, default=1.0,
                      help="scale factor applied to every preset duration")
    p_t2.add_argument("--out", required=True, help="output directory")
    p_t2.set_defaults(func=cmd_table2)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NoSignalError, NumericalError, InsufficientDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL_ERROR
    except (InputError, ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except BellsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
