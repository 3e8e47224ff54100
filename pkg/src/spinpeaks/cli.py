"""Command-line entry point: ``spinpeaks <command> [options]``.

Exit codes: 0 success, 1 configuration or usage error, 2 finished with
non-converged points or flagged rows.
"""
from __future__ import annotations

import argparse
import json
import os
import re
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import pauli, spectrum
from .config import ConfigError, RunConfig, default_yaml, load_config
from .liouville import evolve_to_steady
from .observables import (
    convolution_c1,
    convolution_c2,
    export_trajectory,
    harmonic_content,
    mirror_symmetry_audit,
)

TWO_PI = 2 * np.pi
OK, CONFIG_ERROR, PARTIAL = 0, 1, 2

_UNITS = {"": 1.0, "hz": 1.0, "k": 1e3, "khz": 1e3, "mhz": 1e6}


def parse_hz(text: str) -> float:
    """'33.2kHz' -> 33200.0; bare numbers are Hz."""
    m = re.fullmatch(r"\s*([-+0-9.eE]+)\s*([a-zA-Z]*)\s*", str(text))
    if not m or m.group(2).lower() not in _UNITS:
        raise argparse.ArgumentTypeError(f"not a frequency: {text!r}")
    return float(m.group(1)) * _UNITS[m.group(2).lower()]


def parse_hz_list(text: str) -> list[float]:
    return [parse_hz(x) for x in text.split(",") if x.strip()]


class Outputs:
    """Stage files in a scratch directory and move them into place only on commit."""

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.scratch = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out_dir))
        self.names: list[str] = []

    def path(self, name: str) -> Path:
        self.names.append(name)
        return self.scratch / name

    def commit(self) -> list[Path]:
        done = []
        for name in self.names:
            dest = self.out_dir / name
            os.replace(self.scratch / name, dest)
            done.append(dest)
        self.discard()
        return done

    def discard(self):
        shutil.rmtree(self.scratch, ignore_errors=True)


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _with_config(cfg: RunConfig, **doc) -> dict:
    return {"config": cfg.snapshot(), **doc}


def cmd_sweep(cfg: RunConfig, args, out: Outputs) -> int:
    problem = cfg.problem()
    s = cfg.sweep
    lo, hi = TWO_PI * s.omega_lo_hz, TWO_PI * s.omega_hi_hz
    spec = spectrum.sweep((lo, hi), s.points, problem, cfg.tier, args.jobs, samples=s.samples)
    spec.params["config"] = cfg.snapshot()
    peaks = spectrum.find_peaks(spec, "C2")
    refined = []
    if args.refine:
        refined = [spectrum.refine_peak(spec, p, problem, s.refine_factor, cfg.tier, args.jobs) for p in peaks]
    spec.to_csv(out.path("spectrum.csv"))
    _write_json(out.path("peaks.json"), _with_config(
        cfg,
        peaks=[p.to_json() for p in peaks],
        refined=[p.to_json() for p in refined],
    ))
    for p in refined or peaks:
        print(f"peak {p.center / TWO_PI:10.1f} Hz  C2 {p.height:.4e}  hwhm {p.hwhm / TWO_PI:8.1f} Hz"
              + ("  (partial)" if p.partial else ""))
    return OK if spec.converged.all() else PARTIAL


def cmd_trajectory(cfg: RunConfig, args, out: Outputs) -> int:
    problem = cfg.problem()
    if args.omega is not None:
        problem = problem.with_omega(TWO_PI * args.omega)
    rec = evolve_to_steady(problem, tier=cfg.tier, samples=cfg.sweep.samples)
    summary = {
        "Omega_hz": problem.drive.Omega / TWO_PI,
        "C1": convolution_c1(rec),
        "C2": convolution_c2(rec),
        "converged": rec.converged,
    }
    if summary["C1"] > 0:
        summary["mirror"] = mirror_symmetry_audit(rec)
        h = harmonic_content(rec)
        summary["harmonics"] = {k: h[k] for k in ("fundamental", "max_above_2", "ratio", "ratio_low")}
    rec.meta.update({"C1": summary["C1"], "C2": summary["C2"], "config": cfg.snapshot()})
    export_trajectory(rec, out.path("trajectory.csv"))
    _write_json(out.path("trajectory.json"), _with_config(cfg, summary=summary))
    print(json.dumps(summary, indent=1, default=float))
    return OK if rec.converged else PARTIAL


def cmd_pauli(cfg: RunConfig, args, out: Outputs) -> int:
    p = cfg.pauli
    problem = cfg.problem()
    gamma = problem.sys.gyromagnetic_ratio(2)
    report = pauli.scan_set_A((p.r_lo, p.r_hi), p.n_scan, cfg.field.B0_tesla, gamma, phase0=p.phase0_rad)
    _write_json(out.path("set_a.json"), _with_config(cfg, members=report.to_json()))
    report.write_curve(out.path("deviation.csv"), f"# config: {json.dumps(cfg.snapshot(), sort_keys=True)}\n")
    if not report.frequencies:
        print("no members of set A in range")
    for r, cls, avg in list(zip(report.frequencies, report.classification, report.averaged))[:4]:
        print(f"r = {r:.6f} ({cls}), Omega = {r * gamma * cfg.field.B0_tesla / TWO_PI:.1f} Hz")
        for ax in "xyz":
            print(f"   {ax}: " + "  ".join(f"{1e3 * v:8.2f}" for v in avg[ax]) + "  (x1e-3)")
    return OK


def cmd_hwhm(cfg: RunConfig, args, out: Outputs) -> int:
    gammas = args.gammas or cfg.hwhm.gammas_hz
    if len(gammas) < 2:
        raise ConfigError("hwhm needs at least two relaxation rates to fit a slope")
    problem = cfg.problem()
    center = TWO_PI * cfg.hwhm.center_hz if cfg.hwhm.center_hz else None
    modes = ["spin_effect", "epr"] if args.mode == "both" else [args.mode]
    tables = {}
    for mode in modes:
        tab = spectrum.hwhm_vs_gamma(
            [TWO_PI * g for g in gammas], mode, problem, center=center, n_points=cfg.hwhm.points,
            tier=cfg.tier, jobs=args.jobs, B_ac=cfg.field.Bac_tesla,
        )
        tab.to_csv(out.path(f"hwhm_{mode}.csv"))
        tables[mode] = tab
        for g, h, f in zip(tab.gamma, tab.hwhm, tab.flagged):
            print(f"{mode:12s} Gamma {g / TWO_PI:8.1f} Hz  hwhm {h / TWO_PI:8.1f} Hz" + ("  flagged" if f else ""))
        print(f"{mode:12s} slope {tab.slope:.4f}  residual {tab.residual:.3%}")
    if len(tables) == 2:
        print(f"slope ratio epr/spin_effect {tables['epr'].slope / tables['spin_effect'].slope:.3f}")
    return PARTIAL if any(t.flagged.any() for t in tables.values()) else OK


def cmd_dump_operators(cfg: RunConfig, args, out: Outputs) -> int:
    cfg.problem().sys.to_json(out.path("operators.json"))
    return OK


def cmd_init_config(cfg: RunConfig, args, out: Outputs | None) -> int:
    sys.stdout.write(default_yaml())
    return OK


COMMANDS = {
    "sweep": cmd_sweep,
    "trajectory": cmd_trajectory,
    "pauli": cmd_pauli,
    "hwhm": cmd_hwhm,
    "dump-operators": cmd_dump_operators,
    "init-config": cmd_init_config,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(CONFIG_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="spinpeaks", description=__doc__.splitlines()[0])
    common = _Parser(add_help=False)
    common.add_argument("--config", "-c", help="YAML run configuration")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--jobs", "-j", type=int, default=None, help="worker processes (default: all cores)")
    common.add_argument("--tier", choices=["reduced", "full"], default=None)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", parents=[common], help="C1/C2 spectrum over a drive-frequency range")
    p.add_argument("--omega-lo", type=parse_hz, help="lower drive frequency (Hz, or with kHz suffix)")
    p.add_argument("--omega-hi", type=parse_hz)
    p.add_argument("--points", type=int)
    p.add_argument("--refine", action="store_true", help="re-sweep each peak window at higher density")

    p = sub.add_parser("trajectory", parents=[common], help="steady one-period trajectory at one frequency")
    p.add_argument("--omega", type=parse_hz)

    p = sub.add_parser("pauli", parents=[common], help="free-spin periodicity scan")
    p.add_argument("--r-lo", type=float)
    p.add_argument("--r-hi", type=float)
    p.add_argument("--n-scan", type=int)

    p = sub.add_parser("hwhm", parents=[common], help="peak width against relaxation rate")
    p.add_argument("--gammas", type=parse_hz_list, help="comma-separated relaxation rates in Hz")
    p.add_argument("--mode", choices=["spin_effect", "epr", "both"], default="both")

    sub.add_parser("dump-operators", parents=[common], help="write the atomic operators as JSON")
    sub.add_parser("init-config", parents=[common], help="print the default configuration")
    return ap


def _overrides(args) -> dict:
    return {
        "output_dir": args.out,
        "tier": args.tier,
        "sweep.omega_lo_hz": getattr(args, "omega_lo", None),
        "sweep.omega_hi_hz": getattr(args, "omega_hi", None),
        "sweep.points": getattr(args, "points", None),
        "pauli.r_lo": getattr(args, "r_lo", None),
        "pauli.r_hi": getattr(args, "r_hi", None),
        "pauli.n_scan": getattr(args, "n_scan", None),
    }


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as e:
        print(e, file=sys.stderr)
        return CONFIG_ERROR
    if args.command == "init-config":
        return cmd_init_config(cfg, args, None)
    out = Outputs(cfg.output_dir)
    try:
        code = COMMANDS[args.command](cfg, args, out)
    except (ConfigError, ValueError, spectrum.SweepError) as e:
        out.discard()
        print(f"error: {e}", file=sys.stderr)
        return CONFIG_ERROR
    except BaseException:
        out.discard()
        raise
    out.commit()
    return code


if __name__ == "__main__":
    sys.exit(main())
