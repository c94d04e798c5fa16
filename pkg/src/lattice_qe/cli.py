"""Command-line front end.

Usage::

    lattice-qe run --scenario fig2a --g 0.1 --delta -3 --out results/
    lattice-qe run --scenario poles --g 0.1 --delta 0
    lattice-qe run --config my.cfg --dry-run

Exit codes: 0 all comparisons passed, 1 configuration error, 2 numerical
failure, 3 at least one comparison failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from dataclasses import asdict
from pathlib import Path

import scipy.fft

from . import __version__
from .errors import ConfigError
from .scenarios import SCENARIOS, ScenarioConfig, compare_engines, numeric_plan, run_scenario, validate_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_COMPARISON = 0, 1, 2, 3

# config-file keys and their parsers; flags use the same names
_FLOAT_KEYS = {"J", "g", "t_final", "dt", "sample_every", "tolerance"}
_INT_KEYS = {"N", "n", "threads"}
_STR_KEYS = {"scenario", "method", "map_format", "out"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _float_list(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _pairs(text):
    """``"6,6"`` or ``"6,6;5,5"`` to a tuple of integer pairs."""
    try:
        pairs = tuple(tuple(int(v) for v in p.split(",")) for p in text.split(";") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integer pairs like 6,6;5,5, got {text!r}") from None
    if not pairs or any(len(p) != 2 for p in pairs):
        raise argparse.ArgumentTypeError(f"expected integer pairs like 6,6;5,5, got {text!r}")
    return pairs


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lattice-qe", description="Emitters coupled to a 2D square-lattice bath.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    run = sub.add_parser("run", help="run one scenario and compare against predictions")
    run.add_argument("--scenario", choices=SCENARIOS + ("compare_engines",))
    run.add_argument("--config", help="flat key = value file; flags override it")
    run.add_argument("--N", type=int)
    run.add_argument("--J", type=float)
    run.add_argument("--g", type=float)
    run.add_argument("--delta", type=_float_list, help="detuning(s), comma-separated")
    run.add_argument("--n12", type=_pairs, help="two-emitter separation(s), e.g. 6,6 or 6,6;5,5")
    run.add_argument("--n", type=int, help="four-emitter half spacing")
    run.add_argument("--t-final", dest="t_final", type=float)
    run.add_argument("--dt", type=float)
    run.add_argument("--sample-every", dest="sample_every", type=float)
    run.add_argument("--tolerance", type=float)
    run.add_argument("--method", choices=("chebyshev", "rk4"))
    run.add_argument("--map-format", dest="map_format", choices=("binary", "text"))
    run.add_argument("--threads", type=int, help="FFT worker threads (default: all cores)")
    run.add_argument("--out", help="existing directory for all artifacts")
    run.add_argument("--dry-run", action="store_true", help="validate and print the numeric plan only")
    return parser


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            if key in _FLOAT_KEYS:
                values[key] = float(val)
            elif key in _INT_KEYS:
                values[key] = int(val)
            elif key in _STR_KEYS:
                values[key] = val
            elif key == "delta":
                values[key] = _float_list(val)
            elif key == "n12":
                values[key] = _pairs(val)
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return values


def _resolve(args) -> ScenarioConfig:
    values = read_config_file(args.config) if args.config else {}
    for key in _FLOAT_KEYS | _INT_KEYS | _STR_KEYS | {"delta", "n12"}:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if "scenario" not in values:
        raise ConfigError("no scenario given (use --scenario or a config file)")
    scenario = values.pop("scenario")
    if scenario == "compare_engines":
        return ScenarioConfig("compare_engines", **values)
    return ScenarioConfig(scenario, **values)


def _write_atomic(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _exit_code(report) -> int:
    if report.error:
        return EXIT_CONFIG if report.error_category == "config" else EXIT_NUMERIC
    return EXIT_OK if report.passed else EXIT_COMPARISON


def main(argv=None) -> int:
    started = time.time()
    try:
        args = build_parser().parse_args(argv)
        if args.command != "run":
            raise ConfigError("missing command (expected: run)")
        cfg = _resolve(args)
        if cfg.scenario == "compare_engines":
            check = validate_config(ScenarioConfig("fig2a", **{k: v for k, v in asdict(cfg).items() if k != "scenario"}))
        else:
            check = validate_config(cfg)
        if args.dry_run:
            plan = numeric_plan(check)
            for k, v in plan.items():
                print(f"{k}={v}")
            return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    workers = cfg.threads if cfg.threads is not None else (os.cpu_count() or 1)
    with scipy.fft.set_workers(workers):
        report = compare_engines(cfg) if cfg.scenario == "compare_engines" else run_scenario(cfg)
    sys.stdout.write(report.to_text())

    if cfg.out is not None:
        out = Path(cfg.out)
        manifest = {
            "config": {k: v for k, v in asdict(check).items()},
            "version": __version__,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
            "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "outputs": [p for p in report.artifacts if Path(p).exists()],
            "passed": report.passed,
            "failed_claims": [r.claim for r in report.rows if not r.passed],
            "error": report.error,
        }
        _write_atomic(out / "manifest.json", json.dumps(manifest, indent=2, default=list) + "\n")
    return _exit_code(report)


if __name__ == "__main__":
    sys.exit(main())
