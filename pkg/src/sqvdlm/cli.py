"""Command-line front end: ``sqvdlm ingest|fit|compare|simulate``.

Settings resolve as command-line flags, then the ``--config`` JSON file, then
defaults; the effective settings are echoed into every output. Reruns with the
same inputs produce byte-identical files.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .benchmarks import dlm0, dlm_forecaster, holt_winters, sarima_fit, snaive
from .diagnostics import ComparisonTable, accuracy, interval_length_pct_diff
from .em import EmConfig, fit
from .errors import SqvDlmError
from .io import read_monthly_csv, read_panel_csv, read_weekly_csv, write_panel_csv, write_rows_csv
from .series import MonthStamp, ObservationPanel, aggregate_weekly_to_monthly, demean, split
from .synthetic import SimConfig, load_scenario, simulate, write_simulation

log = logging.getLogger("sqvdlm")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2, 3

DEFAULTS = {
    "ingest": {"range": None},
    "fit": {"model": "dlm1", "run": None, "cutoff": None, "seed": 0, "em": {}},
    "compare": {"cutoff": None, "horizon": 12, "run": None, "seed": 0, "em": {},
                "sarima_grid": None},
    "simulate": {"scenario": "paper-like", "seed": 0, "T": 117, "a": None},
}


class UsageError(Exception):
    pass


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _resolve(command: str, args) -> dict:
    """Merge defaults < config file < flags."""
    settings = json.loads(json.dumps(DEFAULTS[command]))
    if getattr(args, "config", None):
        doc = json.loads(Path(args.config).read_text())
        doc = doc.get(command, doc)
        unknown = set(doc) - set(settings)
        if unknown:
            raise UsageError(f"unknown {command} config keys: {sorted(unknown)}")
        settings.update(doc)
    if getattr(args, "em_config", None):
        settings["em"] = dict(settings.get("em") or {}, **json.loads(Path(args.em_config).read_text()))
    for key in settings:
        value = getattr(args, key, None)
        if value is not None and key != "em":
            settings[key] = value
    return settings


def _parse_range(text):
    try:
        first, last = (MonthStamp.parse(p) for p in text.split(":"))
    except ValueError as exc:
        raise UsageError(f"--range must look like YYYY-MM:YYYY-MM ({exc})") from None
    if last < first:
        raise UsageError(f"--range end {last} precedes start {first}")
    return first, last


def _em_config(settings) -> EmConfig:
    em = dict(settings.get("em") or {})
    em["seed"] = int(settings["seed"])
    try:
        return EmConfig.from_dict(em)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid EM config: {exc}") from None


def _replicate_index(panel: ObservationPanel, run) -> int:
    """Resolve ``--run`` (name or 1-based index); default is the last column."""
    if run is None:
        return panel.a - 1
    if str(run) in panel.names:
        return panel.names.index(str(run))
    try:
        k = int(run)
    except ValueError:
        raise UsageError(f"--run {run!r} matches no replicate ({', '.join(panel.names)})") from None
    if not 1 <= k <= panel.a:
        raise UsageError(f"--run {k} outside 1..{panel.a}")
    return k - 1


# --- ingest --------------------------------------------------------------------

def command_ingest(args) -> int:
    settings = _resolve("ingest", args)
    target = read_monthly_csv(args.target)
    weekly = [read_weekly_csv(p) for p in args.weekly]
    if settings["range"]:
        first, last = _parse_range(settings["range"])
    else:
        first, last = target.start, target.end
    reps = tuple(aggregate_weekly_to_monthly(w, first, last) for _, w in weekly)
    names = tuple(f"sqv_{i + 1}" for i in range(len(reps)))
    panel = ObservationPanel(target.reindex(first, last), reps, None, names)
    write_panel_csv(panel, args.out)
    _write_json(Path(args.out).with_suffix(".meta.json"), {
        "command": "ingest",
        "version": __version__,
        "settings": settings,
        "target": str(args.target),
        "weekly": [{"file": str(p), "label": label, "column": n}
                   for p, (label, _), n in zip(args.weekly, weekly, names)],
        "range": [str(first), str(last)],
    })
    log.info("wrote %s (%d months, a=%d)", args.out, len(panel), panel.a)
    return EXIT_OK


# --- fit -----------------------------------------------------------------------

def _fit_panel(panel, settings):
    model = settings["model"]
    if model not in ("dlm1", "dlm2", "dlm0"):
        raise UsageError(f"unknown model {model!r}")
    cutoff = MonthStamp.parse(settings["cutoff"]) if settings["cutoff"] else panel.end
    train = panel if cutoff == panel.end else split(panel, cutoff)[0]
    config = _em_config(settings)
    if model == "dlm0":
        out = dlm0(train.target, 1, config)
        return out.model_meta["fit"], cutoff
    if model == "dlm2":
        train = train.select_replicates([_replicate_index(panel, settings["run"])])
    centred = demean(train, cutoff)
    report = fit(centred, centred.a, config).to_dict()
    report["model"] = model
    report["demean_offsets"] = list(centred.demean_offsets)
    report["replicates"] = list(centred.names)
    return report, cutoff


def command_fit(args) -> int:
    settings = _resolve("fit", args)
    panel = read_panel_csv(args.panel)
    report, cutoff = _fit_panel(panel, settings)
    report["settings"] = settings
    report["panel"] = str(args.panel)
    report["training_window"] = [str(panel.start), str(cutoff)]
    _write_json(args.out, report)
    log.info("wrote %s (loglik %.6g)", args.out, report["loglik"])
    return EXIT_OK


# --- compare -------------------------------------------------------------------

def _accuracy_for(out, train_target, test_target):
    return accuracy(train_target, out.fitted, out.forecasts, test_target)


def command_compare(args) -> int:
    settings = _resolve("compare", args)
    panel = read_panel_csv(args.panel)
    H = int(settings["horizon"])
    cutoff = MonthStamp.parse(settings["cutoff"]) if settings["cutoff"] else panel.end.shift(-H)
    train, test = split(panel, cutoff)
    config = _em_config(settings)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_index = _replicate_index(panel, settings["run"])

    runners = {
        "DLM1": lambda: dlm_forecaster(train, H, config),
        "DLM0": lambda: dlm0(train.target, H, config),
        "SARIMA": lambda: sarima_fit(train.target, H, settings["sarima_grid"], config.level),
        "HW": lambda: holt_winters(train.target, H),
        "SNAIVE": lambda: snaive(train.target, H, config.level),
    }
    table = ComparisonTable()
    meta = {}
    dlm1_fc = None
    for name, run in runners.items():
        try:
            result = run()
        except (SqvDlmError, ValueError, np.linalg.LinAlgError) as exc:
            log.error("%s failed: %s", name, exc)
            table.fail(name, str(exc))
            continue
        if name == "DLM1":
            result, dlm1_fc, _ = result
        result.to_csv(out_dir / f"forecast_{name.lower()}.csv")
        table.add(name, _accuracy_for(result, train.target, test.target))
        meta[name] = result.model_meta
    table.to_csv(out_dir / "accuracy.csv")

    curve_status = "ok"
    try:
        _, dlm2_fc, _ = dlm_forecaster(train.select_replicates([run_index]), H, config)
        if dlm1_fc is None:
            raise SqvDlmError("DLM1 fit unavailable")
        pct = interval_length_pct_diff(dlm1_fc, dlm2_fc)
        write_rows_csv(out_dir / "interval_pct_diff.csv",
                       ("horizon", "dlm1_length", "dlm2_length", "pct_diff"),
                       zip(range(1, H + 1), dlm1_fc.interval_length, dlm2_fc.interval_length, pct))
    except (SqvDlmError, ValueError, np.linalg.LinAlgError) as exc:
        log.error("interval comparison failed: %s", exc)
        curve_status = f"failed: {exc}"

    _write_json(out_dir / "compare.json", {
        "command": "compare",
        "version": __version__,
        "settings": settings,
        "panel": str(args.panel),
        "training_window": [str(train.start), str(train.end)],
        "test_window": [str(test.start), str(test.end)],
        "dlm2_replicate": panel.names[run_index],
        "accuracy": table.to_dict(),
        "interval_curve": curve_status,
        "models": meta,
    })
    partial = bool(table.failures) or curve_status != "ok"
    return EXIT_PARTIAL if partial else EXIT_OK


# --- simulate ------------------------------------------------------------------

def command_simulate(args) -> int:
    settings = _resolve("simulate", args)
    try:
        scenario = load_scenario(settings["scenario"])
    except FileNotFoundError as exc:
        raise UsageError(f"scenario file not found: {exc.filename}") from None
    a = scenario["a"] if settings["a"] is None else int(settings["a"])
    try:
        config = SimConfig(scenario["params"], a, int(settings["T"]), scenario["start"], int(settings["seed"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    panel, truth = simulate(config)
    write_simulation(panel, truth, config, args.out,
                     extra={"settings": settings, "version": __version__})
    log.info("wrote %s (T=%d, a=%d)", args.out, config.T, config.a)
    return EXIT_OK


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sqvdlm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="aggregate weekly search-volume exports into a panel CSV")
    p.add_argument("--target", required=True, help="monthly target CSV (date,value)")
    p.add_argument("--weekly", required=True, nargs="+",
                   help="weekly export CSVs, one per replicate, oldest download first")
    p.add_argument("--range", help="month range YYYY-MM:YYYY-MM (default: target range)")
    p.add_argument("--config", help="JSON settings file")
    p.add_argument("--out", required=True, help="output panel CSV")
    p.set_defaults(func=command_ingest)

    p = sub.add_parser("fit", help="fit a DLM by EM and write a JSON report")
    p.add_argument("--panel", required=True)
    p.add_argument("--model", choices=("dlm1", "dlm2", "dlm0"))
    p.add_argument("--run", help="replicate kept by dlm2 (name or 1-based index; default last)")
    p.add_argument("--cutoff", help="last training month YYYY-MM (default: panel end)")
    p.add_argument("--seed", type=int)
    p.add_argument("--em-config", help="JSON file of EM settings")
    p.add_argument("--config", help="JSON settings file")
    p.add_argument("--out", required=True, help="output report JSON")
    p.set_defaults(func=command_fit)

    p = sub.add_parser("compare", help="accuracy table of DLM1, DLM0, SARIMA, HW and SNAIVE")
    p.add_argument("--panel", required=True)
    p.add_argument("--cutoff", help="last training month YYYY-MM (default: end minus horizon)")
    p.add_argument("--horizon", type=int)
    p.add_argument("--run", help="replicate used for the dlm2 interval curve")
    p.add_argument("--seed", type=int)
    p.add_argument("--em-config", help="JSON file of EM settings")
    p.add_argument("--config", help="JSON settings file")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=command_compare)

    p = sub.add_parser("simulate", help="simulate a panel with a known latent truth")
    p.add_argument("--scenario", help="'paper-like' or a scenario JSON file")
    p.add_argument("--seed", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--a", type=int, help="replicate count (default from scenario)")
    p.add_argument("--config", help="JSON settings file")
    p.add_argument("--out", required=True, help="output panel CSV")
    p.set_defaults(func=command_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sqvdlm {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SqvDlmError, OSError, ValueError) as exc:
        print(f"sqvdlm {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
