"""``latticedet`` command line: ``sweep``, ``verify`` and ``slope``.

Config files are flat ``key = value`` lines named after ``SimConfig``
fields. Precedence, lowest first: built-in defaults, ``LATTICEDET_SEED``,
the config file, command-line flags. A report written by ``sweep`` embeds
its resolved config and can itself be passed back as ``--config``.
"""
import argparse
import json
import logging
import math
import os
import sys

from . import detect, verify
from .errors import ConfigError, InsufficientData, SearchSpaceTooLarge
from .sim import (
    SNR_NOTE,
    BerReport,
    BerRow,
    SimConfig,
    config_items,
    estimate_diversity_slope,
    run_ber_sweep,
    slope_window,
)

log = logging.getLogger("latticedet")

CSV_HEADER = "snr_db,detector,budget_n,bit_errors,bits_total,ber,sd_attempted_frac,sd_completed_frac,mean_nodes"
CONFIG_PREFIX = "# config: "
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_SEARCH_SPACE = 3
EXIT_INSUFFICIENT = 4


# --- value parsing ------------------------------------------------------------

def parse_float(text):
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    return float(t)


def parse_grid(text):
    """``lo:step:hi`` (inclusive) or a comma list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid {text!r} is not lo:step:hi")
        lo, step, hi = (float(p) for p in parts)
        if step <= 0 or hi < lo:
            raise ValueError(f"grid {text!r} needs step > 0 and hi >= lo")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return tuple(round(lo + i * step, 10) for i in range(count))
    return tuple(parse_float(p) for p in text.split(",") if p.strip())


def _parse_optional_int(text):
    return None if text.strip().lower() in ("", "none") else int(text)


FIELD_PARSERS = {
    "n_rx": int,
    "n_tx": int,
    "qam_order": int,
    "snr_grid_db": parse_grid,
    "k_batch": int,
    "n_budget": parse_grid,
    "trials": int,
    "seed": int,
    "detectors": lambda t: tuple(p.strip() for p in t.split(",") if p.strip()),
    "zf_cost_units": _parse_optional_int,
    "node_cost_units": int,
}


def format_value(value):
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        return "inf" if math.isinf(value) and value > 0 else repr(value)
    return str(value)


def load_config(path):
    """Raw ``{field: text}`` from a config file or from a report's header."""
    values = {}
    with open(path) as fh:
        first = fh.readline()
        if first.startswith("{"):
            head = json.loads(first)
            return {k: str(v) for k, v in head.get("config", {}).items()}
        fh.seek(0)
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if line.startswith(CONFIG_PREFIX):
                line = line[len(CONFIG_PREFIX):]
            elif not line or line.startswith("#"):
                continue
            elif "=" not in line:
                if "," in line:
                    continue  # report body
                raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in FIELD_PARSERS:
                raise ConfigError(key, "unknown config field")
            values[key] = val.strip()
    return values


def resolve_config(file_values=None, overrides=None, environ=None):
    environ = os.environ if environ is None else environ
    raw = {}
    if "LATTICEDET_SEED" in environ:
        raw["seed"] = environ["LATTICEDET_SEED"]
    raw.update(file_values or {})
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    kwargs = {}
    for key, text in raw.items():
        try:
            kwargs[key] = FIELD_PARSERS[key](text) if isinstance(text, str) else text
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"cannot parse {text!r}: {exc}") from None
    return SimConfig(**kwargs)


# --- report I/O ----------------------------------------------------------------

def _num(v):
    return format_value(float(v))


def report_to_csv(report):
    lines = ["# latticedet BER report", f"# snr definition: {SNR_NOTE}"]
    lines += [f"{CONFIG_PREFIX}{k} = {format_value(v)}" for k, v in config_items(report.config)]
    lines.append(CSV_HEADER)
    for r in report.rows:
        lines.append(",".join([
            _num(r.snr_db), r.detector, _num(r.budget_n), str(r.bit_errors), str(r.bits_total),
            _num(r.ber), _num(r.sd_attempted_frac), _num(r.sd_completed_frac), _num(r.mean_nodes),
        ]))
    return "\n".join(lines) + "\n"


def report_to_jsonl(report):
    head = {
        "config": {k: format_value(v) for k, v in config_items(report.config)},
        "snr_definition": SNR_NOTE,
    }
    out = [json.dumps(head, sort_keys=True)]
    for r in report.rows:
        out.append(json.dumps({
            "snr_db": _num(r.snr_db), "detector": r.detector, "budget_n": _num(r.budget_n),
            "bit_errors": r.bit_errors, "bits_total": r.bits_total, "ber": r.ber,
            "sd_attempted_frac": r.sd_attempted_frac, "sd_completed_frac": r.sd_completed_frac,
            "mean_nodes": r.mean_nodes,
        }, sort_keys=True))
    return "\n".join(out) + "\n"


def _row(snr, det, n, errs, bits, ber, att, comp, nodes):
    return BerRow(parse_float(str(snr)), det, parse_float(str(n)), int(errs), int(bits),
                  float(ber), float(att), float(comp), float(nodes))


def read_report(path):
    cfg = resolve_config(load_config(path), environ={})
    rows = []
    with open(path) as fh:
        text = fh.read()
    if text.startswith("{"):
        for line in text.splitlines()[1:]:
            if line.strip():
                d = json.loads(line)
                rows.append(_row(d["snr_db"], d["detector"], d["budget_n"], d["bit_errors"],
                                 d["bits_total"], d["ber"], d["sd_attempted_frac"],
                                 d["sd_completed_frac"], d["mean_nodes"]))
    else:
        body = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        if not body or body[0] != CSV_HEADER:
            raise ConfigError("report", f"{path} has no CSV header")
        for line in body[1:]:
            rows.append(_row(*line.split(",")))
    return BerReport(cfg, rows)


# --- subcommands ----------------------------------------------------------------

def _sweep_overrides(args):
    return {
        "n_rx": args.n_rx, "n_tx": args.n_tx, "qam_order": args.qam,
        "snr_grid_db": args.snr, "k_batch": args.k_batch, "n_budget": args.budgets,
        "trials": args.trials, "seed": args.seed, "detectors": args.detectors,
        "zf_cost_units": args.zf_cost, "node_cost_units": args.node_cost,
    }


def _config_from_args(args):
    file_values = load_config(args.config) if args.config else {}
    cfg = resolve_config(file_values, _sweep_overrides(args))
    for key, value in config_items(cfg):
        log.info("config %s = %s", key, format_value(value))
    log.info("snr definition: %s", SNR_NOTE)
    return cfg


def run_sweep(args):
    cfg = _config_from_args(args)
    report = run_ber_sweep(cfg, workers=args.workers)
    text = report_to_jsonl(report) if args.format == "json-lines" else report_to_csv(report)
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.output, "w") as fh:
            fh.write(text)
        log.info("wrote %d rows to %s", len(report.rows), args.output)
    return 0


def run_verify(args):
    fault = os.environ.get("LATTICEDET_FAULT", "")
    if fault == "sd-radius":
        detect._radius_fault = 0.5
        log.warning("fault injection active: sphere radius shrinks past the best candidate")
    try:
        results = verify.run_all(args.instances, seed=args.seed or 0)
    finally:
        detect._radius_fault = 1.0
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  ({r.checked} checked; {r.detail})")
    return 0 if all(r.passed for r in results) else EXIT_VERIFY_FAILED


def run_slope(args):
    if args.report:
        report = read_report(args.report)
    else:
        report = run_ber_sweep(_config_from_args(args), workers=args.workers)
    wanted = args.detector or sorted({r.detector for r in report.rows})
    status = 0
    for tag in wanted:
        budgets = sorted({r.budget_n for r in report.rows if r.detector == tag})
        if not budgets:
            print(f"{tag}: no rows in report")
            status = EXIT_INSUFFICIENT
            continue
        for n in budgets:
            try:
                if args.lo is not None and args.hi is not None:
                    lo, hi = args.lo, args.hi
                else:
                    lo, hi = slope_window(report, tag, n)
                slope = estimate_diversity_slope(report, tag, lo, hi, n)
            except InsufficientData as exc:
                print(f"{tag} n={format_value(n)}: insufficient data ({exc})")
                status = EXIT_INSUFFICIENT
                continue
            ev = min(report.find(tag, lo, n).bit_errors, report.find(tag, hi, n).bit_errors)
            print(f"{tag} n={format_value(n)}: slope {slope:.3f} over {lo:g}..{hi:g} dB "
                  f"(min error events {ev}, ok)")
    return status


def build_parser():
    parser = argparse.ArgumentParser(prog="latticedet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    def sim_flags(p):
        p.add_argument("--config", help="flat key = value file (or an earlier report)")
        p.add_argument("--n-rx", type=str)
        p.add_argument("--n-tx", type=str)
        p.add_argument("--qam", type=str, help="constellation order: 4, 16 or 64")
        p.add_argument("--snr", type=str, help="SNR grid in dB, lo:step:hi or a,b,c")
        p.add_argument("--k-batch", type=str, help="problems per scheduler batch")
        p.add_argument("--budgets", type=str, help="budget ratios n, e.g. 1,2,5,10")
        p.add_argument("--trials", type=str, help="batches per SNR point")
        p.add_argument("--seed", type=str)
        p.add_argument("--detectors", type=str, help="subset of zf,ml,sd_full,budgeted")
        p.add_argument("--zf-cost", type=str, help="budget units per ZF decode (default 2*M^2)")
        p.add_argument("--node-cost", type=str, help="budget units per SD node (default 1)")
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("sweep", help="run a BER sweep and write a report")
    sim_flags(p)
    p.add_argument("-o", "--output", help="output file (default stdout)")
    p.add_argument("--format", choices=("csv", "json-lines"), default="csv")
    p.set_defaults(func=run_sweep)

    p = sub.add_parser("verify", help="oracle-equivalence and invariant suites")
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=run_verify)

    p = sub.add_parser("slope", help="fit diversity slopes from a report")
    p.add_argument("report", nargs="?", help="report file; omit to run the sweep inline")
    p.add_argument("--detector", action="append", help="restrict to this detector (repeatable)")
    p.add_argument("--lo", type=float, help="low end of the SNR window, dB")
    p.add_argument("--hi", type=float, help="high end of the SNR window, dB")
    sim_flags(p)
    p.set_defaults(func=run_slope)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SearchSpaceTooLarge as exc:
        print(f"search space too large: {exc}", file=sys.stderr)
        return EXIT_SEARCH_SPACE
    except InsufficientData as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT


if __name__ == "__main__":
    sys.exit(main())
