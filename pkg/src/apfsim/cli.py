"""Command-line entry point: ``apfsim simulate|emd|compare``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import config as config_io
from .control import StrategyKind
from .emd import EmdConfig, decompose
from .metrics import COMPARE_FIELDS, compare_report, evaluate, format_table
from .plant import TRACE_COLUMNS, ConfigInvalid, ScenarioConfig, SimulationTrace, simulate

log = logging.getLogger("apfsim")

METRIC_COLUMNS = ("time", "p_source", "q_source", "pf", "neutral_rms")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def write_trace_csv(trace: SimulationTrace, path: Path) -> None:
    np.savetxt(path, trace.data, delimiter=",", header=",".join(TRACE_COLUMNS),
               comments="", fmt="%.17g")


def write_metrics_csv(trace: SimulationTrace, path: Path):
    rep = evaluate(trace)
    data = np.column_stack([rep.time, rep.p, rep.q, rep.pf, rep.neutral_rms])
    np.savetxt(path, data, delimiter=",", header=",".join(METRIC_COLUMNS),
               comments="", fmt="%.17g")
    return rep


def write_report_csv(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(COMPARE_FIELDS))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] if isinstance(row[k], str) else repr(row[k])
                             for k in COMPARE_FIELDS})


def write_plots(traces: list[SimulationTrace], out_dir: Path) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    reports = [evaluate(tr) for tr in traces]
    for tr, rep in zip(traces, reports):
        name = tr.config.strategy.value
        fig, axes = plt.subplots(3, 1, figsize=(8, 8), sharex=True)
        for k, ph in enumerate("RST"):
            axes[0].plot(tr.time, tr[f"is_{ph}"], lw=0.8, label=f"line {k + 1}")
        axes[0].set_ylabel("source current [A]")
        axes[0].legend(loc="upper right", fontsize=8)
        axes[1].plot(rep.time, rep.p, label="P [W]")
        axes[1].plot(rep.time, rep.q, label="Q [VA]")
        axes[1].legend(loc="upper right", fontsize=8)
        axes[2].plot(rep.time, rep.pf)
        axes[2].set_ylabel("PF")
        axes[2].set_xlabel("time [s]")
        fig.tight_layout()
        path = out_dir / f"{name}.svg"
        fig.savefig(path, format="svg")
        plt.close(fig)
        paths.append(path)
    return paths


def _load_config(args) -> ScenarioConfig:
    cfg = config_io.load(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _summary_text(trace: SimulationTrace, summary: dict) -> str:
    lines = [f"{k}: {v}" for k, v in summary.items()]
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    if args.dump_config:
        sys.stdout.write(config_io.dumps(cfg) + "\n")
        return EXIT_OK
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = simulate(cfg)
    name = cfg.strategy.value
    write_trace_csv(trace, out / f"trace_{name}.csv")
    rep = write_metrics_csv(trace, out / f"metrics_{name}.csv")
    (out / f"summary_{name}.txt").write_text(_summary_text(trace, rep.summary))
    if args.plots:
        write_plots([trace], out)
    log.info("wrote %s", out)
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    if args.dump_config:
        sys.stdout.write(config_io.dumps(cfg) + "\n")
        return EXIT_OK
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgs = [dataclasses.replace(cfg, strategy=k) for k in StrategyKind]
    with ThreadPoolExecutor(max_workers=2) as pool:
        traces = list(pool.map(simulate, cfgs))
    for tr in traces:
        name = tr.config.strategy.value
        write_trace_csv(tr, out / f"trace_{name}.csv")
        write_metrics_csv(tr, out / f"metrics_{name}.csv")
    rows = compare_report(*traces)
    write_report_csv(rows, out / "compare.csv")
    table = format_table(rows)
    (out / "compare.txt").write_text(table + "\n")
    sys.stdout.write(table + "\n")
    if args.plots:
        write_plots(traces, out)
    return EXIT_OK


def read_signal_csv(path) -> np.ndarray:
    values = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 1:
                raise ValueError(f"line {lineno}: expected one column, got {len(row)}")
            try:
                values.append(float(row[0]))
            except ValueError:
                if lineno == 1 and not values:
                    continue  # header
                raise ValueError(f"line {lineno}: not a number: {row[0]!r}") from None
    if not values:
        raise ValueError("line 1: no samples")
    return np.asarray(values)


def cmd_emd(args) -> int:
    try:
        x = read_signal_csv(args.input)
    except (OSError, ValueError) as exc:
        log.error("%s: %s", args.input, exc)
        return EXIT_CONFIG
    if x.size < 4:
        log.error("%s: need at least 4 samples", args.input)
        return EXIT_CONFIG
    cfg = EmdConfig(fundamental=args.fundamental)
    imfs = decompose(x, cfg, args.sample_rate)
    cols = [f"IMF{k + 1}" for k in range(len(imfs))] + ["residue"]
    data = np.column_stack(imfs.imfs + [imfs.residue])
    np.savetxt(args.output, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apfsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "run one strategy"), ("compare", "run both strategies")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="scenario JSON (default scenario if omitted)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--plots", action="store_true", help="write SVG plots")
        p.add_argument("--dump-config", action="store_true",
                       help="print the resolved scenario JSON and exit")
        p.add_argument("--seed", type=int, default=None)
    p = sub.add_parser("emd", help="decompose a single-column CSV signal")
    p.add_argument("--input", required=True)
    p.add_argument("--sample-rate", type=float, required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--fundamental", type=float, default=50.0,
                   help="sets the mirror extension to one period of this frequency")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    handler = {"simulate": cmd_simulate, "compare": cmd_compare, "emd": cmd_emd}[args.command]
    try:
        return handler(args)
    except ConfigInvalid as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (OSError, FileNotFoundError) as exc:
        if args.command != "emd" and getattr(args, "config", None) and not Path(args.config).exists():
            log.error("config error: %s", exc)
            return EXIT_CONFIG
        log.error("%s", exc)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        log.exception("runtime error: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
