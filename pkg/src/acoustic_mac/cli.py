"""Command line front end: run, sweep, size-cluster, validate."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, load_scenario, load_sweep
from .metrics import csv_text, plot_data_text
from .runner import run, sweep
from .sensing import PerformanceRequirement, fused_false_alarm, or_fusion, sizing_report, within_false_alarm

EXIT_OK = 0
EXIT_USAGE = 2  # argparse's own code
EXIT_CONFIG = 3
EXIT_RUNTIME = 4

log = logging.getLogger("acoustic_mac")


def _probabilities(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of probabilities: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty probability list")
    return vals


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_run(args) -> int:
    cfg = load_scenario(args.scenario)
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    for w in cfg.warnings:
        log.warning(w)
    res = run(cfg, trace=args.trace or None, queue_trace=args.queue_trace or None)
    text = csv_text([res.summary])
    if args.out is None:
        sys.stdout.write(text)
    else:
        out = Path(args.out)
        _write(out / "run.csv", text)
        _write(out / "delay.dat", plot_data_text([res.summary], "avg_delay_ms"))
        _write(out / "energy.dat", plot_data_text([res.summary], "avg_energy_uJ"))
        if res.trace is not None:
            _write(out / "trace.txt", "".join(line + "\n" for line in res.trace))
        if res.queue_trace is not None:
            lines = [f"{i} {' '.join(map(str, order))} {'-' if w is None else w}" for i, order, w in res.queue_trace]
            _write(out / "queue_trace.txt", "".join(line + "\n" for line in lines))
    s = res.summary
    log.info("%s: %d delivered, %d pending, %d collisions", s.scheme, s.packet_count, s.pending, s.collisions)
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = load_sweep(args.spec)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.jobs is not None:
        spec = replace(spec, jobs=args.jobs)
    result = sweep(spec)
    out = Path(args.out)
    _write(out / "sweep.csv", csv_text(result.summaries))
    _write(out / "delay.dat", plot_data_text(result.summaries, "avg_delay_ms"))
    _write(out / "energy.dat", plot_data_text(result.summaries, "avg_energy_uJ"))
    pending = sum(s.pending for s in result.summaries if s.pending)
    if pending:
        log.warning("%d packets were still pending at the horizon (excluded from averages)", pending)
    return EXIT_OK


def cmd_size_cluster(args) -> int:
    qd_min = 0.5 if args.qd_min is None else args.qd_min
    try:
        req = PerformanceRequirement(qd_min, args.qf_max, args.pf)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from None
    rep = sizing_report(req)

    def verdict(ok: bool) -> str:
        return "satisfies" if ok else "violates"

    print(
        f"closed-form: {rep['closed_form_size']} (Q_f={rep['closed_form_qf']:.4f}, {verdict(rep['closed_form_satisfies_qf'])}); "
        f"search: {rep['search_size']} (Q_f={rep['search_qf']:.4f}, {verdict(rep['search_satisfies_qf'])})"
    )
    if args.pd is not None:
        if any(not 0.0 <= p <= 1.0 for p in args.pd):
            raise ConfigError(["--pd entries must lie in [0, 1]"])
        qd = or_fusion(args.pd)
        qf = fused_false_alarm(args.pf, len(args.pd))
        print(
            f"{len(args.pd)} members: Q_d={qd:.4f} ({verdict(qd >= qd_min)} Q_d>={qd_min:g}); "
            f"Q_f={qf:.4f} ({verdict(within_false_alarm(args.pf, len(args.pd), args.qf_max))})"
        )
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_scenario(args.scenario)
    print(f"ok: scheme={cfg.scheme} nodes={cfg.mix.total_nodes} utilization={cfg.utilization:.4f}")
    for w in cfg.warnings:
        print(f"warning: {w}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="acoustic-mac", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario file")
    r.add_argument("--scenario", required=True)
    r.add_argument("--out", help="output directory (default: CSV row on stdout)")
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.add_argument("--trace", action="store_true", help="write the event trace")
    r.add_argument("--queue-trace", action="store_true", help="write virtual-queue evolution (proposed only)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run every (scheme, N, ratio) cell of a sweep file")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int, help="worker processes")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("size-cluster", help="minimum cluster size for a false-alarm budget")
    c.add_argument("--qf-max", type=float, required=True, help="global false-alarm limit")
    c.add_argument("--pf", type=float, required=True, help="per-node false-alarm probability")
    c.add_argument("--pd", type=_probabilities, help="per-member detection probabilities, comma separated")
    c.add_argument("--qd-min", type=float, help="global detection requirement (checked, not used for sizing)")
    c.set_defaults(func=cmd_size_cluster)

    v = sub.add_parser("validate", help="check a scenario file and report every problem")
    v.add_argument("--scenario", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
