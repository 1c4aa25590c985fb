"""``distopt`` command-line entry point.

Exit codes: 0 success, 1 failed acceptance criteria or a dropped peer
connection, 2 invalid input or usage, 3 numerical fault. Set ``DISTOPT_LOG`` to ``error``, ``info`` or
``debug`` for log output on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import List, Optional, Sequence

import numpy as np

from .core import DistOptError, OracleError, SimulationFault
from .harness.distributed import DISTRIBUTED_ARCHITECTURES, ConnectionLost, run_coordinator, run_subsystem
from .harness.metrics import compute_metrics
from .harness.simulation import ARCHITECTURES, run_simulation
from .harness.tracecsv import read_trace_csv, write_trace_csv
from .scenarios import load_scenario, ramp_windows

log = logging.getLogger("distopt")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2
EXIT_FAULT = 3

_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage already; keep the message to one line
    def error(self, message):
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _setup_logging() -> None:
    name = os.environ.get("DISTOPT_LOG", "error").strip().lower()
    level = _LEVELS.get(name)
    logging.basicConfig(level=level or logging.ERROR, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if level is None:
        log.warning("DISTOPT_LOG=%r not one of error, info, debug; using error", name)


def _plain(x):
    """JSON-ready copy: numpy values unwrapped, non-finite floats as null."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


def _emit(obj) -> None:
    json.dump(_plain(obj), sys.stdout, indent=2, allow_nan=False)
    sys.stdout.write("\n")


def _events(s) -> List[float]:
    """End times of the scenario's disturbance ramps and supply steps."""
    return [end for end, _ in ramp_windows(s)]


def cmd_simulate(args) -> int:
    s = load_scenario(args.scenario)
    trace = run_simulation(s, args.arch, seed=args.seed, backoff=args.backoff,
                           period=args.period, gradient_mode=args.gradients)
    write_trace_csv(trace, args.out)
    naive = trace if args.arch == "naive" else run_simulation(s, "naive", seed=args.seed)
    metrics = compute_metrics(trace, naive_trace=naive, events=_events(s))
    _emit({"scenario": s.name, "arch": args.arch, "out": str(args.out), "samples": len(trace),
           "meta": trace.meta, "metrics": metrics.to_dict()})
    return EXIT_OK


def cmd_compare(args) -> int:
    baseline = read_trace_csv(args.baseline)
    rows = {}
    for path in args.traces:
        tr = read_trace_csv(path)
        rows[str(path)] = compute_metrics(tr, naive_trace=baseline).to_dict()
    order = sorted(rows, key=lambda k: rows[k]["cumulative_pdiff"], reverse=True)
    _emit({"baseline": str(args.baseline), "traces": rows, "pdiff_ordering": order})
    return EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import run_all

    def report(r):
        print(r.line(), flush=True)

    results = run_all(args.criteria or None, report=report)
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} criteria passed")
    return EXIT_OK if n_ok == len(results) else EXIT_FAILED


def cmd_coordinator(args) -> int:
    s = load_scenario(args.scenario)

    def on_listen(port):
        log.info("coordinator listening on %s:%d", args.host, port)
        print(json.dumps({"listening": port}), file=sys.stderr, flush=True)

    res = run_coordinator(s, args.arch, args.host, args.port, on_listen, args.timeout, args.period)
    last = res.lam[-1] if res.lam else res.alloc[-1]
    _emit({"arch": args.arch, "ticks": len(res.ticks), "dropped": res.dropped, "final": last})
    return EXIT_OK


def cmd_subsystem(args) -> int:
    s = load_scenario(args.scenario)
    res = run_subsystem(s, args.arch, args.index, args.host, args.port, args.timeout, args.period)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            n = len(res.final_u)
            fh.write(",".join(["time"] + [f"u[{j}]" for j in range(n)]) + "\n")
            for t, u in zip(res.times, res.u):
                fh.write(",".join("%.9g" % v for v in (t, *u)) + "\n")
    _emit({"arch": args.arch, "subsystem": args.index, "samples": len(res.times),
           "final_u": res.final_u, "signal": res.signal})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="distopt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run one architecture on a scenario")
    sim.add_argument("--scenario", required=True, help="scenario file or bundled name")
    sim.add_argument("--arch", required=True, choices=ARCHITECTURES)
    sim.add_argument("--out", required=True, help="CSV trace to write")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--backoff", type=float, default=0.0,
                     help="fractional tightening of the shared supply seen by the controllers")
    sim.add_argument("--period", type=int, help="coordinator period in local samples")
    sim.add_argument("--gradients", choices=("analytic", "fd"), default="analytic")
    sim.set_defaults(func=cmd_simulate)

    cmp_ = sub.add_parser("compare", help="metrics of traces against a baseline trace")
    cmp_.add_argument("--traces", nargs="+", required=True)
    cmp_.add_argument("--baseline", required=True)
    cmp_.set_defaults(func=cmd_compare)

    ver = sub.add_parser("verify", help="run the acceptance suite")
    ver.add_argument("--criteria", type=int, nargs="*", choices=range(1, 13), metavar="N")
    ver.set_defaults(func=cmd_verify)

    for name, func in (("coordinator", cmd_coordinator), ("subsystem", cmd_subsystem)):
        q = sub.add_parser(name, help=f"distributed {name} process")
        q.add_argument("--scenario", required=True)
        q.add_argument("--arch", required=True, choices=DISTRIBUTED_ARCHITECTURES)
        q.add_argument("--host", default="127.0.0.1")
        q.add_argument("--port", type=int, required=True)
        q.add_argument("--timeout", type=float, default=60.0)
        q.add_argument("--period", type=int)
        if name == "subsystem":
            q.add_argument("--index", type=int, required=True)
            q.add_argument("--out", help="CSV of this subsystem's inputs")
        q.set_defaults(func=func)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SimulationFault, OracleError, FloatingPointError) as exc:
        print(f"distopt: numerical fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except ConnectionLost as exc:
        print(f"distopt: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (DistOptError, OSError) as exc:
        print(f"distopt: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
