"""Command-line entry point: ``chiral-cp <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 optimizer
did not converge.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import composite_library as lib
from .delta_system import Handedness, populations

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_NOT_CONVERGED = 0, 1, 2, 3
JOBS_ENV = "CHIRAL_CP_JOBS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config(path: str) -> Dict[str, str]:
    """Flat ``key = value`` file; keys are long flag names ('-' or '_' both work)."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def parse_range(text: str, name: str):
    """``min:max:steps`` or a single value."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            v = float(parts[0])
            return v, v, 1
        if len(parts) == 3:
            return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        pass
    raise UsageError(f"--{name} expects min:max:steps or a number, got {text!r}")


def _write(text: str, out: Optional[str], quiet: bool = False) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    if not quiet and not out:
        sys.stdout.write(text)


def _effective(args: argparse.Namespace) -> Dict[str, object]:
    skip = {"func", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


def _config_comment(args) -> str:
    return "".join(f"# {k}={v}\n" for k, v in _effective(args).items())


def _assembly(name: str) -> lib.ChiralAssembly:
    try:
        return lib.assemble(name)
    except KeyError:
        raise UsageError(f"unknown assembly {name!r}; available: {', '.join(lib.ASSEMBLY_NAMES)}")


# ---- subcommands ----------------------------------------------------------

def cmd_enumerate(args) -> int:
    from .sequences import PRINTED_TABLE, enumerate_resolving_sequences, table_rows

    rows = table_rows(enumerate_resolving_sequences())
    buf = io.StringIO()
    if args.format == "csv":
        buf.write("sequence,final_L,final_R,contrast\n")
        for label, fl, fr, c in rows:
            buf.write(f"{label},{fl},{fr},{c:.12g}\n")
    else:
        buf.write(f"{'sequence':<26} L  R\n")
        for label, fl, fr, _ in rows:
            buf.write(f"{label:<26} {fl}  {fr}\n")
        buf.write(f"{len(rows)} perfect-contrast sequences\n")
    _write(buf.getvalue(), args.out, args.quiet)
    found = {(r[0], r[1], r[2]) for r in rows}
    if len(rows) != 12 or found != set(PRINTED_TABLE):
        print(f"expected the 12 tabulated sequences, found {len(rows)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_simulate(args) -> int:
    asm = _assembly(args.assembly)
    hands = list(Handedness) if args.hand == "both" else [Handedness(args.hand)]
    buf = io.StringIO()
    buf.write(_config_comment(args))
    for h in hands:
        u = asm.loop_propagator(h, args.eps, args.delta)
        p = populations(u)
        buf.write(f"{h.value} " + " ".join(f"P{k + 1}={v:.12g}" for k, v in enumerate(p)) + "\n")
        if args.show_propagator:
            for row in u:
                buf.write("  " + "  ".join(f"{z.real:+.12f}{z.imag:+.12f}j" for z in row) + "\n")
    _write(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_scan(args) -> int:
    from .scans import ScanGrid, scan

    asm = _assembly(args.assembly)
    e = parse_range(args.eps, "eps")
    d = parse_range(args.delta, "delta")
    try:
        grid = ScanGrid(*e, *d)
    except ValueError as exc:
        raise UsageError(str(exc))
    result = scan(asm, grid)
    result.config.update({k: v for k, v in _effective(args).items()
                          if k not in ("eps", "delta", "assembly")})
    text = result.to_csv() if args.format == "csv" else result.to_matrix()
    _write(text, args.out)
    return EXIT_OK


def cmd_optimize(args) -> int:
    from . import cp_optimizer as opt

    try:
        template = opt.load_template(args.template)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc))
    if args.order not in (1, 2) or args.restarts < 1:
        raise UsageError("--order must be 1 or 2 and --restarts >= 1")
    result = opt.optimize(template, args.order, args.restarts, args.seed, args.jobs)
    doc = result.to_dict()
    doc["config"].update(_effective(args))
    _write(json.dumps(doc, indent=2) + "\n", args.out)
    cert = result.best.certificate
    print(f"cost={result.best.cost:.3e} converged={result.converged} "
          f"max first-order coefficient={cert.max_at_order(1):.2e}", file=sys.stderr)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_catalog(args) -> int:
    seqs = lib.catalog()
    asms = [lib.assemble(n) for n in lib.ASSEMBLY_NAMES]
    if args.format == "json":
        doc = {
            "sequences": [s.to_dict() for s in seqs],
            "assemblies": [
                {"name": a.name, "blocks": [
                    {"transition": b.transition.name, "sequence": b.sequence.name,
                     "phase_offset": b.phase_offset} for b in a.blocks],
                 "pulses": a.pulse_count, "total_area_pi": a.total_area_pi}
                for a in asms
            ],
        }
        text = json.dumps(doc, indent=2) + "\n"
    else:
        buf = io.StringIO()
        buf.write("kind,name,target,timing,order,n_pulses,areas_pi,phases_rad\n")
        for s in seqs:
            areas = " ".join(f"{a:.12g}" for a in s.areas_pi)
            phases = " ".join(f"{p:.12g}" for p in s.phases)
            order = "" if s.order is None else s.order
            buf.write(f"sequence,{s.name},{s.target},{s.timing},{order},{len(s)},{areas},{phases}\n")
        for a in asms:
            buf.write(f"assembly,{a.name},,,,{a.pulse_count},{a.total_area_pi:.12g},"
                      f"{a.describe()}\n")
        text = buf.getvalue()
    _write(text, args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .claims import CLAIMS, run_claims

    names = list(CLAIMS) if args.claims == "all" else [c.strip() for c in args.claims.split(",")]
    try:
        results = run_claims(names)
    except KeyError as exc:
        raise UsageError(exc.args[0])
    text = "".join(r.line() + "\n" for r in results)
    failed = sum(not r.passed for r in results)
    text += f"{len(results) - failed}/{len(results)} claims passed\n"
    _write(text, args.out)
    if args.out:
        sys.stdout.write(text)
    return EXIT_VERIFY if failed else EXIT_OK


# ---- parser ---------------------------------------------------------------

def _default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"{JOBS_ENV} must be an integer, got {raw!r}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key=value file supplying defaults for flags")
    common.add_argument("--out", help="write output here instead of stdout")

    p = _Parser(prog="chiral-cp", description="Composite-pulse chiral resolution toolkit")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("enumerate", parents=[common], help="tabulate perfect three-pulse sequences")
    s.add_argument("--format", choices=["table", "csv"], default="table")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_enumerate)

    s = sub.add_parser("simulate", parents=[common], help="populations at one error point")
    s.add_argument("--assembly", default="single")
    s.add_argument("--hand", choices=["L", "R", "both"], default="L")
    s.add_argument("--eps", type=float, default=0.0)
    s.add_argument("--delta", type=float, default=0.0)
    s.add_argument("--show-propagator", action="store_true")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("scan", parents=[common], help="populations and contrast on a grid")
    s.add_argument("--assembly", default="single")
    s.add_argument("--eps", default="-0.5:0.5:101", help="min:max:steps")
    s.add_argument("--delta", default="-1:1:101", help="min:max:steps or a single value")
    s.add_argument("--format", choices=["csv", "matrix"], default="csv")
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("optimize", parents=[common], help="search for a compensated sequence")
    s.add_argument("--template", default="eq15", help="eq14|eq15|eq16|eq17 or a JSON file")
    s.add_argument("--order", type=int, default=1)
    s.add_argument("--restarts", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=None, help=f"worker processes (default ${JOBS_ENV} or 1)")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("catalog", parents=[common], help="list built-in sequences and assemblies")
    s.add_argument("--format", choices=["csv", "json"], default="csv")
    s.set_defaults(func=cmd_catalog)

    s = sub.add_parser("verify", parents=[common], help="check the reproduced claims")
    s.add_argument("--claims", default="all", help="comma-separated claim names or 'all'")
    s.set_defaults(func=cmd_verify)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: List[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    values = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
    known = {a.dest: a for a in sub._actions}  # noqa: SLF001
    defaults = {}
    for key, raw in values.items():
        if key not in known or key in ("help", "config"):
            raise UsageError(f"config key {key!r} is not an option of {args.command}")
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = action.type(raw) if action.type else raw
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


_RANGE_FLAGS = ("--eps", "--delta")


def _glue_ranges(argv: List[str]) -> List[str]:
    # argparse reads "-0.5:0.5:101" as an option string; bind it to its flag
    out: List[str] = []
    i = 0
    while i < len(argv):
        if argv[i] in _RANGE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = _glue_ranges(list(sys.argv[1:] if argv is None else argv))
    try:
        try:
            args = _apply_config(parser, argv)
        except SystemExit as exc:
            return exc.code if isinstance(exc.code, int) else EXIT_USAGE
        if getattr(args, "jobs", 0) is None:
            args.jobs = _default_jobs()
        return args.func(args)
    except (UsageError, OSError) as exc:
        print(f"chiral-cp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
