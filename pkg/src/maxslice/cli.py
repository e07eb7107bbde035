"""Command line entry point: ``maxslice run|suite|list``.

Exit codes: 0 when every scenario assertion passes, 1 when some assertion
fails, 2 on a hard error (unreadable or malformed scenario, bad flags).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

from .errors import MaxsliceError, ScenarioError
from .scenario import load_scenario, run_scenario, table_csv

logger = logging.getLogger("maxslice")

BUNDLED = "bundled"


def bundled_dir():
    return Path(str(resources.files("maxslice") / "scenarios"))


def _resolve_file(name):
    path = Path(name)
    if path.exists():
        return path
    candidate = bundled_dir() / f"{name}.toml"
    if candidate.exists():
        return candidate
    raise FileNotFoundError(f"no scenario file or bundled scenario named {name!r}")


def _resolve_dir(name):
    if name == BUNDLED:
        return bundled_dir()
    path = Path(name)
    if not path.is_dir():
        raise FileNotFoundError(f"{name!r} is not a directory")
    return path


def parse_grid(text):
    try:
        sizes = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid override must look like N or NxM, got {text!r}") from None
    if not 1 <= len(sizes) <= 2 or min(sizes) < 8:
        raise argparse.ArgumentTypeError("grid override needs 1 or 2 sizes, each at least 8")
    return sizes


def _fit_grid(sizes, dim):
    if sizes is None:
        return None
    if len(sizes) == dim:
        return sizes
    if len(sizes) == 1:
        return sizes * dim
    raise ScenarioError(f"grid override {'x'.join(map(str, sizes))} does not match fiber dimension {dim}")


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def execute(path, out_dir, seed=None, grid=None):
    """Run one scenario file and write ``report.json`` and ``table.csv``."""
    scen = load_scenario(path)
    from .scenario import build_grid

    sizes = _fit_grid(grid, build_grid(scen).dim)
    report = run_scenario(scen, seed=seed, grid_override=sizes)
    target = Path(out_dir) / scen.name
    atomic_write(target / "report.json", report.to_json() + "\n")
    atomic_write(target / "table.csv", table_csv(report.table))
    return report


def _print_report(report, quiet):
    if quiet:
        return
    verdict = "PASS" if report.passed else "FAIL"
    print(f"{verdict} {report.scenario} ({len(report.checks)} checks, {report.wall_time:.1f}s)")
    for c in report.failures:
        print(f"  task {c.task} {c.name}: expected {c.expected!r}, got {c.actual!r}")


def thread_count():
    raw = os.environ.get("MAXSLICE_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning("ignoring non-integer MAXSLICE_THREADS=%r", raw)
    return min(4, os.cpu_count() or 1)


def cmd_run(args):
    report = execute(_resolve_file(args.file), args.out, args.seed, args.grid_override)
    _print_report(report, args.quiet)
    return 0 if report.passed else 1


def cmd_suite(args):
    directory = _resolve_dir(args.directory)
    files = sorted(directory.glob("*.toml"))
    reports = {}
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        futures = {f: pool.submit(execute, f, args.out, args.seed, args.grid_override) for f in files}
        try:
            for f in files:
                reports[f] = futures[f].result()
        except BaseException:
            for fut in futures.values():
                fut.cancel()
            raise
    lines = ["scenario,passed,checks,failures,wall_time"]
    for f in files:
        r = reports[f]
        _print_report(r, args.quiet)
        lines.append(f"{r.scenario},{int(r.passed)},{len(r.checks)},{len(r.failures)},{r.wall_time:.3f}")
    atomic_write(Path(args.out) / "summary.csv", "\n".join(lines) + "\n")
    failed = [r.scenario for r in reports.values() if not r.passed]
    if not args.quiet:
        print(f"{len(files) - len(failed)}/{len(files)} scenarios passed")
    return 0 if not failed else 1


def cmd_list(args):
    directory = _resolve_dir(args.directory)
    for f in sorted(directory.glob("*.toml")):
        try:
            scen = load_scenario(f)
            print(f"{scen.name:28s} {scen.description}")
        except ScenarioError as exc:
            print(f"{f.stem:28s} <invalid: {exc}>")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="maxslice", description="Maximal hypersurface experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", default="maxslice-out", help="output directory (default: %(default)s)")
        sp.add_argument("--seed", type=int, default=None, help="base seed overriding the scenario seed")
        sp.add_argument("--grid-override", type=parse_grid, default=None, metavar="NxM",
                        help="replace the fiber grid sizes")
        sp.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")

    r = sub.add_parser("run", help="run one scenario file (or a bundled scenario by name)")
    r.add_argument("file")
    common(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("suite", help="run every *.toml scenario in a directory ('bundled' for the built-in suite)")
    s.add_argument("directory", nargs="?", default=BUNDLED)
    common(s)
    s.set_defaults(func=cmd_suite)

    ls = sub.add_parser("list", help="list scenarios in a directory (default: bundled)")
    ls.add_argument("directory", nargs="?", default=BUNDLED)
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", None) is not None and args.seed < 0:
        parser.error("--seed must be non-negative")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, MaxsliceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
