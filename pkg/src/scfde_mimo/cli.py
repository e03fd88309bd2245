"""Command-line entry point ``sim``.

Exit codes: 0 success, 1 invalid spec or arguments, 2 failure while running.

``SIM_WORKERS`` and ``SIM_OUT_DIR`` supply defaults for ``--workers`` and
``--out``; explicit flags win.
"""
import argparse
import logging
import os
import sys
from pathlib import Path

from .experiments import SpecError, bundled_spec_path, bundled_specs, load_spec, resolve_output, run_experiment

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _spec_path(arg):
    """A file path, or the name of a bundled spec."""
    p = Path(arg)
    if p.is_file() or p.suffix == ".json" or os.sep in arg:
        return p
    try:
        return bundled_spec_path(arg)
    except FileNotFoundError:
        return p


def _env_int(name):
    raw = os.environ.get(name)
    if raw in (None, ""):
        return None
    try:
        value = int(raw)
    except ValueError:
        raise SpecError(f"{name} must be an integer, got {raw!r}", "environment") from None
    if value < 1:
        raise SpecError(f"{name} must be at least 1", "environment")
    return value


def build_parser():
    parser = _Parser(prog="sim", description="SC/FDE MU-MIMO uplink link-level simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment spec and write CSV results")
    run.add_argument("spec", help="spec file, or the name of a bundled spec")
    run.add_argument("--seed", type=int, help="override the spec's seed")
    run.add_argument("--workers", type=int, help="worker processes (env SIM_WORKERS, default 1)")
    run.add_argument("--out", help="output parent directory (env SIM_OUT_DIR)")

    sub.add_parser("list-specs", help="list bundled experiment specs")

    val = sub.add_parser("validate", help="check a spec without running it")
    val.add_argument("spec", help="spec file, or the name of a bundled spec")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "list-specs":
        for name, desc in bundled_specs():
            print(f"{name:8s} {desc}")
        return EXIT_OK

    try:
        spec = load_spec(_spec_path(args.spec))
        if args.command == "validate":
            print(f"{spec.name}: ok ({len(spec.detectors)} detector(s), {len(spec.values)} sweep point(s), "
                  f"config {spec.config_hash()[:12]})")
            return EXIT_OK
        workers = args.workers if args.workers is not None else (_env_int("SIM_WORKERS") or 1)
        if workers < 1:
            raise SpecError("--workers must be at least 1", "arguments")
        if args.seed is not None and args.seed < 0:
            raise SpecError("--seed must be non-negative", "arguments")
        out = args.out if args.out is not None else (os.environ.get("SIM_OUT_DIR") or None)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    try:
        manifest = run_experiment(spec, seed=args.seed, workers=workers, out_dir=out)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # any failure past validation is a runtime error
        logging.getLogger(__name__).debug("run failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    target = resolve_output(spec.with_seed(manifest["seed"]), out)
    print(f"{spec.name}: wrote {len(manifest['files'])} file(s) to {target}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
