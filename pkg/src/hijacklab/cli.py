"""Command-line entry point: ``hijacklab <command> [flags]``.

Exit status reports whether the scenario ran, never whether the attack
succeeded; bad flags exit with 64 (EX_USAGE).
"""

from __future__ import annotations

import argparse
import itertools
import json
import random
import sys
from pathlib import Path

from . import crypto
from .attacker import DEFAULT_COMMAND, run_hijack
from .experiments import SWEEP_COLUMNS, run_handshake, window_sweep
from .protocol import ProtocolError

EX_USAGE = 64
EX_DATAERR = 65
EX_IOERR = 74


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def _inject_at(text: str) -> int | None:
    if text == "random":
        return None
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected an integer or 'random'")


def _collapse(lines: list[str]) -> list[str]:
    out: list[str] = []
    for line, group in itertools.groupby(lines):
        n = len(list(group))
        out.append(line if n == 1 else f"{line}  (x{n})")
    return out


def cmd_demo_hijack(args) -> int:
    transcript = args.transcript or f"hijack-{args.mode}-{args.seed}.jsonl"
    report = run_hijack(args.mode, args.command.encode(), args.seed, window=args.window,
                        honest_packets=args.honest, rst_first=args.rst_first,
                        transcript=transcript)
    print(f"== session hijack against the {args.mode} handshake (seed {args.seed}) ==")
    print("-- server --")
    for line in _collapse(report.server_log):
        print(line)
    print("-- report --")
    print(f"forged command accepted by server : {report.server_accepted_forgery}")
    print(f"client knocked offline by RST     : {report.client_reset}")
    if report.detected_at_checkpoint is None:
        print("detected at checkpoint            : no")
    else:
        print(f"detected at checkpoint            : window {report.detected_at_checkpoint}")
    print(f"forged payloads seen before alarm : {report.forged_accepted_before_detection}")
    print(f"transcript                        : {transcript}")
    if args.json:
        Path(args.json).write_text(report.to_json() + "\n")
    return 0


def cmd_demo_handshake(args) -> int:
    given = [args.p, args.g, args.xc, args.xs]
    if any(v is not None for v in given):
        if any(v is None for v in given):
            raise UsageError("--p, --g, --xc and --xs must be given together")
        if not crypto.is_probable_prime(args.p):
            print(f"error: --p {args.p} is not prime", file=sys.stderr)
            return EX_DATAERR
        result = run_handshake(p=args.p, g=args.g, xc=args.xc, xs=args.xs, seed=args.seed,
                               rsa_bits=args.rsa_bits)
    else:
        if args.bits is None:
            raise UsageError("give either --p/--g/--xc/--xs or --bits")
        result = run_handshake(bits=args.bits, seed=args.seed, rsa_bits=args.rsa_bits)
    print("\n".join(result.lines()))
    print(f"YC={result.client_public} YS={result.server_public} "
          f"K={result.client_key} (client) K={result.server_key} (server)")
    return 0


def cmd_window_sweep(args) -> int:
    if any(w < 1 for w in args.windows):
        print("error: window values must be >= 1", file=sys.stderr)
        return EX_DATAERR
    rows = window_sweep(args.windows, args.packets, args.inject_at, args.trials, args.seed,
                        workers=args.workers, timing=not args.no_timing)
    lines = [",".join(SWEEP_COLUMNS)] + [r.as_csv() for r in rows]
    print("\n".join(lines))
    if args.csv:
        Path(args.csv).write_text("\n".join(lines) + "\n")
    if args.json:
        payload = [{c: getattr(r, c) for c in SWEEP_COLUMNS} for r in rows]
        Path(args.json).write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def cmd_keygen(args) -> int:
    pair = crypto.rsa_keygen(args.bits, args.e, random.Random(args.seed))
    pub, key = crypto.write_key_files(pair, args.out)
    print(f"wrote {pub} and {key} ({pair.public.n.bit_length()}-bit modulus)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hijacklab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command_name", required=True, parser_class=_Parser)

    p = sub.add_parser("demo-hijack", help="sniff, inject and RST against one protocol mode")
    p.add_argument("--mode", choices=["plain", "secured"], default="plain")
    p.add_argument("--command", default=DEFAULT_COMMAND.decode())
    p.add_argument("--window", type=int, default=100)
    p.add_argument("--honest", type=int, default=3, help="honest segments before the attack")
    p.add_argument("--rst-first", action="store_true", help="knock the client off before injecting")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json")
    p.add_argument("--transcript")
    p.set_defaults(func=cmd_demo_hijack)

    p = sub.add_parser("demo-handshake", help="run only the secured three-way handshake")
    p.add_argument("--p", type=int)
    p.add_argument("--g", type=int)
    p.add_argument("--xc", type=int)
    p.add_argument("--xs", type=int)
    p.add_argument("--bits", type=int)
    p.add_argument("--rsa-bits", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_demo_handshake)

    p = sub.add_parser("window-sweep", help="HMAC overhead vs attacker exposure per window value")
    p.add_argument("--windows", type=_int_list, default=[1, 10, 100, 1000])
    p.add_argument("--packets", type=int, default=10_000)
    p.add_argument("--inject-at", type=_inject_at, default=None, metavar="K|random")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-timing", action="store_true", help="write elapsed_ms as 0 for reproducible output")
    p.add_argument("--csv")
    p.add_argument("--json")
    p.set_defaults(func=cmd_window_sweep)

    p = sub.add_parser("keygen", help="write a textbook RSA key pair")
    p.add_argument("--bits", type=int, default=512)
    p.add_argument("--e", type=int, default=65537)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_keygen)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "bits", None) is not None and args.command_name == "keygen" and args.bits < 8:
        parser.error("--bits must be >= 8")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (crypto.CryptoError, ProtocolError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_DATAERR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_IOERR


if __name__ == "__main__":
    sys.exit(main())
