"""Command-line driver.

Every subcommand accepts the config keys as flags (``--fixture``, ``--K``, ...) and an
optional ``--config`` document.  Flags override the document unless
``--config-priority`` is given.  Exit status: 0 when every requested check passes,
2 when some check fails, 1 on errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional

from .config import CHECK_KINDS, EMBED_KINDS, KEY_SECTION, ConfigError, merge, parse_items, parse_value
from .graph import save_graph
from .pipeline import build_fixture, round_floats, run_pipeline

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
FLAG_KEYS = [k for k in KEY_SECTION if k not in ("check", "embed")]


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the error status, not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="config document (key = value, optional sections)")
    common.add_argument("--config-priority", action="store_true",
                        help="let the config document win over flags")
    for key in FLAG_KEYS:
        if key == "seed":
            continue
        common.add_argument(_flag(key), dest=key, default=None, metavar="VALUE",
                            help=f"[{KEY_SECTION[key]}] {key}")
    common.add_argument("--seed", dest="seed", default=None, metavar="INT",
                        help="seed for sampled checks (default 0)")
    common.add_argument("--embed", dest="embed", default=None, choices=EMBED_KINDS,
                        help="embedding kind (a positional kind takes precedence)")

    parser = _Parser(prog="coarse-embed", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen", parents=[common], help="build a fixture and write it as a graph file")
    sub.add_parser("delta", parents=[common], help="hyperbolicity constants of a fixture")
    p = sub.add_parser("check", parents=[common], help="run one family of checks")
    p.add_argument("kind", choices=[k for k in CHECK_KINDS if k != "delta"])
    p = sub.add_parser("embed", parents=[common], help="evaluate an embedding on the safe ball")
    p.add_argument("kind", choices=EMBED_KINDS)
    p = sub.add_parser("distortion", parents=[common], help="embed and measure the distortion curve")
    p.add_argument("kind", nargs="?", default=None, choices=EMBED_KINDS)
    p = sub.add_parser("report", parents=[common], help="embedding, lemma checks, distortion and artifacts")
    p.add_argument("kind", nargs="?", default=None, choices=EMBED_KINDS)
    return parser


def _flag_items(args: argparse.Namespace) -> Dict[str, object]:
    out = {}
    for key in FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            try:
                out[key] = parse_value(key, val)
            except ConfigError as exc:
                raise ConfigError(f"{_flag(key)}: {exc}") from None
    return out


def _summary(result) -> dict:
    doc = result.document()
    out = {"fixture": doc["fixture"], "passed": doc["passed"], "lemma_results": doc["lemma_results"],
           "checks": doc["checks"]}
    if result.report is not None:
        rep = doc["report"]
        out.update({"lipschitz": rep["lipschitz"], "compression_estimate": rep["compression_estimate"],
                    "lower_fit": rep["lower_fit"]})
    if result.embedding is not None:
        out["embedding"] = doc["embedding"]
    return out


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_items = {}
        if args.config:
            try:
                file_items = parse_items(Path(args.config).read_text())
            except ConfigError as exc:
                raise ConfigError(f"{args.config}: {exc}") from None
        flags = _flag_items(args)
        cmd = args.command
        kind = getattr(args, "kind", None)
        if args.embed is not None:
            flags["embed"] = args.embed
        if cmd == "check":
            flags["check"] = (kind,)
        elif cmd == "delta":
            flags["check"] = ("delta",)
        elif cmd in ("embed", "distortion", "report") and kind is not None:
            flags["embed"] = kind
        cfg = merge(file_items, flags, args.config_priority)
        if cmd in ("embed", "distortion") and cfg.embedding.embed is None:
            raise ConfigError("no embedding selected (give a kind or set embed in the config)")

        if cmd == "gen":
            fixture = build_fixture(cfg)
            target = Path(cfg.output.out or "graph.txt")
            if target.is_dir() or not target.suffix:
                target.mkdir(parents=True, exist_ok=True)
                target = target / "graph.txt"
            save_graph(fixture.graph, target)
            print(json.dumps({"graph": str(target), **round_floats(fixture.to_dict())}, indent=2))
            return EXIT_OK

        if cmd == "check" and kind == "lemmas":
            if cfg.embedding.embed is None:
                cfg = cfg.updated({"embed": "hyp"})
            result = run_pipeline(cfg.updated({"check": ("lemmas",)}), evaluate=False)
        elif cmd in ("check", "delta"):
            result = run_pipeline(cfg.updated({"embed": None}), measure=False)
        elif cmd == "embed":
            result = run_pipeline(cfg, measure=False, default_lemmas=False)
        elif cmd == "distortion":
            result = run_pipeline(cfg, measure=True, default_lemmas=False)
        else:
            result = run_pipeline(cfg, measure=True, default_lemmas=True)
        print(json.dumps(_summary(result), indent=2))
        return EXIT_OK if result.passed else EXIT_FAIL
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
