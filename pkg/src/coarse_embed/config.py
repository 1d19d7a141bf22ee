"""Run configuration: dataclasses plus a small ``key = value`` document parser.

Documents have optional ``[fixture]``, ``[embedding]``, ``[checks]`` and ``[output]``
sections.  Keys outside any section are routed to their home section, so the
one-line form ``fixture=free(2,8); embed=hyp; f=power:0.5; p=2`` also works.
Every error names the line (and, in one-line form, the item) it came from.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

SECTIONS = ("fixture", "embedding", "checks", "output")
EMBED_KINDS = ("hyp", "tg", "relhyp")
CHECK_KINDS = ("delta", "function", "lemmas", "tg", "spqr", "stability")


class ConfigError(ValueError):
    pass


@dataclass
class FixtureConfig:
    fixture: str = "free(2,8)"
    build_radius: Optional[int] = None     # build a smaller ball than the nominal radius
    truncate: bool = False                  # derive build_radius from what the embedding reads
    safe_radius: Optional[int] = None
    pieces: str = "auto"                    # auto | single | path to a pieces file
    peripherals: Optional[Tuple[int, ...]] = None
    nbhd: int = 0                           # coset neighbourhood radius
    balls: str = "uncovered"                # all | uncovered | none
    ball_radius: Optional[int] = None
    K: int = 1
    psi: str = "auto"                       # auto | zero | depth | coset


@dataclass
class EmbeddingConfig:
    embed: Optional[str] = None
    f: str = "power:0.5"
    p: float = 2.0
    delta: Optional[float] = None
    scales: Optional[Tuple[int, ...]] = None
    shared_small: bool = False


@dataclass
class ChecksConfig:
    check: Tuple[str, ...] = ()
    samples: int = 200
    seed: int = 0
    max_n: Optional[int] = None
    trials: Optional[int] = None
    R: Tuple[int, ...] = (1, 2)


@dataclass
class OutputConfig:
    out: Optional[str] = None
    timing: bool = False
    dump_embedding: bool = True


@dataclass
class RunConfig:
    fixture: FixtureConfig = field(default_factory=FixtureConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    checks: ChecksConfig = field(default_factory=ChecksConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def updated(self, items: Dict[str, Any]) -> "RunConfig":
        """Copy with already-parsed ``key -> value`` overrides applied."""
        out = self
        for key, val in items.items():
            sec = KEY_SECTION[key]
            out = replace(out, **{sec: replace(getattr(out, sec), **{key: val})})
        return out


# ---------------------------------------------------------------------------
# value parsers


def _int(text: str) -> int:
    return int(text)


def _opt_int(text: str) -> Optional[int]:
    return None if text.lower() in ("", "none", "auto") else int(text)


def _opt_float(text: str) -> Optional[float]:
    return None if text.lower() in ("", "none", "auto") else float(text)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(t) for t in re.split(r"[,\s]+", text.strip()) if t)


def _opt_int_list(text: str) -> Optional[Tuple[int, ...]]:
    return None if text.lower() in ("", "none", "auto") else _int_list(text)


def _p(text: str) -> float:
    p = float(text)
    if not p > 1:
        raise ValueError("p > 1 required")
    return p


def _choice(options: Tuple[str, ...], optional: bool = False) -> Callable[[str], Optional[str]]:
    def parse(text: str):
        if optional and text.lower() in ("", "none"):
            return None
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


def _checks(text: str) -> Tuple[str, ...]:
    out = tuple(t for t in re.split(r"[,\s]+", text.strip()) if t)
    for t in out:
        if t not in CHECK_KINDS:
            raise ValueError(f"unknown check {t!r} (expected {', '.join(CHECK_KINDS)})")
    return out


def _positive(parse: Callable[[str], Any], what: str, minimum: int = 1) -> Callable[[str], Any]:
    def wrapped(text: str):
        val = parse(text)
        if val is not None and val < minimum:
            raise ValueError(f"{what} must be >= {minimum}")
        return val
    return wrapped


PARSERS: Dict[str, Callable[[str], Any]] = {
    "fixture": str, "build_radius": _positive(_opt_int, "build_radius", 0), "truncate": _bool,
    "safe_radius": _positive(_opt_int, "safe_radius", 0), "pieces": str,
    "peripherals": _opt_int_list, "nbhd": _positive(_int, "nbhd", 0),
    "balls": _choice(("all", "uncovered", "none")), "ball_radius": _positive(_opt_int, "ball_radius", 0),
    "K": _positive(_int, "K"), "psi": _choice(("auto", "zero", "depth", "coset")),
    "embed": _choice(EMBED_KINDS, optional=True), "f": str, "p": _p, "delta": _opt_float,
    "scales": _opt_int_list, "shared_small": _bool,
    "check": _checks, "samples": _positive(_int, "samples"), "seed": _int,
    "max_n": _positive(_opt_int, "max_n"), "trials": _positive(_opt_int, "trials"), "R": _int_list,
    "out": lambda t: None if t.lower() in ("", "none") else t, "timing": _bool, "dump_embedding": _bool,
}

KEY_SECTION: Dict[str, str] = {}
for _sec, _cls in (("fixture", FixtureConfig), ("embedding", EmbeddingConfig),
                   ("checks", ChecksConfig), ("output", OutputConfig)):
    for _f in fields(_cls):
        KEY_SECTION[_f.name] = _sec
ALIASES = {"group": "fixture", "checks": "check", "K_nbhd": "nbhd", "output_dir": "out"}


def parse_value(key: str, text: str) -> Any:
    key = ALIASES.get(key, key)
    if key not in PARSERS:
        raise ConfigError(f"unknown key {key!r}")
    try:
        return PARSERS[key](text.strip())
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}") from None


# ---------------------------------------------------------------------------
# documents


def _split_items(line: str) -> List[str]:
    """Split on ``;`` outside parentheses."""
    out, depth, cur = [], 0, []
    for ch in line:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == ";" and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    out.append("".join(cur))
    return [s for s in (t.strip() for t in out) if s]


def parse_items(text: str) -> Dict[str, Any]:
    """Parse a config document into ``key -> value`` (only keys that appear)."""
    section: Optional[str] = None
    seen: Dict[str, str] = {}
    values: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            m = re.fullmatch(r"\[\s*(\w+)\s*\]", line)
            if not m or m.group(1) not in SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section {line!r} (expected one of "
                                  f"{', '.join('[' + s + ']' for s in SECTIONS)})")
            section = m.group(1)
            continue
        items = _split_items(line)
        for pos, item in enumerate(items, 1):
            where = f"line {lineno}" + (f", item {pos}" if len(items) > 1 else "")
            key, sep, val = item.partition("=")
            key = ALIASES.get(key.strip(), key.strip())
            if not sep:
                raise ConfigError(f"{where}: expected 'key = value', got {item!r}")
            if key not in KEY_SECTION:
                raise ConfigError(f"{where}: unknown key {key!r}")
            if section is not None and KEY_SECTION[key] != section:
                raise ConfigError(f"{where}: key {key!r} belongs in [{KEY_SECTION[key]}], not [{section}]")
            if key in seen:
                raise ConfigError(f"{where}: duplicate key {key!r} (first set at {seen[key]})")
            try:
                values[key] = parse_value(key, val)
            except ConfigError as exc:
                raise ConfigError(f"{where}: {exc}") from None
            seen[key] = where
    return values


def parse_config(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    return (base or RunConfig()).updated(parse_items(text))


def merge(file_items: Dict[str, Any], flag_items: Dict[str, Any], config_priority: bool = False) -> RunConfig:
    """Flags override the file unless ``config_priority`` is set."""
    first, second = (flag_items, file_items) if config_priority else (file_items, flag_items)
    return RunConfig().updated({**first, **second})


def to_document(cfg: RunConfig) -> str:
    """Render back to the sectioned form (round-trips through :func:`parse_config`)."""
    lines = []
    for sec in SECTIONS:
        lines.append(f"[{sec}]")
        for f in fields(getattr(cfg, sec)):
            val = getattr(getattr(cfg, sec), f.name)
            if val is None:
                text = "none"
            elif isinstance(val, bool):
                text = "true" if val else "false"
            elif isinstance(val, tuple):
                text = ",".join(str(v) for v in val) if val else ""
                if not val and f.name != "check":
                    continue
            else:
                text = str(val)
            lines.append(f"{f.name} = {text}")
        lines.append("")
    return "\n".join(lines)
