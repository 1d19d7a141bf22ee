"""Fixture construction, check dispatch, embedding runs and artifact writing."""
from __future__ import annotations

import csv
import json
import math
import re
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .config import FixtureConfig, RunConfig
from .graph import MetricGraph, build_graph, cycle_graph, load_graph, path_graph
from .groups import GroupSpec, parse_group_spec
from .hyp_embed import check_trumpet_lemmas, default_scales, embed_hyperbolic, make_params
from .hyperbolicity import check_stability_suite, hyperbolicity, working_delta
from .lp import CompressionFunction, LpVector, check_function_class, verify_sum_lemmas
from .pieces import PieceMeta, PieceSystem, load_pieces, pieces_from_cosets, single_piece
from .relhyp import SEPARATION_CONSTANT, RelhypEmbedder, RelhypParams, check_nxi_bound, check_small_piece_lemmas, check_spqr
from .report import EmbeddingReport, build_report
from .tree_graded import (DecompositionCache, SplitMetric, check_bilipschitz, check_decomposition_uniqueness,
                          check_metric_axioms, embed_tree_graded, validate_tree_graded)

SCHEMA_VERSION = 1
SIG_DIGITS = 12

_SHORTHAND = {
    "free": lambda k: f"free({k})",
    "abelian": lambda k: f"abelian({k})",
    "cyclic": lambda m: f"cyclic({m})",
}


# ---------------------------------------------------------------------------
# fixtures


@dataclass
class Fixture:
    descriptor: str
    graph: MetricGraph
    nominal_radius: Optional[int]
    safe_radius: int

    @property
    def build_radius(self) -> int:
        return self.graph.radius

    def safe_ball(self) -> List[int]:
        return self.graph.safe_ball(self.safe_radius)

    def to_dict(self) -> dict:
        return {"descriptor": self.descriptor, "nominal_radius": self.nominal_radius,
                "build_radius": self.build_radius, "safe_radius": self.safe_radius,
                "vertices": self.graph.n, "safe_vertices": len(self.safe_ball())}


def parse_fixture(text: str) -> Tuple[str, object, Optional[int]]:
    """``(kind, payload, nominal radius)``: kind is ``path``, ``cycle``, ``file`` or ``group``."""
    text = text.strip()
    m = re.fullmatch(r"(\w+)\((.*)\)", text)
    if not m:
        raise ValueError(f"cannot parse fixture {text!r}")
    name, body = m.group(1), m.group(2).strip()
    if name in ("path", "cycle"):
        return name, int(body), None
    if name == "file":
        return "file", body, None
    if name in _SHORTHAND:
        parts = [t.strip() for t in body.split(",")]
        if len(parts) != 2:
            raise ValueError(f"{name}(k, R) expects two arguments")
        radius = int(parts[1])
        return "group", parse_group_spec(_SHORTHAND[name](int(parts[0])), radius), radius
    if name in ("zxz", "z2xz"):
        radius = int(body)
        expr = "free_product(free(1),free(1))" if name == "zxz" else "free_product(abelian(2),free(1))"
        return "group", parse_group_spec(expr, radius), radius
    if name == "ball":
        expr, _, radius = body.rpartition(",")
        radius = int(radius)
        return "group", parse_group_spec(expr, radius), radius
    raise ValueError(f"unknown fixture {name!r}")


def geodesics_stay_in_ball(spec: GroupSpec) -> bool:
    """True when every pair in a ball has a geodesic inside the ball of radius
    ``max(|u|, |v|)``.

    Holds for free and free abelian groups (a staircase path can always step toward
    the identity first) and for free products of such factors, whose geodesics
    pass through the common prefix of the normal forms.
    """
    if spec.family in ("free", "abelian"):
        return True
    if spec.family in ("free_product", "rh_model"):
        return all(geodesics_stay_in_ball(f) for f in spec.factors)
    return False


def required_build_radius(cfg: RunConfig, safe: int) -> int:
    """Smallest ball that every evaluated quantity reads, for safe radius ``safe``."""
    fx, emb = cfg.fixture, cfg.embedding
    reach = max(fx.nbhd, fx.ball_radius or 0)
    need = safe
    if emb.embed == "hyp" or "stability" in cfg.checks.check:
        scales = emb.scales or default_scales(emb.delta or 0.0, 2 * safe)
        need = max(need, safe + max(scales) // 4)
    if emb.embed in ("tg",) or "tg" in cfg.checks.check:
        need = max(need, safe + reach + 1)
    if emb.embed == "relhyp" or "spqr" in cfg.checks.check:
        need = max(need, safe + safe // 4 + reach + 1)
    return need


def build_fixture(cfg: RunConfig) -> Fixture:
    fx = cfg.fixture
    kind, payload, nominal = parse_fixture(fx.fixture)
    if kind == "path":
        g = path_graph(payload)
    elif kind == "cycle":
        g = cycle_graph(payload)
    elif kind == "file":
        g = load_graph(payload)
    else:
        g = None
    if g is not None:
        if fx.build_radius is not None or fx.truncate:
            raise ValueError("build_radius/truncate apply to group fixtures only")
        safe = g.radius if fx.safe_radius is None else fx.safe_radius
        return Fixture(fx.fixture, g, None, safe)
    spec: GroupSpec = payload
    safe = nominal // 2 if fx.safe_radius is None else fx.safe_radius
    if safe > nominal:
        raise ValueError("safe_radius exceeds the fixture radius")
    build = nominal
    if fx.build_radius is not None:
        build = fx.build_radius
    elif fx.truncate:
        build = min(nominal, required_build_radius(cfg, safe))
    if build < nominal:
        if not geodesics_stay_in_ball(spec):
            raise ValueError(f"truncated builds are not supported for {spec.describe()}")
        if build < safe:
            raise ValueError("build_radius must be at least the safe radius")
    g = build_graph(spec.with_radius(build))
    return Fixture(fx.fixture, g, nominal, safe)


def build_piece_system(fixture: Fixture, fx: FixtureConfig) -> PieceSystem:
    g = fixture.graph
    if fx.pieces == "single":
        return single_piece(g, fx.K, "depth" if fx.psi == "auto" else fx.psi)
    if fx.pieces == "auto":
        ps = pieces_from_cosets(g, fx.peripherals, radius=fx.nbhd, balls=fx.balls,
                                ball_radius=fx.ball_radius, K=fx.K)
    else:
        ball_radius = fx.ball_radius if fx.balls == "all" else None
        ps = load_pieces(g, fx.pieces, K=fx.K, ball_radius=ball_radius,
                         psi="depth" if fx.psi == "auto" else fx.psi)
    if fx.psi != "auto":
        for i, meta in enumerate(ps.meta):
            if fx.psi == "coset" and meta.factor is None:
                raise ValueError(f"piece {meta.label} has no coset coordinates")
            ps.meta[i] = PieceMeta(meta.kind, meta.label, fx.psi, meta.factor, meta.core, meta.scale, meta.radius)
    return ps


# ---------------------------------------------------------------------------
# embeddings


@dataclass
class EmbeddingRun:
    kind: str
    xs: List[int]
    vectors: List[LpVector]
    info: Dict[str, object] = field(default_factory=dict)


class Session:
    """Lazily built fixture, pieces, delta and embedders for one configuration."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.timings: Dict[str, float] = {}
        t = time.perf_counter()
        self.fixture = build_fixture(cfg)
        self.timings["build"] = time.perf_counter() - t
        self._ps: Optional[PieceSystem] = None
        self._delta: Optional[float] = None
        self._relhyp: Optional[RelhypEmbedder] = None

    @property
    def g(self) -> MetricGraph:
        return self.fixture.graph

    @property
    def f(self) -> CompressionFunction:
        return CompressionFunction.parse(self.cfg.embedding.f, self.cfg.embedding.p)

    @property
    def pieces(self) -> PieceSystem:
        if self._ps is None:
            self._ps = build_piece_system(self.fixture, self.cfg.fixture)
        return self._ps

    @property
    def delta(self) -> float:
        if self._delta is None:
            c = self.cfg
            self._delta = working_delta(self.g, c.embedding.delta, samples=c.checks.samples, seed=c.checks.seed)
        return self._delta

    def hyp_params(self):
        return make_params(self.g, self.delta, self.f, scales=self.cfg.embedding.scales,
                           safe_radius=self.fixture.safe_radius)

    def relhyp_embedder(self) -> RelhypEmbedder:
        if self._relhyp is None:
            e = self.cfg.embedding
            self._relhyp = RelhypEmbedder(self.g, self.pieces, RelhypParams(self.f, e.p, self.pieces.K, e.shared_small))
        return self._relhyp

    def embed(self, kind: str) -> EmbeddingRun:
        fx = self.fixture
        if fx.nominal_radius is not None:
            need = min(fx.nominal_radius, required_build_radius(self.cfg.updated({"embed": kind}), fx.safe_radius))
            if fx.graph.radius < need:
                raise ValueError(f"fixture built to radius {fx.graph.radius} but the {kind} embedding reads "
                                 f"radius {need}; set embed={kind} before building")
        xs = fx.safe_ball()
        t = time.perf_counter()
        if kind == "hyp":
            params = self.hyp_params()
            vectors = [embed_hyperbolic(self.g, x, params) for x in xs]
            info = {"delta": params.delta, "scales": list(params.scales)}
        elif kind == "tg":
            decomp = DecompositionCache(self.g, self.pieces)
            vectors = [embed_tree_graded(self.g, self.pieces, x, self.f, self.cfg.embedding.p, decomp) for x in xs]
            info = {"pieces": len(self.pieces)}
        elif kind == "relhyp":
            emb = self.relhyp_embedder()
            vectors = [emb.embed(x) for x in xs]
            info = {"pieces": len(self.pieces), "K": self.pieces.K, "shared_small": emb.params.shared_small}
        else:
            raise ValueError(f"unknown embedding {kind!r}")
        self.timings[f"embed_{kind}"] = time.perf_counter() - t
        info.update({"f": self.f.describe(), "p": self.cfg.embedding.p})
        return EmbeddingRun(kind, xs, vectors, info)


# ---------------------------------------------------------------------------
# checks


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: Dict[str, object]
    lemmas: Dict[str, bool] = field(default_factory=dict)


def _violation_summary(viol: Dict[str, list]) -> Dict[str, object]:
    return {k: {"count": len(v), "first": [list(map(_plain, w)) for w in v[:5]]} for k, v in viol.items()}


def _plain(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def check_delta(s: Session) -> CheckResult:
    rep = hyperbolicity(s.g, samples=s.cfg.checks.samples, seed=s.cfg.checks.seed)
    return CheckResult("delta", True, {**rep.to_dict(), "working_delta": s.delta})


def random_sum_instances(count: int, seed: int, max_size: int = 40, max_value: int = 10 ** 4) -> List[List[int]]:
    """Strictly increasing positive integer sequences of even length."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        size = 2 * int(rng.integers(1, max_size // 2 + 1))
        out.append(sorted(int(v) for v in rng.choice(np.arange(1, max_value + 1), size=size, replace=False)))
    return out


def check_function(s: Session) -> CheckResult:
    f = s.f
    rep = check_function_class(f)
    failures = []
    instances = random_sum_instances(s.cfg.checks.samples, s.cfg.checks.seed)
    for M in instances:
        r = verify_sum_lemmas(M, f, lower_applicable=rep.Ccp)
        if not r.passed:
            failures.append(M)
    details = {"function": f.describe(), "p": f.p, "concave": rep.concave, "Cp": rep.Cp, "Ccp": rep.Ccp,
               "n0": rep.n0, "numeric_only": rep.numeric_only, "certificate": rep.certificate,
               "sum_lemma_instances": len(instances), "sum_lemma_failures": len(failures)}
    lemmas = {"sum_lemmas": not failures}
    return CheckResult("function", not failures, details, lemmas)


def _max_n(s: Session) -> int:
    c = s.cfg.checks
    if c.max_n is not None:
        return c.max_n
    return s.fixture.nominal_radius if s.fixture.nominal_radius is not None else s.g.radius


def check_stability(s: Session) -> CheckResult:
    c = s.cfg.checks
    rep = check_stability_suite(s.g, s.delta, _max_n(s), trials=c.trials, seed=c.seed)
    details = {"delta": s.delta, "scales": rep.scales, "triples": rep.triples_checked,
               "points": rep.points_checked, "violations": len(rep.violations),
               "first_violations": [list(v) for v in rep.violations[:5]]}
    return CheckResult("stability", rep.passed, details, {"geodesic_stability": rep.passed})


def check_trumpets(s: Session) -> CheckResult:
    rep = check_trumpet_lemmas(s.g, s.hyp_params(), s.fixture.safe_ball())
    lemmas = {f"trumpet_{k}": not v for k, v in rep.violations.items()}
    details = {"C": rep.C, "checked": rep.checked, "worst_ratio": rep.worst_ratio,
               "violations": _violation_summary(rep.violations)}
    return CheckResult("trumpets", rep.passed, details, lemmas)


def check_tree_graded(s: Session) -> CheckResult:
    g, ps = s.g, s.pieces
    tg = validate_tree_graded(g, ps)
    details: Dict[str, object] = {"axioms": tg.to_dict()}
    lemmas = {"tree_graded_axioms": tg.passed}
    if tg.passed:
        xs = s.fixture.safe_ball()
        uniq = check_decomposition_uniqueness(g, ps, xs)
        metric = SplitMetric(g, ps)
        axioms = check_metric_axioms(metric.matrix(xs), xs)
        bil = check_bilipschitz(g, ps, xs, metric)
        details.update({
            "decomposition": {"points": uniq.points, "geodesics": uniq.geodesics,
                              "mismatches": uniq.mismatches[:20], "capped": uniq.capped[:20]},
            "metric_axioms": {"points": axioms.points, "zero": axioms.zero_violations[:5],
                              "symmetry": axioms.symmetry_violations[:5], "triangle": axioms.triangle_violations[:5]},
            "bilipschitz": {"pairs": bil.pairs, "violations": len(bil.violations),
                            "min_ratio": bil.min_ratio, "max_ratio": bil.max_ratio,
                            "first_violations": [list(v) for v in bil.violations[:5]]},
        })
        lemmas.update({"decomposition_unique": uniq.passed, "split_metric_axioms": axioms.passed,
                       "bilipschitz": bil.passed})
    return CheckResult("tg", all(lemmas.values()), details, lemmas)


def check_spqr_conditions(s: Session) -> CheckResult:
    rep = check_spqr(s.g, s.pieces, xs=s.fixture.safe_ball(), embedder=s.relhyp_embedder())
    return CheckResult("spqr", rep.passed, rep.to_dict(), {f"spqr_{c}": rep.passed_condition(c)
                                                            for c in ("C1", "C2", "C3", "C4")})


def check_relhyp_lemmas(s: Session) -> CheckResult:
    emb = s.relhyp_embedder()
    xs = s.fixture.safe_ball()
    details, lemmas = {}, {}
    for R in s.cfg.checks.R:
        rep = check_nxi_bound(s.g, s.pieces, R, xs, emb)
        details[f"nxi_R{R}"] = {"checked": rep.checked["nxi"], "max_difference": rep.constants["max_difference"],
                                "violations": len(rep.violations["nxi"])}
        lemmas[f"nxi_bound_R{R}"] = rep.passed
    small = check_small_piece_lemmas(emb, xs)
    details["small_pieces"] = {"checked": small.checked, "constants": small.constants,
                               "violations": _violation_summary(small.violations)}
    for k, v in small.violations.items():
        lemmas[f"small_{k}"] = not v
    return CheckResult("relhyp_lemmas", all(lemmas.values()), details, lemmas)


def lemma_checks(s: Session, kind: Optional[str]) -> List[CheckResult]:
    if kind in (None, "hyp"):
        return [check_stability(s), check_trumpets(s)]
    if kind == "tg":
        return [check_function(s), check_tree_graded(s)]
    return [check_function(s), check_relhyp_lemmas(s)]


CHECKS: Dict[str, Callable[[Session], CheckResult]] = {
    "delta": check_delta, "function": check_function, "stability": check_stability,
    "tg": check_tree_graded, "spqr": check_spqr_conditions,
}


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class PipelineResult:
    config: RunConfig
    fixture: Fixture
    checks: Dict[str, CheckResult]
    embedding: Optional[EmbeddingRun]
    report: Optional[EmbeddingReport]
    timings: Dict[str, float]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def lemma_results(self) -> Dict[str, bool]:
        out: Dict[str, bool] = {}
        for c in self.checks.values():
            out.update(c.lemmas)
        return out

    def document(self) -> dict:
        timing = self.config.output.timing
        doc = {
            "schema": SCHEMA_VERSION,
            "config": {k: v for k, v in asdict(self.config).items() if k != "output"},
            "fixture": self.fixture.to_dict(),
            "passed": self.passed,
            "checks": {k: {"passed": c.passed, **c.details} for k, c in sorted(self.checks.items())},
            "lemma_results": dict(sorted(self.lemma_results().items())),
            "embedding": None if self.embedding is None else {"kind": self.embedding.kind, **self.embedding.info},
            "report": None if self.report is None else self.report.to_dict(timing),
        }
        if timing:
            doc["runtime"] = self.timings
        return round_floats(doc)


def run_pipeline(cfg: RunConfig, measure: bool = True, default_lemmas: bool = True,
                 write: bool = True, evaluate: bool = True) -> PipelineResult:
    """Build the fixture, run the requested checks and embedding, measure distortion and
    write artifacts to ``cfg.output.out`` (when set)."""
    if cfg.embedding.p <= 1:
        raise ValueError("p > 1 required")
    start = time.perf_counter()
    s = Session(cfg)
    kind = cfg.embedding.embed
    requested = list(cfg.checks.check)
    if not requested and kind is not None and default_lemmas:
        requested = ["lemmas"]
    results: Dict[str, CheckResult] = {}
    for name in requested:
        t = time.perf_counter()
        found = lemma_checks(s, kind) if name == "lemmas" else [CHECKS[name](s)]
        for r in found:
            results[r.name] = r
        s.timings[f"check_{name}"] = time.perf_counter() - t
    run = report = None
    if kind is not None and evaluate:
        run = s.embed(kind)
        if measure:
            t = time.perf_counter()
            lemma = {}
            for r in results.values():
                lemma.update(r.lemmas)
            short = SEPARATION_CONSTANT * s.pieces.K if kind == "relhyp" else None
            report = build_report(cfg.fixture.fixture, s.g, run.xs, run.vectors, lemma, short)
            s.timings["distortion"] = time.perf_counter() - t
    s.timings["total"] = time.perf_counter() - start
    if report is not None:
        report.runtime = dict(s.timings)
    result = PipelineResult(cfg, s.fixture, results, run, report, dict(s.timings))
    if write and cfg.output.out:
        write_artifacts(result, cfg.output.out)
    return result


# ---------------------------------------------------------------------------
# artifacts


def round_floats(obj):
    """Recursively round floats to 12 significant digits; non-finite values become strings."""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return str(v)
        return float(f"{v:.{SIG_DIGITS}g}")
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    return obj


def _fmt(v: float) -> str:
    return f"{float(v):.{SIG_DIGITS}g}"


def write_artifacts(result: PipelineResult, out_dir) -> Dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": out / "report.json"}
    paths["report"].write_text(json.dumps(result.document(), indent=2, sort_keys=False) + "\n")
    if result.embedding is not None and result.config.output.dump_embedding:
        paths["embedding"] = out / "embedding.csv"
        write_embedding_csv(result.fixture.graph, result.embedding, paths["embedding"])
    if result.report is not None:
        paths["curve"] = out / "curve.csv"
        with open(paths["curve"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "rho_minus", "rho_plus", "pairs"])
            for r, lo, hi, n in result.report.curve.rows():
                w.writerow([r, _fmt(lo), _fmt(hi), n])
    return paths


def write_embedding_csv(g: MetricGraph, run: EmbeddingRun, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vertex", "namespace", "key", "value"])
        for x, vec in zip(run.xs, run.vectors):
            for key, val in sorted(vec, key=lambda kv: (kv[0].namespace, kv[0].key)):
                w.writerow([g.label(x), key.namespace, key.key, _fmt(val)])
