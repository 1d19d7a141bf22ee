"""Adjacent-pair Lipschitz constants of each embedding across ball radii.

Prints one line per (embedding, radius) and the relative spread per embedding.
Usage: python scripts/lipschitz_stability.py [--radii 6 8 10] [--only hyp tg small large]
"""
from __future__ import annotations

import argparse
import json
import time

from coarse_embed.config import RunConfig
from coarse_embed.pipeline import Session
from coarse_embed.report import adjacent_lipschitz

FIXTURES = {
    "hyp": {"fixture": "free(2,{r})", "truncate": True, "embed": "hyp"},
    "tg": {"fixture": "zxz({r})", "truncate": True, "embed": "tg"},
    "small": {"fixture": "zxz({r})", "truncate": True, "balls": "all", "ball_radius": 0, "embed": "relhyp"},
    "large": {"fixture": "zxz({r})", "truncate": True, "balls": "all", "ball_radius": 0, "embed": "relhyp"},
}


def measure(kind: str, radius: int, f: str = "power:0.5", p: float = 2.0) -> float:
    items = {k: (v.format(r=radius) if isinstance(v, str) else v) for k, v in FIXTURES[kind].items()}
    items.update({"f": f, "p": p})
    s = Session(RunConfig().updated(items))
    xs = s.fixture.safe_ball()
    if kind in ("hyp", "tg"):
        vectors = s.embed(kind).vectors
    else:
        emb = s.relhyp_embedder()
        embed = emb.embed_small if kind == "small" else emb.embed_large
        vectors = [embed(x) for x in xs]
    return adjacent_lipschitz(s.g, xs, vectors)


def spread(values) -> float:
    return (max(values) - min(values)) / max(values) if max(values) > 0 else 0.0


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--radii", type=int, nargs="+", default=[6, 8, 10])
    ap.add_argument("--only", nargs="+", default=list(FIXTURES), choices=list(FIXTURES))
    args = ap.parse_args()
    out = {}
    for kind in args.only:
        vals = []
        for r in args.radii:
            t = time.perf_counter()
            vals.append(measure(kind, r))
            print(f"{kind:6s} r={r:3d} lipschitz={vals[-1]:.6f} ({time.perf_counter() - t:.1f}s)", flush=True)
        out[kind] = {"radii": args.radii, "lipschitz": vals, "spread": spread(vals)}
        print(f"{kind:6s} spread={out[kind]['spread']:.3f}", flush=True)
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
