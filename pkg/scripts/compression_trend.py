"""Compression estimates of the hyperbolic embedding for several exponents, and the
separation ratio of the relatively hyperbolic embedding across radii.

Usage:
  python scripts/compression_trend.py hyp [--radius 12] [--exponents 0.5 0.75]
  python scripts/compression_trend.py relhyp [--radii 6 8]
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from coarse_embed.config import RunConfig
from coarse_embed.pipeline import Session
from coarse_embed.report import estimate_compression, measure_distortion


def log_slopes(curve, starts=(5, 6, 7, 8)):
    """Unclamped log-log slope of rho_minus over r >= start."""
    out = {}
    for s in starts:
        sel = (curve.r >= s) & (curve.rho_minus > 0)
        if sel.sum() >= 2:
            out[s] = float(np.polyfit(np.log(curve.r[sel]), np.log(curve.rho_minus[sel]), 1)[0])
    return out


def hyp_trend(radius: int, exponents) -> dict:
    out = {}
    for a in exponents:
        t = time.perf_counter()
        s = Session(RunConfig().updated({"fixture": f"free(2,{radius})", "truncate": True, "embed": "hyp",
                                         "f": f"power:{a}"}))
        run = s.embed("hyp")
        curve = measure_distortion(s.g, run.xs, run.vectors)
        out[a] = {"estimate": estimate_compression(curve), "slopes": log_slopes(curve),
                  "points": len(run.xs), "seconds": round(time.perf_counter() - t, 1)}
        print(f"a={a}: {out[a]}", flush=True)
    return out


def relhyp_ratio(radii) -> dict:
    out = {}
    for r in radii:
        t = time.perf_counter()
        s = Session(RunConfig().updated({"fixture": f"z2xz({r})", "truncate": True, "embed": "relhyp",
                                         "peripherals": (0,), "nbhd": 1, "balls": "all", "ball_radius": 1,
                                         "K": 1}))
        run = s.embed("relhyp")
        curve = measure_distortion(s.g, run.xs, run.vectors)
        ratio = curve.rho_minus / np.minimum(curve.r / 2, np.sqrt(curve.r))
        out[r] = {"min_ratio": float(ratio.min()), "ratios": [round(float(v), 4) for v in ratio],
                  "points": len(run.xs), "seconds": round(time.perf_counter() - t, 1)}
        print(f"radius {r}: {out[r]}", flush=True)
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    h = sub.add_parser("hyp")
    h.add_argument("--radius", type=int, default=12)
    h.add_argument("--exponents", type=float, nargs="+", default=[0.5, 0.75])
    r = sub.add_parser("relhyp")
    r.add_argument("--radii", type=int, nargs="+", default=[6, 8])
    args = ap.parse_args()
    res = hyp_trend(args.radius, args.exponents) if args.cmd == "hyp" else relhyp_ratio(args.radii)
    print(json.dumps(res, indent=2))


if __name__ == "__main__":
    main()
