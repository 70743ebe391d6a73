"""Log-slopes of the computed contraction and L4 norms against the exponents of their bounds.

    python3 scripts/run_bounds.py --density besov --j 2,3,4,5
"""
import argparse
import math

import numpy as np

from needlet_ustat import bounds as bd
from needlet_ustat import cli
from needlet_ustat import density as dn
from needlet_ustat import frame as fr
from needlet_ustat import manifold as mf
from needlet_ustat import ustat as us


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--density", choices=["uniform", "besov"], default="uniform")
    ap.add_argument("--schedule", default="B^(j*d) * j^2")
    ap.add_argument("--j", default="2,3,4,5")
    ap.add_argument("--n", type=int, default=2)
    args = ap.parse_args()

    cfg = cli.ExperimentConfig(amplitude=0.0 if args.density == "uniform" else 0.3)
    if args.density == "uniform":
        frame = fr.build_frame(mf.make_circle(), cfg.B, 8)
        density, s = dn.uniform_density(frame), 0.0
    else:
        frame, density = cli._setup(cfg)
        s = cfg.s
    sched = cli.parse_schedule(args.schedule, cfg.B, cfg.s, cfg.d)
    js = [int(v) for v in args.j.split(",")]
    n, lB = args.n, math.log(cfg.B)
    got, pred, rhs = {}, {}, []
    for j in js:
        R = sched(j)
        gram = us.compute_gram(frame, density, j)
        rep = bd.bound_report(gram, R, n, j, cfg.B, cfg.s, cfg.d, cfg.regime)
        rhs.append(rep.stein_malliavin_bound)
        L = 2 * math.log(rep.sigma_sq)
        for (p, q, r, l), v in rep.contraction_norms.items():
            got.setdefault((p, q, r, l), []).append(v)
            pred.setdefault((p, q, r, l), []).append(
                (4 * n - p - q - r + l) * math.log(R) - j * (s * (4 * n - 2 * p - 2 * q) + 2 * n - p - q - r + l - 1) * lB - L)
        for p, v in rep.l4_norms.items():
            got.setdefault(("l4", p), []).append(v)
            pred.setdefault(("l4", p), []).append(
                (4 * n - 3 * p) * math.log(R) - j * (s * (4 * n - 4 * p) + 2 * n - 3 * p - 1) * lB - L)
    print(f"{args.density} density, schedule {sched.canonical}, levels {js}")
    for key in got:
        v = np.array(got[key])
        if np.all(v == 0):
            print(f"  {key}: identically zero")
            continue
        a = np.polyfit(js, np.log(v), 1)[0]
        b = np.polyfit(js, pred[key], 1)[0]
        print(f"  {key}: fitted {a:+.4f}, bound exponent {b:+.4f}")
    print(f"  Stein-Malliavin bound slope {np.polyfit(js, np.log(rhs), 1)[0]:+.4f}, "
          f"simple rate slope {-cfg.d / 2 * lB:+.4f}")


if __name__ == "__main__":
    main()
