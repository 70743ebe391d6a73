"""Command-line entry point: config loading, schedule parsing and result files.

Exit status 0 on success, 1 on a validation error, 2 when a numerical check fails.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import math
import os
import re
import sys
from dataclasses import dataclass

import numpy as np

from . import bounds as bd
from . import density as dn
from . import frame as fr
from . import harness as hs
from . import manifold as mf
from . import sampler as sm
from . import ustat as us
from .errors import (InvalidParameterError, NonConvergenceError, RegimeError, ResourceError,
                     ToleranceFailure, TruncationError)


# ---------------------------------------------------------------- schedule grammar

class ScheduleSyntaxError(InvalidParameterError):
    def __init__(self, message, column):
        super().__init__(f"schedule syntax error at column {column}: {message}")
        self.column = column


_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(\S))")


def _tokenize(text):
    toks, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:  # only trailing whitespace is left
            break
        num, name, op = m.groups()
        start = m.start(m.lastindex)
        if num is not None:
            toks.append(("num", num, start))
        elif name is not None:
            toks.append(("name", name, start))
        else:
            toks.append(("op", op, start))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    """Recursive descent for ``B^(j*EXPR) [* j^ATOM] [* EXPR]``.

    EXPR is arithmetic (+ - * / and parentheses) over decimals and the names
    s and d. The exponent of j is a single atom, so ``j^2 * 3`` reads as
    (j^2) * 3. Columns are 0-based character offsets.
    """

    def __init__(self, text, consts):
        self.toks = _tokenize(text)
        self.i = 0
        self.consts = consts

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        tok = self.peek()
        if (kind and tok[0] != kind) or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            got = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ScheduleSyntaxError(f"expected {want!r}, found {got}", tok[2])
        self.i += 1
        return tok

    def atom(self):
        tok = self.peek()
        if tok[0] == "num":
            self.take()
            return float(tok[1]), tok[1]
        if tok[0] == "name":
            if tok[1] not in self.consts:
                raise ScheduleSyntaxError(f"unknown name {tok[1]!r} (allowed: s, d)", tok[2])
            self.take()
            return float(self.consts[tok[1]]), tok[1]
        if tok[1] == "(":
            self.take()
            v, t = self.expr()
            self.take("op", ")")
            return v, f"({t})"
        if tok[1] == "-":
            self.take()
            v, t = self.atom()
            return -v, f"-{t}"
        got = "end of input" if tok[0] == "end" else repr(tok[1])
        raise ScheduleSyntaxError(f"expected a number, s, d or '(', found {got}", tok[2])

    def term(self):
        v, t = self.atom()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()
            w, u = self.atom()
            if op[1] == "/":
                if w == 0:
                    raise InvalidParameterError(f"division by zero in schedule at column {op[2]}")
                v, t = v / w, f"{t}/{u}"
            else:
                v, t = v * w, f"{t}*{u}"
        return v, t

    def expr(self):
        v, t = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in ("+", "-"):
            op = self.take()
            w, u = self.term()
            v, t = (v + w, f"{t}+{u}") if op[1] == "+" else (v - w, f"{t}-{u}")
        return v, t

    def schedule(self):
        self.take("name", "B")
        self.take("op", "^")
        self.take("op", "(")
        self.take("name", "j")
        self.take("op", "*")
        a, ta = self.expr()
        self.take("op", ")")
        jpow, const, tj, tc = 0.0, 1.0, None, None
        if self.peek()[1] == "*":
            self.take()
            if self.peek()[:2] == ("name", "j"):
                self.take()
                if self.peek()[1] == "^":
                    self.take()
                    jpow, tj = self.atom()
                else:
                    jpow, tj = 1.0, "1"
                if self.peek()[1] == "*":
                    self.take()
                    const, tc = self.expr()
            else:
                const, tc = self.expr()
        self.take("end")
        canon = f"B^(j*{ta})"
        if tj is not None:
            canon += f" * j^{tj}"
        if tc is not None:
            canon += f" * {tc}"
        return a, jpow, const, canon


@dataclass(frozen=True)
class Schedule:
    """R_t(j) = B^(j*a) * j^p * c."""

    B: float
    a: float
    j_power: float
    const: float
    canonical: str

    def __call__(self, j) -> float:
        return float(self.B ** (j * self.a) * float(j) ** self.j_power * self.const)


def parse_schedule(text: str, B: float = 2.0, s: float = 1.0, d: int = 1) -> Schedule:
    a, p, c, canon = _Parser(text, {"s": s, "d": d}).schedule()
    return Schedule(float(B), a, p, c, canon)


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class ExperimentConfig:
    manifold: str = "circle"
    B: float = 2.0
    j_min: int = 2
    j_max: int = 5
    n: int = 2
    s: float = 1.0
    r: float = 2.0
    amplitude: float = 0.3
    density_seed: int = 11
    density_levels: int = 8
    frame_j_max: int = 0  # 0 means density_levels + 2
    schedule: str = "B^(j*d) * j^2"
    regime: str = "ii"
    replicates: int = 4000
    seed: int = 1
    m_list: str = "200,800,3200"
    depoisson_j: int = 2
    truncation_radius: int = 24
    workers: int = 1
    output_dir: str = "out"

    @property
    def d(self) -> int:
        return 1

    @property
    def js(self):
        return list(range(self.j_min, self.j_max + 1))

    @property
    def frame_levels(self) -> int:
        return self.frame_j_max or self.density_levels + 2

    @property
    def ms(self):
        return [int(v) for v in self.m_list.replace(" ", "").split(",") if v]

    def validate(self):
        if self.manifold != "circle":
            raise InvalidParameterError("manifold must be 'circle'")
        if not self.B > 1:
            raise InvalidParameterError("B must exceed 1")
        if self.n < 1:
            raise InvalidParameterError("n must be at least 1")
        if not 0 <= self.j_min <= self.j_max:
            raise InvalidParameterError("need 0 <= j_min <= j_max")
        if not 1 <= self.r <= math.inf:
            raise InvalidParameterError("r must lie in [1, inf]")
        if self.s < self.d / self.r:
            raise InvalidParameterError("need s >= d/r")
        if self.amplitude < 0:
            raise InvalidParameterError("amplitude must be nonnegative")
        if self.amplitude > 0 and self.frame_levels < self.density_levels:
            raise InvalidParameterError("frame_j_max must be at least density_levels")
        if self.frame_levels < self.j_max:
            raise InvalidParameterError("frame_j_max must be at least j_max")
        if self.replicates < 100:
            raise InvalidParameterError("replicates must be at least 100")
        if self.regime not in ("i", "ii"):
            raise InvalidParameterError("regime must be 'i' or 'ii'")
        if self.workers < 1:
            raise InvalidParameterError("workers must be at least 1")
        if any(m < 1 for m in self.ms):
            raise InvalidParameterError("m_list entries must be positive")
        parse_schedule(self.schedule, self.B, self.s, self.d)
        return self


def load_config(path, overrides=None) -> ExperimentConfig:
    if not os.path.isfile(path):
        raise InvalidParameterError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    with open(path) as fh:
        cp.read_string("[run]\n" + fh.read(), source=str(path))
    raw = dict(cp["run"])
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise InvalidParameterError(f"unknown config keys: {', '.join(unknown)}")
    kw = {}
    for key, val in raw.items():
        typ = type(fields[key].default)
        try:
            kw[key] = typ(val) if typ is not str else str(val)
        except ValueError as exc:
            raise InvalidParameterError(f"{key}: cannot read {val!r} as {typ.__name__}") from exc
    return ExperimentConfig(**kw).validate()


# ---------------------------------------------------------------- output

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_summary(path, record):
    with open(path, "w") as fh:
        json.dump(_jsonable(record), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- commands

def _setup(cfg):
    frame = fr.build_frame(mf.make_circle(), cfg.B, cfg.frame_levels)
    if cfg.amplitude == 0:
        density = dn.uniform_density(frame)
    else:
        density = dn.build_besov_density(frame, cfg.s, cfg.r, cfg.amplitude, cfg.density_seed,
                                         j_max=cfg.density_levels)
    return frame, density


def cmd_frame_validate(cfg, out):
    frame = fr.build_frame(mf.make_circle(), cfg.B, cfg.j_max)
    rows = fr.frame_validation_rows(frame, seed=cfg.seed)
    write_csv(os.path.join(out, "frame_validation.csv"),
              ["j", "k", "p", "lp_norm", "C_fit", "tightness_residual"], rows)
    return {"command": "frame validate", "levels": cfg.j_max, "tightness_residual": rows[0][5]}


def cmd_density_build(cfg, out):
    frame, density = _setup(cfg)
    path = os.path.join(out, "density.txt")
    dn.save_density(density, path)
    norms = dn.level_norms(density)
    write_csv(os.path.join(out, "density_levels.csv"), ["j", "level_norm"], list(enumerate(norms)))
    return {"command": "density build", "file": path, "f_min": density.f_min, "f_max": density.f_max,
            "decay_slope": dn.decay_slope(density) if density.j_max - density.j0 >= 3 else float("nan")}


def cmd_sample(cfg, out):
    frame, density = _setup(cfg)
    sched = parse_schedule(cfg.schedule, cfg.B, cfg.s, cfg.d)
    rows, counts = [], {}
    for j in cfg.js:
        conf = sm.sample_poisson(density, sched(j), cfg.seed, key=(0, j, 0))
        counts[j] = conf.count
        rows.extend((j, i, x) for i, x in enumerate(conf.points))
    write_csv(os.path.join(out, "points.csv"), ["j", "index", "theta"], rows)
    return {"command": "sample", "schedule": sched.canonical, "counts": counts}


def cmd_ustat_eval(cfg, out):
    frame, density = _setup(cfg)
    sched = parse_schedule(cfg.schedule, cfg.B, cfg.s, cfg.d)
    rows = []
    for j in cfg.js:
        R_t = sched(j)
        gram = us.compute_gram(frame, density, j, fourth=False)
        rep = us.exact_variance(gram, R_t, cfg.n, j)
        conf = sm.sample_poisson(density, R_t, cfg.seed, key=(0, j, 0))
        rep = rep.with_value(us.evaluate_kernel_ustat(frame, conf, j, cfg.n))
        rows.append((j, R_t, conf.count, rep.value, rep.mean, rep.sigma_sq, rep.normalized))
    write_csv(os.path.join(out, "ustat.csv"),
              ["j", "R_t", "count", "value", "mean", "sigma_sq", "normalized"], rows)
    return {"command": "ustat eval", "schedule": sched.canonical, "levels": len(rows)}


def cmd_variance(cfg, out):
    frame, density = _setup(cfg)
    sched = parse_schedule(cfg.schedule, cfg.B, cfg.s, cfg.d)
    rows = []
    for j in cfg.js:
        R_t = sched(j)
        rep = us.exact_variance(us.compute_gram(frame, density, j, fourth=False), R_t, cfg.n, j)
        lam = us.chaos_lambda(R_t, cfg.B, cfg.s, cfg.d, cfg.n, j)
        for p in range(1, cfg.n + 1):
            rows.append((j, R_t, p, rep.chaos_norms[p - 1], rep.chaos_norms[p - 1] / rep.sigma_sq,
                         lam[p - 1], rep.sigma_sq, rep.mean))
    write_csv(os.path.join(out, "variance.csv"),
              ["j", "R_t", "p", "chaos_norm", "share", "Lambda", "sigma_sq", "mean"], rows)
    dom = us.classify_dominance(sched, cfg.B, cfg.s, cfg.d, cfg.n, cfg.js) if len(cfg.js) >= 2 else None
    return {"command": "variance", "schedule": sched.canonical, "dominance": dom.value if dom else "n/a"}


def cmd_bounds(cfg, out):
    frame, density = _setup(cfg)
    sched = parse_schedule(cfg.schedule, cfg.B, cfg.s, cfg.d)
    rows, summary = [], {}
    for j in cfg.js:
        R_t = sched(j)
        gram = us.compute_gram(frame, density, j, truncation_radius=cfg.truncation_radius)
        rep = bd.bound_report(gram, R_t, cfg.n, j, cfg.B, cfg.s, cfg.d, cfg.regime)
        for t, v in rep.contraction_norms.items():
            rows.append((j, R_t, "contraction", *t, v))
        for p, v in rep.l4_norms.items():
            rows.append((j, R_t, "l4", p, "", "", "", v))
        rows.append((j, R_t, "summary", "", "", "", "", rep.stein_malliavin_bound))
        summary[j] = {"stein_malliavin_bound": rep.stein_malliavin_bound, "rate_bound_i": rep.rate_bound_i,
                      "rate_bound_ii": rep.rate_bound_ii, "simple_rate": rep.simple_rate}
    write_csv(os.path.join(out, "bounds.csv"), ["j", "R_t", "kind", "p", "q", "r", "l", "value"], rows)
    js = list(summary)
    rec = {"command": "bounds", "schedule": sched.canonical, "regime": cfg.regime, "per_j": summary}
    if len(js) >= 2:
        rec["rhs_slope"] = hs.fit_slope(js, [summary[j]["stein_malliavin_bound"] for j in js])
        rec["simple_rate_slope"] = hs.fit_slope(js, [summary[j]["simple_rate"] for j in js])
    return rec


def criterion_slope(cfg) -> float:
    # regime i target follows the acceptance convention of a half log B per level
    return -cfg.d / 2 * math.log(cfg.B) if cfg.regime == "ii" else -0.5 * math.log(cfg.B)


def cmd_clt(cfg, out):
    frame, density = _setup(cfg)
    sched = parse_schedule(cfg.schedule, cfg.B, cfg.s, cfg.d)
    conf = hs.CLTConfig(cfg.B, cfg.s, cfg.r, cfg.n, tuple(cfg.js), sched, cfg.replicates, cfg.seed,
                        cfg.regime, cfg.d, sched.canonical, cfg.workers)
    exp = hs.run_clt_experiment(conf, frame, density)
    write_csv(os.path.join(out, "clt.csv"),
              ["j", "R_t", "empirical_W1", "bootstrap_se", "sigma_sq", "dominance", "sample_mean",
               "sample_var", "valid", "kept"],
              [(r.j, r.R_t, r.empirical_W1, r.bootstrap_se, r.sigma_sq, r.dominance, r.sample_mean,
                r.sample_var, r.valid, r.kept) for r in exp.per_j])
    target = criterion_slope(cfg)
    rec = {"command": "clt", "regime": cfg.regime, "schedule": sched.canonical,
           "fitted_slope": exp.fitted_slope, "predicted_slope": exp.predicted_slope,
           "criterion_slope": target, "estimator_floor": exp.floor,
           "pass": {"sanity_floor": exp.valid,
                    "slope_within_25pct": bool(abs(exp.fitted_slope - target) <= 0.25 * abs(target)),
                    "monotone_2se": exp.monotone()}}
    return rec, exp


def cmd_depoissonize(cfg, out):
    frame, density = _setup(cfg)
    rows = hs.run_depoissonization(frame, density, cfg.depoisson_j, cfg.n, cfg.ms, cfg.replicates,
                                   cfg.seed, cfg.workers)
    write_csv(os.path.join(out, "depoissonize.csv"),
              ["m", "mean_sq_diff", "ratio_to_sqrt", "var_Um", "var_Um_prime", "var_Um_prime_se",
               "mean_sq_diff_se"],
              [dataclasses.astuple(r) for r in rows])
    ratios = [r.ratio_to_sqrt for r in rows]
    last = rows[-1]
    return {"command": "depoissonize", "max_over_min_ratio": max(ratios) / min(ratios),
            "pass": {"ratio_bounded": max(ratios) / min(ratios) < 4,
                     "var_prime_within_4se": abs(last.var_Um_prime - 1) <= 4 * last.var_Um_prime_se}}


COMMANDS = {
    ("frame", "validate"): cmd_frame_validate,
    ("density", "build"): cmd_density_build,
    ("sample",): cmd_sample,
    ("ustat", "eval"): cmd_ustat_eval,
    ("variance",): cmd_variance,
    ("bounds",): cmd_bounds,
    ("clt",): cmd_clt,
    ("depoissonize",): cmd_depoissonize,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="needlet-ustat", description="Needlet U-statistics experiments on the circle.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="flat key = value file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--workers", type=int, help="worker threads (outputs do not depend on it)")
        p.add_argument("--output", help="output directory (overrides output_dir)")
        p.add_argument("--regime", choices=["i", "ii"], help="overrides the config regime")
        return p

    for word, action in (("frame", "validate"), ("density", "build"), ("ustat", "eval")):
        p = sub.add_parser(word)
        common(p).add_argument("action", choices=[action])
        if word == "density":
            p.add_argument("--s", type=float, help="smoothness s")
            p.add_argument("--r", type=float, help="integrability r")
            p.add_argument("--B", type=float, help="needlet scale B")
            p.add_argument("--jmax", type=int, dest="density_levels", help="top planted level")
            p.add_argument("--amplitude", type=float, help="planted amplitude")
    for word in ("sample", "variance", "bounds", "clt", "depoissonize"):
        common(sub.add_parser(word))
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    key = (args.command, args.action) if hasattr(args, "action") else (args.command,)
    try:
        over = {"seed": args.seed, "workers": args.workers, "output_dir": args.output, "regime": args.regime}
        for name in ("s", "r", "B", "density_levels", "amplitude"):
            over[name] = getattr(args, name, None)
        if key == ("density", "build") and args.seed is not None:
            over["density_seed"] = args.seed
        cfg = load_config(args.config, over)
        out = cfg.output_dir
        os.makedirs(out, exist_ok=True)
        result = COMMANDS[key](cfg, out)
        rec, exp = result if isinstance(result, tuple) else (result, None)
        rec["config"] = dataclasses.asdict(cfg)
        write_summary(os.path.join(out, "summary.json"), rec)
        if exp is not None and not exp.valid:
            bad = [r.j for r in exp.per_j if not r.valid]
            raise ToleranceFailure("sanity floor", f"mean or variance of the normalized statistic off at j={bad}")
    except (InvalidParameterError, RegimeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ToleranceFailure, TruncationError, NonConvergenceError, ResourceError) as exc:
        print(f"numerical check failed: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(_jsonable({k: v for k, v in rec.items() if k != "config"}), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
