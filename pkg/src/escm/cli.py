"""Command-line entry point: ``escm <command> [options]``.

Every option can also be given in a YAML config file (``--config``) under
the same name with dashes replaced by underscores.  Precedence, lowest
first: built-in defaults, config file, ``ESCM_OUTPUT_DIR`` (output_dir
only), command-line flags.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
import argparse
from dataclasses import dataclass, field
import json
import logging
import os
from pathlib import Path
import sys
import warnings

import numpy as np
import yaml

from . import __version__, analytics, competence, scan
from .errors import DomainError, EscmError
from .mechanism import (
    MechanismParams,
    WeightMapSpec,
    run_pipeline,
    steepness_ratio,
    weight_bounds,
    weight_table,
)
from .montecarlo import RULES, TrialConfig, simulate, validate_clt

COMMANDS = ("scan-beta", "scan-cmm", "simulate", "validate", "weights-report", "pipeline-demo")
MAP_NAMES = {"linear": "linear", "power": "power", "logodds": "log_odds",
             "log_odds": "log_odds", "unit": "unit"}
DEMO_MAX_N = 20
ENV_OUTPUT = "ESCM_OUTPUT_DIR"

DEFAULTS = {
    "n": None, "la": 10, "q": 4, "smin": 0.5, "map": "linear", "k": 1.0, "eps": 0.1,
    "lw": 5, "lr": 10, "m": 2, "threshold": 0.5, "scoring": "penalty",
    "seed": 0, "threads": None, "trials": None, "rule": "escm", "pipeline": False,
    "alternatives": 2, "dist": "beta:2,2", "variance_mode": None,
    "x_min": None, "x_max": None, "x_steps": None,
    "y_min": None, "y_max": None, "y_steps": None,
    "output_dir": "escm_output",
}
N_DEFAULT = {"pipeline-demo": 15}
TRIALS_DEFAULT = {"validate": 100_000}

log = logging.getLogger("escm")


class UsageError(Exception):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


@dataclass
class RunConfig:
    command: str
    params: MechanismParams
    seed: int
    output_dir: Path
    threads: int
    dist: object = None
    grid: object = None
    n: int = 501
    trials: int = 0
    rule: str = "escm"
    pipeline: bool = False
    alternatives: int = 2
    variance_mode: str = "total_variance"
    effective: dict = field(default_factory=dict)

    def metadata(self):
        return {"command": self.command, "version": __version__, "seed": self.seed,
                "config": self.effective}


def build_parser():
    parser = argparse.ArgumentParser(prog="escm", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS
    for name in COMMANDS:
        p = sub.add_parser(name, argument_default=S)
        p.add_argument("--config", help="YAML file with option values")
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, help="worker cap (default: all cores)")
        p.add_argument("--n", type=int, help="electorate size")
        g = p.add_argument_group("mechanism")
        g.add_argument("--la", type=int, help="assessment length l_a")
        g.add_argument("--q", type=int, help="options per assessment item")
        g.add_argument("--smin", type=float, help="score floor s_min")
        g.add_argument("--map", choices=("linear", "power", "logodds", "unit"))
        g.add_argument("--k", type=float, help="power-map exponent")
        g.add_argument("--eps", type=float, help="log-odds smoothing")
        g.add_argument("--lw", type=int, help="items written per participant")
        g.add_argument("--lr", type=int, help="review capacity per participant")
        g.add_argument("--m", type=int, help="reviewers per item")
        g.add_argument("--threshold", type=float, help="review acceptance threshold")
        g.add_argument("--scoring", choices=("penalty", "raw"))
        if name in ("scan-beta", "scan-cmm"):
            g = p.add_argument_group("grid")
            for ax in ("x", "y"):
                g.add_argument(f"--{ax}-min", dest=f"{ax}_min", type=float)
                g.add_argument(f"--{ax}-max", dest=f"{ax}_max", type=float)
                g.add_argument(f"--{ax}-steps", dest=f"{ax}_steps", type=int)
        if name in ("scan-beta", "scan-cmm", "simulate", "validate"):
            p.add_argument("--variance-mode", dest="variance_mode",
                           choices=analytics.VARIANCE_MODES)
        if name in ("simulate", "validate", "weights-report", "pipeline-demo"):
            p.add_argument("--dist", help="beta:A,B | mu_sigma:MU,SIGMA | cmm3:MU1,MU3 | "
                                          "truncnorm:LOC,SCALE | point:P")
        if name in ("simulate", "validate"):
            p.add_argument("--trials", type=int)
        if name == "simulate":
            p.add_argument("--rule", choices=RULES)
            p.add_argument("--pipeline", action="store_true")
            p.add_argument("--alternatives", type=int)
    return parser


_DIST_FIELDS = {
    "beta": ("alpha", "beta"), "mu_sigma": ("mu", "sigma"), "cmm3": ("mu1", "mu3"),
    "truncnorm": ("location", "scale"), "point": ("value",),
}


def parse_dist(text):
    """``kind:v1,v2`` (or a mapping as in a config file) -> distribution spec."""
    if isinstance(text, dict):
        return competence.from_dict(text)
    kind, _, rest = str(text).partition(":")
    if kind not in _DIST_FIELDS:
        raise DomainError(f"dist: unknown kind {kind!r}; expected one of {sorted(_DIST_FIELDS)}")
    try:
        vals = [float(v) for v in rest.split(",")] if rest else []
    except ValueError:
        raise DomainError(f"dist: cannot parse numbers in {text!r}") from None
    names = _DIST_FIELDS[kind]
    if len(vals) != len(names):
        raise DomainError(f"dist: {kind} needs {len(names)} values ({', '.join(names)})")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return competence.from_dict({"kind": kind, **dict(zip(names, vals))})


def _load_config(path):
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except OSError as exc:
        raise UsageError([f"config: cannot read {path}: {exc}"]) from None
    except yaml.YAMLError as exc:
        raise UsageError([f"config: invalid YAML in {path}: {exc}"]) from None
    if not isinstance(data, dict):
        raise UsageError([f"config: {path} must hold a mapping"])
    data = {k.replace("-", "_"): v for k, v in data.items()}
    data.pop("command", None)
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise UsageError([f"config: unknown key(s) {', '.join(unknown)}"])
    return data


def _grid(command, eff, params, problems):
    base = (scan.default_beta_grid if command == "scan-beta" else scan.default_cmm_grid)(params)
    axes = []
    for ax_name, ax in (("x", base.x_axis), ("y", base.y_axis)):
        lo, hi, steps = (eff[f"{ax_name}_{f}"] for f in ("min", "max", "steps"))
        axes.append(scan.Axis(ax.name, ax.min if lo is None else float(lo),
                              ax.max if hi is None else float(hi),
                              ax.steps if steps is None else int(steps)))
    family = "beta_mu_sigma" if command == "scan-beta" else "cmm3_wide"
    try:
        return scan.GridSpec(axes[0], axes[1], family, eff["n"], params,
                             eff["variance_mode"] or "paper")
    except DomainError as exc:
        problems.extend(f"grid: {p}" for p in str(exc).split("; "))


def parse_and_validate(argv):
    """Parse ``argv`` into a RunConfig, or raise UsageError listing every problem."""
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    eff = dict(DEFAULTS)
    if "config" in ns:
        eff.update(_load_config(ns.pop("config")))
    if os.environ.get(ENV_OUTPUT):
        eff["output_dir"] = os.environ[ENV_OUTPUT]
    eff.update(ns)
    if eff["n"] is None:
        eff["n"] = N_DEFAULT.get(command, 501)
    if eff["trials"] is None:
        eff["trials"] = TRIALS_DEFAULT.get(command, 10_000)
    if eff["threads"] is None:
        eff["threads"] = os.cpu_count() or 1

    problems = []
    n = eff["n"]
    if not isinstance(n, int) or n < 1:
        problems.append(f"n: must be a positive integer (got {n!r})")
    elif command in ("scan-beta", "scan-cmm", "validate") and n % 2 == 0:
        problems.append(f"n: must be odd (got {n})")
    elif command == "pipeline-demo" and n > DEMO_MAX_N:
        problems.append(f"n: pipeline-demo is limited to n <= {DEMO_MAX_N} (got {n})")
    if not isinstance(eff["threads"], int) or eff["threads"] < 1:
        problems.append(f"threads: must be >= 1 (got {eff['threads']!r})")
    if not isinstance(eff["trials"], int) or eff["trials"] < 1:
        problems.append(f"trials: must be >= 1 (got {eff['trials']!r})")
    elif command == "validate" and eff["trials"] < 10_000:
        problems.append(f"trials: validate needs at least 10000 (got {eff['trials']})")
    if eff["alternatives"] < 2:
        problems.append(f"alternatives: must be >= 2 (got {eff['alternatives']})")
    mode = eff["variance_mode"]
    if mode is not None and mode not in analytics.VARIANCE_MODES:
        problems.append(f"variance_mode: expected one of {analytics.VARIANCE_MODES} (got {mode!r})")

    spec = params = None
    kind = MAP_NAMES.get(str(eff["map"]))
    if kind is None:
        problems.append(f"map: expected one of linear, power, logodds, unit (got {eff['map']!r})")
    else:
        try:
            spec = WeightMapSpec(kind, k=float(eff["k"]), epsilon=float(eff["eps"]))
        except DomainError as exc:
            problems.append(f"map: {exc}")
    try:
        params = MechanismParams(
            q=eff["q"], l_w=eff["lw"], l_r=eff["lr"], l_a=eff["la"], m=eff["m"],
            s_min=eff["smin"], review_threshold=eff["threshold"],
            weight_map=spec or WeightMapSpec(), scoring=eff["scoring"])
    except DomainError as exc:
        problems.extend(f"mechanism: {p}" for p in str(exc).split("; "))

    dist = grid = None
    if command in ("scan-beta", "scan-cmm"):
        if params is not None and not problems:
            grid = _grid(command, eff, params, problems)
    else:
        try:
            dist = parse_dist(eff["dist"])
        except (DomainError, KeyError, TypeError, ValueError) as exc:
            problems.append(f"dist: {exc}" if not str(exc).startswith("dist") else str(exc))
    if problems:
        raise UsageError(problems)

    if isinstance(eff["dist"], dict):
        eff["dist"] = dict(eff["dist"])
    eff["output_dir"] = str(eff["output_dir"])
    return RunConfig(
        command=command, params=params, seed=int(eff["seed"]),
        output_dir=Path(eff["output_dir"]), threads=eff["threads"], dist=dist, grid=grid,
        n=n, trials=eff["trials"], rule=eff["rule"], pipeline=bool(eff["pipeline"]),
        alternatives=eff["alternatives"],
        variance_mode=mode or ("paper" if grid is not None else "total_variance"),
        effective=eff,
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _prefix(cfg):
    fam = "beta" if cfg.command == "scan-beta" else "cmm3"
    return f"{fam}_{cfg.params.weight_map.kind}"


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _write_table(path, rows):
    path.write_text("key,value\n" + "".join(f"{k},{v}\n" for k, v in rows))
    return path


def _fmt(v):
    return f"{v:.9g}" if isinstance(v, float) else str(v)


def cmd_scan(cfg, out):
    fn = scan.scan_beta if cfg.command == "scan-beta" else scan.scan_cmm3
    grids = fn(cfg.grid, workers=cfg.threads)
    paths = scan.write_outputs(grids, cfg.grid, cfg.output_dir, _prefix(cfg),
                               extra_meta={"run": cfg.metadata()})
    g = grids["gain"]
    ok = ~g.mask
    print(f"{cfg.command}: {cfg.params.weight_map.label()}  n={cfg.n}  l_a={cfg.params.l_a}  "
          f"mode={cfg.grid.mode}", file=out)
    print(f"  cells {g.values.size}, masked {int(g.mask.sum())}", file=out)
    if ok.any():
        print(f"  gain range [{g.values[ok].min():.4f}, {g.values[ok].max():.4f}]", file=out)
    for p in paths:
        print(f"  wrote {p}", file=out)
    return paths


def cmd_simulate(cfg, out):
    tc = TrialConfig(cfg.dist, cfg.params, cfg.n, cfg.trials, cfg.seed, cfg.pipeline,
                     cfg.rule, cfg.alternatives, cfg.variance_mode)
    rep = simulate(tc, threads=cfg.threads)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    rows = [(k, _fmt(v)) for k, v in rep.to_dict().items()]
    paths = [_write_table(cfg.output_dir / "simulate_report.csv", rows),
             _write_json(cfg.output_dir / "simulate_meta.json", cfg.metadata())]
    print(f"simulate: rule={rep.rule} n={cfg.n} trials={rep.trials}", file=out)
    print(f"  success {rep.success_rate:.4f} +/- {rep.standard_error:.4f}  "
          f"CLT {rep.clt_prediction:.4f}  gap {abs(rep.success_rate - rep.clt_prediction):.4f}",
          file=out)
    print(f"  H {rep.mean_herfindahl:.5f}  Gini {rep.mean_gini:.4f}  ties {rep.tie_rate:.4f}",
          file=out)
    return paths


def cmd_validate(cfg, out):
    rep = validate_clt(cfg.dist, cfg.params, cfg.n, cfg.trials, cfg.seed, threads=cfg.threads)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    d = rep.to_dict()
    extra = d.pop("extra")
    rows = [(k, _fmt(v)) for k, v in {**d, **extra}.items()]
    paths = [_write_table(cfg.output_dir / "validate_report.csv", rows),
             _write_json(cfg.output_dir / "validate_meta.json", cfg.metadata())]
    print(f"validate: {cfg.params.weight_map.label()} n={cfg.n} trials={rep.trials}", file=out)
    print(f"  Monte Carlo {rep.monte_carlo:.4f} +/- {rep.standard_error:.4f}", file=out)
    print(f"  paper mode {rep.paper_prediction:.4f} (gap {rep.paper_gap:.4f})", file=out)
    print(f"  total_variance {rep.total_variance_prediction:.4f} "
          f"(gap {rep.total_variance_gap:.4f})  better: {rep.better_mode}", file=out)
    print(f"  H {extra['mean_herfindahl']:.5f}  Gini {extra['mean_gini']:.4f}", file=out)
    return paths


def cmd_weights_report(cfg, out):
    p = cfg.params
    table = weight_table(p)
    bounds = weight_bounds(p)
    e_w, e_w_sq = analytics.expected_weight_given_p(np.linspace(0, 1, 11), p)
    mom = {m: analytics.signal_moments(cfg.dist, p, mode=m) for m in analytics.VARIANCE_MODES}
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    lines = ["correct,weight"] + [f"{c},{w:.9g}" for c, w in enumerate(table)]
    csv = cfg.output_dir / "weights_table.csv"
    csv.write_text("\n".join(lines) + "\n")
    meta = _write_json(cfg.output_dir / "weights_meta.json", cfg.metadata())
    print(f"weights-report: {p.weight_map.label()}  l_a={p.l_a} q={p.q} s_min={p.s_min:g}",
          file=out)
    print("  C   weight", file=out)
    for c, w in enumerate(table):
        print(f"  {c:<3d} {w: .6f}", file=out)
    print(f"  bounds [{bounds.omega_min:.6f}, {bounds.omega_max:.6f}]", file=out)
    if p.weight_map.kind == "power":
        exact, approx = steepness_ratio(p.l_a, p.weight_map.k)
        print(f"  steepness ratio {exact:.6f} (exp approximation {approx:.6f})", file=out)
    print("  p    E[w|p]    E[w^2|p]", file=out)
    for pv, a, b in zip(np.linspace(0, 1, 11), e_w, e_w_sq):
        print(f"  {pv:.1f}  {a: .6f}  {b: .6f}", file=out)
    for m, v in mom.items():
        print(f"  {m}: mu_T {v.mu_T:.6f}  sigma_T^2 {v.sigma_T_sq:.6f}", file=out)
    return [csv, meta]


def cmd_pipeline_demo(cfg, out):
    rec = run_pipeline(cfg.dist, cfg.params, cfg.n, cfg.seed, cfg.alternatives)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    paths = list(rec.write(cfg.output_dir / "pipeline_demo.csv"))
    paths.append(_write_json(cfg.output_dir / "pipeline_demo_meta.json", cfg.metadata()))
    p = cfg.params
    print(f"pipeline-demo: n={cfg.n} seed={cfg.seed} {p.weight_map.label()}", file=out)
    print(f"step 1  {rec.item_author.size} items written ({p.l_w} per participant)", file=out)
    q = rec.review_scores[..., :6].mean(axis=(1, 2))
    print(f"step 2  {p.m} reviews per item; accepted {int(rec.item_accepted.sum())} "
          f"of {rec.item_author.size} (threshold {p.review_threshold:g}); "
          f"mean review quality {q.mean():.3f}", file=out)
    print(f"step 3  {p.l_a} items assigned per participant, balanced over difficulty terciles",
          file=out)
    print("step 4-6", file=out)
    print("   id      p  correct      s  s_bar        w  vote", file=out)
    correct = rec.answers.sum(axis=1)
    for i in range(rec.n):
        print(f"  {i:3d}  {rec.competence[i]:.3f}  {correct[i]:7d}  {rec.scores[i]:5.2f}  "
              f"{rec.s_bar[i]:.3f}  {rec.weights[i]: .4f}  {rec.votes[i]:4d}", file=out)
    totals = [rec.weights[rec.votes == a].sum() for a in range(rec.num_alternatives)]
    print("  weighted totals " + "  ".join(f"{a}: {t:.4f}" for a, t in enumerate(totals)),
          file=out)
    print(f"  winner {rec.winner} (truth {rec.truth}){'  tie broken at random' if rec.tie else ''}",
          file=out)
    print(f"  Herfindahl {rec.herfindahl:.5f}  Gini {rec.gini:.4f}", file=out)
    return paths


HANDLERS = {
    "scan-beta": cmd_scan, "scan-cmm": cmd_scan, "simulate": cmd_simulate,
    "validate": cmd_validate, "weights-report": cmd_weights_report,
    "pipeline-demo": cmd_pipeline_demo,
}


def run(cfg, out=None):
    out = out or sys.stdout
    try:
        HANDLERS[cfg.command](cfg, out)
    except (EscmError, ArithmeticError, OSError) as exc:
        print(f"error: command={cfg.command} type={type(exc).__name__} message={exc}",
              file=sys.stderr)
        return 1
    return 0


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_and_validate(argv)
    except UsageError as exc:
        print("usage error:", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
