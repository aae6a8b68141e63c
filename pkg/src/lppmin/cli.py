"""Command line experiment runner.

Subcommands map one-to-one onto the library's result areas: shape,
pointprocess, freepath, limitlaw, loops, variance, min-action, dump-path.
Each writes a delimited artifact (CSV or JSON), renders a matplotlib figure
next to it where a figure makes sense, and prints a short summary.

Outputs are deterministic: identical command line plus config file produce
byte-identical files.  Numbers are serialized with repr so no precision is
lost in round trips.

Exit codes: 0 success, 2 usage error, 3 budget truncation (artifact written,
marked truncated), 4 validation failure from `loops --validate`.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels, discrepancy, dp, figures, freepath, loopdecomp, shape
from .env import (EnvError, EnvParams, replica_seed, sample_environment,
                  sample_signs)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TRUNCATED = 3
EXIT_INVALID = 4


# ---------------------------------------------------------------------------
# Serialization helpers
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header: Sequence[str], rows, truncated: bool = False) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    if truncated:
        lines.append("# truncated")
    Path(path).write_text("\n".join(lines) + "\n")


def _json_default(o):
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default)


def _write_json(path, obj) -> None:
    Path(path).write_text(_dumps(obj) + "\n")


def _fig_path(out, svg: bool) -> Path:
    p = Path(out)
    return p.with_suffix(".svg" if svg else ".png")


def _parse_int_list(text: str) -> List[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _parse_float_list(text: str) -> List[float]:
    return [float(t) for t in text.split(",") if t.strip()]


# ---------------------------------------------------------------------------
# Config file plumbing
# ---------------------------------------------------------------------------

def _load_config(path) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    read = cfg.read(path)
    if not read:
        raise EnvError(f"config file {path} not found")
    return cfg


def _opt(args, cfg, section: str, name: str, cast, default):
    """Flag value if given, else config value, else default."""
    v = getattr(args, name.replace("-", "_"), None)
    if v is not None:
        return v
    if cfg is not None and cfg.has_option(section, name):
        raw = cfg.get(section, name)
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    return default


def _env_params(args, cfg) -> EnvParams:
    kappa = _opt(args, cfg, "env", "kappa", float, 0.0)
    c = _opt(args, cfg, "env", "c", float, 1.0)
    family = _opt(args, cfg, "env", "family", str,
                  "uniform" if kappa == 0.0 else "edge_power")
    seed = _opt(args, cfg, "env", "seed", int, 1)
    return EnvParams(kappa=kappa, c=c, family=family, seed=seed)


def _budget(args, cfg) -> Optional[dp.Budget]:
    cells = _opt(args, cfg, "run", "budget", int, None)
    return dp.Budget(cells) if cells else None


# ---------------------------------------------------------------------------
# Variance study across record edges (fixed F, fresh B)
# ---------------------------------------------------------------------------

@dataclass
class VarianceStudyResult:
    index: int
    x: int
    d: float
    mean: float
    variance: float
    b_replicas: int
    horizon: int


def variance_study(params: EnvParams, b_replicas: int,
                   record_count: Optional[int] = None,
                   max_x: Optional[int] = None,
                   budget: Optional[dp.Budget] = None
                   ) -> Tuple[List[VarianceStudyResult], bool]:
    """Variance over sign replicas of the best reach-the-edge action.

    One F realization is fixed by params.seed.  For each record edge
    (x_i, d_i) of the discrepancy over x >= 0 and each fresh sign sequence,
    the optimum over paths confined to [0, x_i + 1] of [reach {x_i, x_i+1}
    at some time m] + [edge-confined continuation on (m, horizon]] is
    computed; the row reports mean and variance over the sign replicas.
    Returns the rows and whether the budget cut the edge list short.

    Sign replicas are indexed by counters, so every edge sees the same sign
    values at shared times; differences across edges reflect the edge, not
    replica noise.  The horizon 4 x_i leaves the arrival time effectively
    unconstrained; the floor of 64 keeps the x = 0 edge nondegenerate.
    """
    if record_count is None and max_x is None:
        raise EnvError("need record_count or max_x")
    if b_replicas < 2:
        raise EnvError("need at least 2 sign replicas")
    span = int(max_x) if max_x is not None else 1024
    while True:
        env = sample_environment(params.with_window(0, span + 1).with_horizon(0))
        xs, ds = discrepancy.record_edges(env, span)
        if max_x is not None or len(xs) >= record_count:
            break
        span *= 2
    if record_count is not None:
        xs, ds = xs[:record_count], ds[:record_count]

    out: List[VarianceStudyResult] = []
    truncated = False
    for i, (x, d) in enumerate(zip(xs, ds)):
        x = int(x)
        horizon = max(4 * x, 64)
        if budget is not None:
            try:
                budget.guard(b_replicas * horizon * (x + 2), f"record edge {i}")
            except dp.BudgetExceeded:
                truncated = True
                break
        f_strip = env.f_slice(0, x + 1)
        vals = np.empty(b_replicas)
        for r in range(b_replicas):
            signs = sample_signs(replica_seed(params.seed, r), horizon).astype(np.float64)
            step_min = np.minimum(signs * f_strip[x], signs * f_strip[x + 1])
            suffix = np.concatenate([np.cumsum(step_min[::-1])[::-1], [0.0]])
            best, cells = _kernels.dp_strip_min_with_tail(f_strip, signs,
                                                          suffix, 0, x)
            if budget is not None:
                budget.charge(cells)
            vals[r] = best
        out.append(VarianceStudyResult(i, x, float(d), float(vals.mean()),
                                       float(vals.var(ddof=1)), b_replicas,
                                       horizon))
    return out, truncated


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def cmd_shape(args, cfg) -> int:
    params = _env_params(args, cfg)
    budget = _budget(args, cfg)
    ladder = _opt(args, cfg, "shape", "n-ladder", _parse_int_list,
                  [500, 1000, 2000, 4000])
    alphas = _opt(args, cfg, "shape", "alphas", _parse_float_list,
                  list(shape.default_alpha_grid()))
    replicas = _opt(args, cfg, "shape", "replicas", int, 200)
    out = _opt(args, cfg, "run", "out", str, "est.csv")

    est = shape.estimate_shape(params, alphas, ladder, replicas,
                               budget=budget, allow_truncation=True)
    _write_csv(out, ["alpha", "n", "lambda_hat", "stderr", "replicas"],
               est.rows(), truncated=est.truncated)
    figures.save_shape_figure(est, _fig_path(out, args.svg))

    corner = shape.check_corner(est, params)
    nl = shape.check_nonlinearity(est)
    fe = shape.detect_flat_edge(est)
    chain = shape.check_bounds_chain(est)
    s, s_se = shape.estimate_s_ci(est) if 0.0 in est.alphas and \
        sum(a > 0 for a in est.alphas) >= 2 else (float("nan"), float("nan"))
    print(f"shape: lambda_hat(0) = {est.lam(0.0):.6f} +- {est.se(0.0):.6f} "
          f"at n = {est.n_values[-1]}, {est.replicas} replicas")
    print(f"  corner: slope_right = {corner.slope_right:.4f}, "
          f"upper bound ok = {corner.ok}")
    print(f"  nonlinearity: min margin t = {nl.min_t:.2f} "
          f"(bias-adjusted {nl.min_t_adj:.2f}), ok = {nl.ok}")
    print(f"  flat edge: alpha0_hat = {fe.alpha0_hat:.4f}, "
          f"K_hat = {fe.K_hat:.4f}, slope_hat = {fe.slope_hat:.4f}")
    print(f"  bounds chain ok = {chain.ok} (bias0 = {chain.bias0:.4f})")
    print(f"  s_hat = {s:.4f} +- {s_se:.4f}")
    if est.truncated:
        print("  TRUNCATED: budget exhausted before all replicas")
        return EXIT_TRUNCATED
    return EXIT_OK


def _parse_rect(text: str):
    parts = [float(t) for t in text.split(",")]
    if len(parts) != 4:
        raise EnvError(f"rectangle needs a1,a2,b1,b2: {text!r}")
    return tuple(parts)


def cmd_pointprocess(args, cfg) -> int:
    params = _env_params(args, cfg)
    n = _opt(args, cfg, "pointprocess", "n", int, 10000)
    replicas = _opt(args, cfg, "pointprocess", "replicas", int, 200)
    out = _opt(args, cfg, "run", "out", str, "pp.json")
    if args.rect:
        rects = [_parse_rect(r) for r in args.rect]
    elif cfg is not None and cfg.has_option("pointprocess", "rectangles"):
        rects = [_parse_rect(r) for r in
                 cfg.get("pointprocess", "rectangles").split(";") if r.strip()]
    else:
        rects = discrepancy.default_rectangles(params)

    a_max = max(max(abs(r[0]), abs(r[1])) for r in rects)
    lo, hi = discrepancy.view_window(params, n, a_max)
    env0 = sample_environment(
        params.with_seed(replica_seed(params.seed, 0)).with_window(lo, hi).with_horizon(0))
    cloud = discrepancy.rescale_cloud(env0, n)
    comp = discrepancy.poisson_compare(cloud, rects, replicas)

    entries = []
    for st in comp.stats:
        entries.append({
            "rectangle": list(st.rect),
            "lambda": st.lam,
            "mean": st.mean,
            "var": st.var,
            "avoid_emp": st.avoid_emp,
            "avoid_theory": st.avoid_theory,
            "z": st.z_mean,
            "z_avoid": st.z_avoid,
        })
    _write_json(out, {"kappa": params.kappa, "c": params.c, "n": n,
                      "replicas": replicas, "rectangles": entries})
    figures.save_cloud_figure(cloud, rects, _fig_path(out, args.svg))
    print(f"pointprocess: n = {n}, {replicas} replicas, {len(rects)} rectangles")
    for st in comp.stats:
        print(f"  rect {st.rect}: lambda = {st.lam:.4f}, mean = {st.mean:.4f} "
              f"(z = {st.z_mean:+.2f}), avoid = {st.avoid_emp:.4f} "
              f"vs {st.avoid_theory:.4f} (z = {st.z_avoid:+.2f})")
    print(f"  mean ok = {comp.ok_mean}, avoidance ok = {comp.ok_avoid}")
    return EXIT_OK


def cmd_freepath(args, cfg) -> int:
    params = _env_params(args, cfg)
    budget = _budget(args, cfg)
    n_grid = _opt(args, cfg, "freepath", "n-grid", _parse_int_list,
                  [1000, 3000, 10000])
    replicas = _opt(args, cfg, "freepath", "replicas", int, 50)
    out = _opt(args, cfg, "run", "out", str, "fp.csv")

    ensembles = {}
    truncated = False
    rows = []
    for n in n_grid:
        ens = freepath.run_free_ensemble(params, n, replicas, budget=budget)
        ensembles[n] = ens
        truncated = truncated or ens.truncated
        for r in range(len(ens.action)):
            rows.append((n, int(ens.ell[r]), float(ens.d[r]), int(ens.tau[r]),
                         bool(ens.settled[r]), float(ens.action[r])))
    _write_csv(out, ["n", "ell", "d", "tau", "settled", "action"], rows,
               truncated=truncated)

    print(f"freepath: grid {n_grid}, {replicas} replicas per n")
    for n in n_grid:
        ens = ensembles[n]
        if len(ens.action) == 0:
            continue
        print(f"  n = {n}: median |ell| = {np.median(np.abs(ens.ell)):.1f}, "
              f"median d = {np.median(ens.d):.5f}, "
              f"settled = {ens.settled_fraction:.3f}")
    try:
        rep = freepath.scaling_regression(params, n_grid, replicas,
                                          ensembles=ensembles)
        print(f"  slopes: |ell| {rep.slope_ell:+.4f}, d {rep.slope_d:+.4f}, "
              f"cn+A {rep.slope_action:+.4f} (zeta = {rep.zeta:.4f})")
        figures.save_scaling_figure(rep, _fig_path(out, args.svg))
    except EnvError as exc:
        print(f"  regression skipped: {exc}")
    if truncated:
        print("  TRUNCATED: budget exhausted before all replicas")
        return EXIT_TRUNCATED
    return EXIT_OK


def cmd_limitlaw(args, cfg) -> int:
    params = _env_params(args, cfg)
    budget = _budget(args, cfg)
    n = _opt(args, cfg, "limitlaw", "n", int, 10000)
    replicas = _opt(args, cfg, "limitlaw", "replicas", int, 100)
    s_raw = _opt(args, cfg, "limitlaw", "s", str, "auto")
    out = _opt(args, cfg, "run", "out", str, "ll.json")

    if s_raw == "auto":
        est = shape.estimate_shape(params, [0.0, 0.05, 0.1],
                                   [250, 500, 1000, 2000], 64, budget=budget,
                                   allow_truncation=True)
        s_source = shape.estimate_s_ci(est)
        s_note = f"auto ({s_source[0]:.4f} +- {s_source[1]:.4f})"
    else:
        s_source = float(s_raw)
        s_note = f"fixed {s_source:.4f}"

    rep = freepath.limit_law_test(params, n, replicas, s_source, budget=budget)
    ens_truncated = rep.replicas < replicas
    _write_json(out, {
        "n": rep.n, "replicas": rep.replicas, "s": rep.s, "s_se": rep.s_se,
        "h": rep.h, "h_lo": rep.h_lo, "h_hi": rep.h_hi, "ks": rep.ks,
        "quantiles": [list(qq) for qq in rep.quantiles],
        "tau_diag": {str(m): v for m, v in rep.tau_diags.items()},
        "settled_fraction": rep.settled_fraction,
        "a2_fraction": rep.a2_fraction,
        "truncated": ens_truncated,
    })
    figures.save_limitlaw_figure(rep, params.kappa, _fig_path(out, args.svg))
    print(f"limitlaw: n = {n}, {rep.replicas} replicas, s {s_note}")
    print(f"  h = {rep.h:.4f} [{rep.h_lo:.4f}, {rep.h_hi:.4f}], KS = {rep.ks:.4f}")
    print(f"  tau diagnostics: " +
          ", ".join(f"P(tau<{m}|ell|) = {v:.3f}" for m, v in rep.tau_diags.items()))
    print(f"  settled = {rep.settled_fraction:.3f}, "
          f"event fraction = {rep.a2_fraction:.3f}")
    if ens_truncated:
        print("  TRUNCATED: budget exhausted before all replicas")
        return EXIT_TRUNCATED
    return EXIT_OK


def cmd_loops(args, cfg) -> int:
    params = _env_params(args, cfg)
    budget = _budget(args, cfg)
    n = _opt(args, cfg, "loops", "n", int, 200)
    ell = _opt(args, cfg, "loops", "ell", int, 3)
    out = _opt(args, cfg, "run", "out", str, None)

    ln = ell * n
    p = params.with_window(-ln - 2, ln + 2).with_horizon(ln)
    env = sample_environment(p)
    dec = loopdecomp.minimizer_decomposition(env, n, ell, budget=budget)
    nonempty = int(np.sum(dec.loop_len > 0))
    print(f"loops: n = {n}, ell = {ell}, action = {dec.action:.6f}")
    print(f"  {nonempty} nonempty loops, removed {int(dec.loop_len.sum())} "
          f"of {ln} times, sum e = {int(dec.e.sum())}")

    status = EXIT_OK
    payload = {"n": n, "ell": ell, "action": dec.action,
               "loops_nonempty": nonempty,
               "removed": int(dec.loop_len.sum()), "sum_e": int(dec.e.sum())}
    if args.validate:
        rep = loopdecomp.validate(dec, budget=budget)
        print(rep)
        payload["items"] = [{"label": c.label, "ok": c.ok, "detail": c.detail}
                            for c in rep.checks]
        payload["ok"] = rep.ok
        if not rep.ok:
            status = EXIT_INVALID
    if out:
        _write_json(out, payload)
    return status


def cmd_variance(args, cfg) -> int:
    params = _env_params(args, cfg)
    budget = _budget(args, cfg)
    records = _opt(args, cfg, "variance", "records", int, None)
    max_x = _opt(args, cfg, "variance", "max-x", int, None)
    b_replicas = _opt(args, cfg, "variance", "b-replicas", int, 100)
    out = _opt(args, cfg, "run", "out", str, "var.csv")
    if records is None and max_x is None:
        max_x = 2000

    rows, truncated = variance_study(params, b_replicas, record_count=records,
                                     max_x=max_x, budget=budget)
    _write_csv(out, ["i", "x", "d", "mean", "variance", "b_replicas", "horizon"],
               ((r.index, r.x, r.d, r.mean, r.variance, r.b_replicas, r.horizon)
                for r in rows), truncated=truncated)
    figures.save_variance_figure(rows, _fig_path(out, args.svg))
    print(f"variance: {len(rows)} record edges, {b_replicas} sign replicas each")
    for r in rows:
        print(f"  edge {r.index}: x = {r.x}, d = {r.d:.5f}, "
              f"var = {r.variance:.5f}")
    if truncated:
        print("  TRUNCATED: budget exhausted before all edges")
        return EXIT_TRUNCATED
    return EXIT_OK


def cmd_min_action(args, cfg) -> int:
    params = _env_params(args, cfg)
    budget = _budget(args, cfg)
    n = _opt(args, cfg, "min-action", "n", int, None)
    if n is None:
        raise EnvError("min-action needs --n")
    k = args.k
    out = _opt(args, cfg, "run", "out", str, None)

    p = params.with_window(-n, n).with_horizon(n)
    env = sample_environment(p)
    res = dp.optimal_path(env, n, endpoint=k, budget=budget)
    payload = {"value": res.value, "endpoint": res.endpoint,
               "unique": res.unique, "n": n}
    if args.with_path:
        payload["path"] = [int(x) for x in res.path.positions]
    if args.dump_table:
        table = dp.build_table(env, n, budget=budget)
        table.save(args.dump_table)
        payload["table"] = str(args.dump_table)
    text = _dumps(payload)
    if out:
        Path(out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_dump_path(args, cfg) -> int:
    params = _env_params(args, cfg)
    budget = _budget(args, cfg)
    n = _opt(args, cfg, "dump-path", "n", int, None)
    if n is None:
        raise EnvError("dump-path needs --n")
    out = _opt(args, cfg, "run", "out", str, "path.csv")

    p = params.with_window(-n, n).with_horizon(n)
    env = sample_environment(p)
    res = dp.optimal_path(env, n, endpoint=args.k, budget=budget)
    rows = [(t, int(x)) for t, x in enumerate(res.path.positions)]
    _write_csv(out, ["t", "x"], rows)
    print(f"dump-path: n = {n}, endpoint = {res.endpoint}, "
          f"value = {res.value:.6f}, unique = {res.unique}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="master seed (default 1)")
    common.add_argument("--threads", type=int, default=None,
                        help="accepted for interface stability; execution is "
                             "sequential and deterministic")
    common.add_argument("--budget", type=int, default=None,
                        help="max DP cell updates before truncation")
    common.add_argument("--out", type=str, default=None,
                        help="primary artifact path")
    common.add_argument("--config", type=str, default=None,
                        help="key=value config file with [env] and per-command blocks")
    common.add_argument("--svg", action="store_true",
                        help="render figures as SVG instead of PNG")
    common.add_argument("--kappa", type=float, default=None)
    common.add_argument("--c", type=float, default=None)
    common.add_argument("--family", type=str, default=None,
                        choices=["uniform", "edge_power", "custom_table"])

    ap = argparse.ArgumentParser(prog="lppmin",
                                 description="minimal-action lattice path experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("shape", parents=[common],
                       help="estimate the shape function on an alpha grid")
    p.add_argument("--n-ladder", type=_parse_int_list, default=None)
    p.add_argument("--alphas", type=_parse_float_list, default=None)
    p.add_argument("--replicas", type=int, default=None)
    p.set_defaults(handler=cmd_shape)

    p = sub.add_parser("pointprocess", parents=[common],
                       help="rescaled discrepancy cloud vs Poisson rectangles")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--rect", action="append", default=None,
                   metavar="a1,a2,b1,b2")
    p.set_defaults(handler=cmd_pointprocess)

    p = sub.add_parser("freepath", parents=[common],
                       help="free-endpoint optimizer statistics over an n grid")
    p.add_argument("--n-grid", type=_parse_int_list, default=None)
    p.add_argument("--replicas", type=int, default=None)
    p.set_defaults(handler=cmd_freepath)

    p = sub.add_parser("limitlaw", parents=[common],
                       help="rescaled excess action against the limit law")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--s", type=str, default=None,
                   help="slope magnitude -Lambda'(0+): a number or 'auto'")
    p.set_defaults(handler=cmd_limitlaw)

    p = sub.add_parser("loops", parents=[common],
                       help="loop decomposition of a point-to-point minimizer")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--ell", type=int, default=None)
    p.add_argument("--validate", action="store_true",
                   help="check every decomposition item and print the table")
    p.set_defaults(handler=cmd_loops)

    p = sub.add_parser("variance", parents=[common],
                       help="variance of the edge-arrival action across record edges")
    p.add_argument("--records", type=int, default=None)
    p.add_argument("--max-x", type=int, default=None)
    p.add_argument("--b-replicas", type=int, default=None)
    p.set_defaults(handler=cmd_variance)

    p = sub.add_parser("min-action", parents=[common],
                       help="single minimal action value and optimal path")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--k", type=int, default=None,
                   help="endpoint; omitted means free (argmin)")
    p.add_argument("--with-path", action="store_true")
    p.add_argument("--dump-table", type=str, default=None,
                   help="write the dense table as a binary file")
    p.set_defaults(handler=cmd_min_action)

    p = sub.add_parser("dump-path", parents=[common],
                       help="write one optimal path as CSV rows t,x")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(handler=cmd_dump_path)

    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    cfg = None
    if args.config:
        try:
            cfg = _load_config(args.config)
        except EnvError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.handler(args, cfg)
    except (EnvError, dp.BudgetExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
