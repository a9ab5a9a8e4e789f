"""Command-line front end: ``gapfolio <subcommand> [options]``.

Every subcommand reads the same configuration layers (``--preset``,
``--config FILE``, repeated ``--set key=value``) and writes CSV tables and
SVG plots into ``--out``. Each CSV starts with a ``# config_hash=...``
comment line so outputs can be matched to their inputs.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import cache
from .config import PRESET_GROUPS, PRESETS, RunConfig, resolve
from .dual_transform import (DualSurface, classify, dual_surface, legendre_V,
                             policy_from_rho, value_bounds)
from .errors import CacheCorrupt, GapfolioError, NumericalError, OutOfRange, ValidationError
from .free_boundary import BoundaryCurves, extract_z_boundaries, map_to_wealth
from .frontier import efficient_frontier, frontier_csv
from .market import check_c1_conditions
from .pde_core import check_w_bounds
from .simulate import (OptimalPolicy, Policy, all_in_stock, classical_no_gap, constant_dollar,
                       simulate_policy, verify_value, zero_policy)
from .svg import LinePlot

log = logging.getLogger("gapfolio")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _out(cfg: RunConfig) -> Path:
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path: Path, text: str) -> None:
    # newline="" keeps byte-identical output across platforms
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def _tag(cfg: RunConfig, command: str) -> str:
    return f"config_hash={cfg.config_hash()} command={command}"


def _solution(cfg: RunConfig, args):
    sol, hit = cache.solve_cached(cfg.market, cfg.make_grid(), cfg.eps, cfg.solver_options(),
                                  use_cache=not args.no_cache)
    if hit:
        log.info("served from cache")
    return sol


def _surface(cfg: RunConfig, args) -> DualSurface:
    return dual_surface(_solution(cfg, args))


def _boundaries(cfg: RunConfig, args) -> BoundaryCurves:
    sol = _solution(cfg, args)
    return map_to_wealth(extract_z_boundaries(sol), dual_surface(sol))


def _boundary_plot(bc: BoundaryCurves, title: str) -> LinePlot:
    t = bc.t_nodes[::-1]
    plot = LinePlot(title=title, xlabel="t", ylabel="wealth")
    plot.add(t, bc.B[::-1], "B(t) borrow | no-trade")
    plot.add(t, bc.L[::-1], "L(t) no-trade | save")
    plot.add(t, bc.params.discounted_target(t), "discounted target", dashed=True)
    return plot


def cmd_solve(cfg: RunConfig, args) -> int:
    sol = _solution(cfg, args)
    out = _out(cfg)
    _write(out / "w_surface.csv", sol.to_csv(header_comment=_tag(cfg, "solve"),
                                             z_stride=args.z_stride, s_stride=args.s_stride))
    rep = check_w_bounds(sol, sol.constants, cfg.market, tol=1e-6, rtol=1e-6)
    c1 = check_c1_conditions(cfg.market)
    meta = {"config_hash": cfg.config_hash(), "config": cfg.as_dict(),
            "cache_key": cache.surface_key(cfg.market, sol.grid, cfg.eps, cfg.solver_options()),
            "grid": {"z_min": sol.grid.z_min, "z_max": sol.grid.z_max, "nz": sol.grid.nz,
                     "ns": sol.grid.ns, "dz": sol.grid.dz},
            "max_picard_iterations": int(sol.picard_iterations.max()),
            "bounds": {"checked": rep.n_checked, "violations": len(rep.violations),
                       "worst_margin": rep.worst_margin},
            "c1_conditions": {r.name: {"residual": r.residual, "passed": r.passed} for r in c1}}
    _write(out / "meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    status = "ok" if rep.ok else f"{len(rep.violations)} violations"
    margins = ", ".join(f"{k} {v:.3g}" for k, v in sorted(rep.worst_margin.items()))
    print(f"solve: {sol.grid.nz} x {sol.grid.ns + 1} nodes, max Picard {meta['max_picard_iterations']}, "
          f"w bounds {status} over {rep.n_checked} nodes (worst margins: {margins})")
    return EXIT_OK


def cmd_boundaries(cfg: RunConfig, args) -> int:
    sol = _solution(cfg, args)
    bc = map_to_wealth(extract_z_boundaries(sol), dual_surface(sol))
    out = _out(cfg)
    tag = _tag(cfg, "boundaries")
    _write(out / "boundaries_wealth.csv", bc.wealth_csv(header_comment=tag))
    _write(out / "boundaries_dual.csv", bc.dual_csv(sol.constants, header_comment=tag))
    p = cfg.market
    _boundary_plot(bc, f"r1={p.r1:g} r2={p.r2:g} mu={p.mu:g} sigma2={p.sigma2:g}").save(
        out / "boundaries.svg")
    print(f"boundaries: B(0)={bc.B[-1]:.6f} L(0)={bc.L[-1]:.6f} "
          f"B(T)={bc.B[0]:.6f} L(T)={bc.L[0]:.6f}")
    return EXIT_OK


def _point_table(ds: DualSurface, xs, ts, with_policy: bool):
    p, c = ds.params, ds.constants
    t_last = p.T - p.T / (ds.s.size - 1)
    rows = []
    for t in ts:
        for x in xs:
            try:
                pt = legendre_V(ds, x, t)
                vals = [float(pt.V[0]), float(pt.V_x[0]), float(pt.V_xx[0])]
                # the feedback rule is read just below T
                q = pt if t < p.T else legendre_V(ds, x, t_last)
                pi = float(policy_from_rho(q.rho, x, c)[0])
                region = str(classify(q.rho, x, c)[0])
                rows.append((t, x, *vals, pi, region, "ok"))
            except OutOfRange:
                rows.append((t, x, np.nan, np.nan, np.nan, np.nan, "", "out_of_range"))
    header = "t,x,V,V_x,V_xx,pi_star"
    header += ",pi_over_x,region,status" if with_policy else ",status"
    lines = [header]
    for t, x, V, Vx, Vxx, pi, region, status in rows:
        cells = [f"{t:.12g}", f"{x:.12g}", f"{V:.12g}", f"{Vx:.12g}", f"{Vxx:.12g}", f"{pi:.12g}"]
        if with_policy:
            ratio = pi / x if x != 0 and np.isfinite(pi) else np.nan
            cells += [f"{ratio:.12g}", region]
        cells.append(status)
        lines.append(",".join(cells))
    return lines, rows


def cmd_value(cfg: RunConfig, args, with_policy: bool = False) -> int:
    ds = _surface(cfg, args)
    p = cfg.market
    command = "policy" if with_policy else "value"
    lines, rows = _point_table(ds, _floats(args.x), _floats(args.t), with_policy)
    out = _out(cfg)
    _write(out / f"{command}.csv", f"# {_tag(cfg, command)}\n" + "\n".join(lines) + "\n")

    t_plot = [t for t in _floats(args.t) if t < p.T] or [0.0]
    if with_policy:
        ratio = LinePlot(title="optimal proportion", xlabel="x", ylabel="pi/x")
        amount = LinePlot(title="optimal portfolio", xlabel="x", ylabel="pi")
        for t in t_plot:
            xs = np.linspace(0.05, 0.995 * float(p.discounted_target(t)), 200)
            pi = policy_from_rho(legendre_V(ds, xs, t).rho, xs, ds.constants)
            ratio.add(xs, pi / xs, f"t={t:g}")
            amount.add(xs, pi, f"t={t:g}")
        ratio.save(out / "pi_over_x.svg")
        amount.save(out / "pi.svg")
    else:
        plot = LinePlot(title="value function", xlabel="x", ylabel="V")
        for t in t_plot:
            xs = np.linspace(-2.0, 0.995 * float(p.discounted_target(t)), 200)
            plot.add(xs, legendre_V(ds, xs, t).V, f"t={t:g}")
        plot.save(out / "value.svg")
    bad = sum(r[-1] != "ok" for r in rows)
    print(f"{command}: {len(rows) - bad} points evaluated, {bad} out of range")
    return EXIT_OK


def parse_policy(spec: str, cfg: RunConfig, ds: DualSurface | None) -> Policy:
    """``optimal``, ``all_in_stock``, ``zero``, ``classical_no_gap[:r]``, ``constant_dollar:c``."""
    name, _, arg = spec.strip().partition(":")
    if name == "optimal":
        return OptimalPolicy(ds)
    if name == "all_in_stock":
        return all_in_stock()
    if name == "zero":
        return zero_policy()
    if name == "classical_no_gap":
        return classical_no_gap(cfg.market, float(arg) if arg else cfg.market.r1)
    if name == "constant_dollar":
        return constant_dollar(float(arg) if arg else 1.0)
    raise ValidationError(f"unknown policy {spec!r}")


def cmd_simulate(cfg: RunConfig, args) -> int:
    specs = [s for s in args.policies.split(",") if s.strip()]
    ds = _surface(cfg, args) if any(s.startswith("optimal") for s in specs) else None
    out = _out(cfg)
    lines = [f"# {_tag(cfg, 'simulate')}",
             "policy,mean_sq_dev,std_err,n_paths,terminal_mean,terminal_var,terminal_min,"
             "terminal_max,min_pi,max_abs_pi,extrapolated_steps"]
    for spec in specs:
        pol = parse_policy(spec, cfg, ds)
        st = simulate_policy(pol, cfg.market, cfg.sim, keep_terminal=args.dump_terminal)
        lines.append(",".join([st.policy] + [f"{v:.10g}" for v in (
            st.mean_sq_dev, st.std_err, st.n_paths, st.terminal_mean, st.terminal_var,
            st.terminal_min, st.terminal_max, st.min_pi, st.max_abs_pi)] + [str(st.extrapolated_steps)]))
        print(f"{st.policy:<28s} E[(X_T-d)^2] = {st.mean_sq_dev:.6f} +/- {st.std_err:.6f}")
        if args.dump_terminal:
            safe = "".join(ch if ch.isalnum() or ch in "_-." else "_" for ch in st.policy)
            _write(out / f"terminal_{safe}.csv",
                   f"# {_tag(cfg, 'simulate')}\n" + st.terminal_csv())
    _write(out / "simulate.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args) -> int:
    ds = _surface(cfg, args)
    pols = [parse_policy(s, cfg, ds) for s in args.policies.split(",") if s.strip()]
    if not any(p.name == "optimal" for p in pols):
        pols.insert(0, OptimalPolicy(ds))
    rep = verify_value(ds, pols, cfg.market, cfg.sim)
    out = _out(cfg)
    _write(out / "verify.csv", rep.to_csv(header_comment=_tag(cfg, "verify")))
    print(rep)
    lo, hi = value_bounds(cfg.market, ds.constants, cfg.sim.x0, cfg.sim.t0)
    opt = next(r for r in rep.rows if r.policy == "optimal")
    inside = lo - 3 * opt.std_err <= opt.estimate <= hi + 3 * opt.std_err
    print(f"value bounds [{float(lo):.6f}, {float(hi):.6f}]: optimal estimate "
          f"{'inside' if inside else 'OUTSIDE'} (3 std_err slack)")
    if args.strict and rep.passed is False:
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_frontier(cfg: RunConfig, args) -> int:
    x, t = args.x0 if args.x0 is not None else cfg.sim.x0, args.t0 if args.t0 is not None else cfg.sim.t0
    d_grid = _floats(args.d_grid) if args.d_grid else None
    grid_kw = {k: v for k, v in cfg.grid.items() if k in ("left", "right", "nz", "steps_per_year")}
    pts = efficient_frontier(cfg.market, x, t, d_grid, homogeneity=not args.no_homogeneity,
                             grid_kw=grid_kw, eps=cfg.eps)
    out = _out(cfg)
    _write(out / "frontier.csv", frontier_csv(pts, header_comment=_tag(cfg, "frontier")))
    plot = LinePlot(title=f"efficient frontier from x={x:g}, t={t:g}", xlabel="std dev of X_T",
                    ylabel="mean of X_T")
    plot.add([q.std_dev for q in pts], [q.z_mean for q in pts], "frontier")
    plot.save(out / "frontier.svg")
    flagged = sum(q.flagged for q in pts)
    print(f"frontier: {len(pts)} points, z in [{pts[0].z_mean:.4f}, {pts[-1].z_mean:.4f}]"
          + (f", {flagged} clipped residuals" if flagged else ""))
    return EXIT_OK


def _sweep_members(args):
    if args.group:
        if args.group not in PRESET_GROUPS:
            raise ValidationError(f"unknown group {args.group!r}; choose from {sorted(PRESET_GROUPS)}")
        return [(name, name, []) for name in PRESET_GROUPS[args.group]]
    if args.vary:
        key, _, values = args.vary.partition("=")
        return [(f"{key.split('.')[-1]}={v}", None, [f"{key}={v}"]) for v in values.split(",") if v]
    raise ValidationError("sweep needs --group or --vary key=v1,v2,...")


def cmd_sweep(cfg: RunConfig, args) -> int:
    out = _out(cfg)
    members = _sweep_members(args)
    lines = [f"# {_tag(cfg, 'sweep')}", "label,t,B,L,discounted_target"]
    overlay = LinePlot(title="boundary sweep", xlabel="t", ylabel="wealth")
    widths = []
    for label, preset, extra in members:
        mcfg = resolve(args.config, preset or args.preset, list(args.set) + extra, str(out))
        bc = _boundaries(mcfg, args)
        _boundary_plot(bc, label).save(out / f"boundaries_{label.replace('=', '_')}.svg")
        t = bc.t_nodes[::-1]
        B, L = bc.B[::-1], bc.L[::-1]
        tgt = bc.params.discounted_target(t)
        lines += [f"{label},{a:.12g},{b:.12g},{c:.12g},{e:.12g}" for a, b, c, e in zip(t, B, L, tgt)]
        overlay.add(t, B, f"B {label}")
        overlay.add(t, L, f"L {label}", dashed=True)
        widths.append(float(np.mean(L - B)))
        print(f"{label:<14s} B(0)={B[0]:.4f} L(0)={L[0]:.4f} mean band width {widths[-1]:.4f}")
    _write(out / "sweep_boundaries.csv", "\n".join(lines) + "\n")
    overlay.save(out / "sweep.svg")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value or .json configuration file")
    common.add_argument("--preset", choices=sorted(PRESETS), help="figure parameter preset")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config entry (repeatable)")
    common.add_argument("--out", default=None, help="output directory (default: current)")
    common.add_argument("--no-cache", action="store_true", help="always re-solve")
    common.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="gapfolio",
                                     description="Mean-variance portfolios with a borrowing/saving rate gap")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", parents=[common], help="solve the dual PDE and cache the surface")
    sp.add_argument("--z-stride", type=int, default=10)
    sp.add_argument("--s-stride", type=int, default=10)

    sub.add_parser("boundaries", parents=[common], help="borrowing/saving boundaries")
    for name in ("policy", "value"):
        sp = sub.add_parser(name, parents=[common], help=f"tabulate {name} at points")
        sp.add_argument("--x", default="-2,0,1,2,3,4,5,6,7,8,9")
        sp.add_argument("--t", default="0,1,2,2.5,3")

    pol_help = "comma list: optimal, all_in_stock, zero, classical_no_gap[:r], constant_dollar:c"
    sp = sub.add_parser("simulate", parents=[common], help="Monte Carlo cost of policies")
    sp.add_argument("--policies", default="optimal,all_in_stock,zero", help=pol_help)
    sp.add_argument("--dump-terminal", action="store_true", help="write per-path terminal wealth")

    sp = sub.add_parser("verify", parents=[common], help="Monte Carlo check of V(x0, t0)")
    sp.add_argument("--policies", default="optimal,all_in_stock,zero", help=pol_help)
    sp.add_argument("--strict", action="store_true", help="exit 3 if verification fails")

    sp = sub.add_parser("frontier", parents=[common], help="efficient mean-variance frontier")
    sp.add_argument("--x0", type=float, default=None)
    sp.add_argument("--t0", type=float, default=None)
    sp.add_argument("--d-grid", default=None, help="comma list of penalty targets")
    sp.add_argument("--no-homogeneity", action="store_true", help="solve once per target")

    sp = sub.add_parser("sweep", parents=[common], help="boundaries across a parameter sweep")
    sp.add_argument("--group", help=f"one of {sorted(PRESET_GROUPS)}")
    sp.add_argument("--vary", help="KEY=v1,v2,... e.g. market.mu=0.2,0.3")
    return parser


COMMANDS = {
    "solve": cmd_solve,
    "boundaries": cmd_boundaries,
    "value": cmd_value,
    "policy": lambda cfg, args: cmd_value(cfg, args, with_policy=True),
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "frontier": cmd_frontier,
    "sweep": cmd_sweep,
}


_LIST_FLAGS = ("--x", "--t", "--x0", "--t0", "--d-grid")


def _glue_negative_lists(argv):
    """Turn ``--x -2,0,1`` into ``--x=-2,0,1`` so argparse does not read ``-2,0,1`` as a flag."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in _LIST_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            try:
                [float(v) for v in argv[i + 1].split(",")]
            except ValueError:
                out.append(tok)
                i += 1
                continue
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_glue_negative_lists(argv))
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        cfg = resolve(args.config, args.preset, args.set, args.out)
        return COMMANDS[args.command](cfg, args)
    except CacheCorrupt as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_IO
    except (ValidationError, OutOfRange) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_VALIDATION
    except NumericalError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except GapfolioError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
