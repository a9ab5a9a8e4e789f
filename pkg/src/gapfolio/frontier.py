"""Efficient mean-variance frontier from the penalised value function.

For a penalty target ``d`` with value ``V(x, t; d)`` and sensitivity
``V_d = dV/dd``, the frontier point is

    z = d - V_d / 2,    std = sqrt(V - V_d^2 / 4).

Wealth dynamics are linear in ``(X, pi)``, so ``V(x, t; d) = d^2 V(x/d, t; 1)``.
One unit-target surface therefore serves every ``d``, and
``V_d = (2 V - x V_x) / d``.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass

import numpy as np

from .dual_transform import DualSurface, ValueSurface, dual_surface, legendre_V
from .errors import NegativeVarianceResidual, OutOfRange
from .market import MarketParams, validate_params
from .pde_core import Grid, SolverOptions, solve_w

log = logging.getLogger(__name__)


def _surface(p: MarketParams, g: Grid | None = None, eps: float = 1e-8,
             opts: SolverOptions | None = None) -> DualSurface:
    c = validate_params(p)
    return dual_surface(solve_w(c, p, g, eps, opts))


def _as_dual(vs) -> DualSurface:
    return vs.dual if isinstance(vs, ValueSurface) else vs


def value_sensitivity(vs: DualSurface | ValueSurface, x: float, t: float) -> float:
    """``V_d`` from the scaling identity: ``(2 V - x V_x) / d``."""
    ds = _as_dual(vs)
    pt = legendre_V(ds, x, t)
    return float((2.0 * pt.V[0] - x * pt.V_x[0]) / ds.params.d)


def value_sensitivity_fd(p: MarketParams, x: float, t: float, h: float = 1e-2,
                         g: Grid | None = None, eps: float = 1e-8) -> float:
    """Central difference ``(V(d(1+h)) - V(d(1-h))) / (2 h d)`` over two solves.

    Both solves share one absolute ``z`` grid so the estimate does not lean
    on the scaling identity it is meant to check.
    """
    lo, hi = p.replace(d=p.d * (1 - h)), p.replace(d=p.d * (1 + h))
    if g is None:
        g_lo, g_hi = Grid.default(lo), Grid.default(hi)
        g = Grid(g_lo.z_min, g_hi.z_max, g_lo.nz + int(round((g_hi.z_max - g_lo.z_max) / g_lo.dz)),
                 g_lo.ns)
    v_lo = legendre_V(_surface(lo, g, eps), x, t).V[0]
    v_hi = legendre_V(_surface(hi, g, eps), x, t).V[0]
    return float((v_hi - v_lo) / (2.0 * h * p.d))


def homogeneity_error(p: MarketParams, x, t: float, lam: float = 2.0, eps: float = 1e-8) -> float:
    """Max relative gap between ``V(lam x, t; lam d)`` and ``lam^2 V(x, t; d)``.

    The two solves use the same absolute ``z`` grid, so the comparison is a
    genuine check of the scaling law rather than of grid bookkeeping.
    """
    q = p.replace(d=p.d * lam)
    g_p, g_q = Grid.default(p), Grid.default(q)
    lo, hi = min(g_p.z_min, g_q.z_min), max(g_p.z_max, g_q.z_max)
    nz = int(round((hi - lo) / g_p.dz)) + 1
    g = Grid(lo, hi, nz, g_p.ns)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    v1 = legendre_V(_surface(p, g, eps), x, t).V
    v2 = legendre_V(_surface(q, g, eps), lam * x, t).V
    return float(np.max(np.abs(v2 - lam**2 * v1) / np.maximum(np.abs(lam**2 * v1), 1e-12)))


@dataclass(frozen=True)
class FrontierPoint:
    d: float
    V: float
    V_d: float
    z_mean: float
    std_dev: float
    flagged: bool = False


def default_d_grid(p: MarketParams, x: float, t: float, n: int = 25) -> np.ndarray:
    """``n`` log-spaced targets in ``[1.1, 8] x e^{r1 (T - t)}``."""
    anchor = x * math.exp(p.r1 * (p.T - t))
    if anchor <= 0:
        raise OutOfRange("the default d grid needs positive wealth; pass d_grid explicitly")
    return anchor * np.geomspace(1.1, 8.0, n)


def efficient_frontier(p: MarketParams, x: float, t: float, d_grid=None,
                       homogeneity: bool = True, validate: bool = False,
                       grid_kw: dict | None = None, eps: float = 1e-8, var_tol: float = 1e-6,
                       validate_tol: float = 5e-3) -> list[FrontierPoint]:
    """Frontier points ``(z, std)`` for each penalty target in ``d_grid``, sorted by ``z``.

    With ``homogeneity`` a single unit-target surface is rescaled; otherwise
    every ``d`` gets its own solve. ``validate`` first checks the scaling
    law at ``(x, t)`` and falls back to per-``d`` solves if it fails.
    A variance residual below ``-var_tol (1 + V)`` raises
    :class:`NegativeVarianceResidual`; smaller negative residuals are
    clipped to zero and flagged. ``grid_kw`` is passed to
    :meth:`Grid.default` for every solve, so grids follow the target.
    """
    grid_kw = grid_kw or {}
    validate_params(p)
    if not 0.0 <= t <= p.T:
        raise OutOfRange(f"t={t} outside [0, T]")
    d_grid = default_d_grid(p, x, t) if d_grid is None else np.asarray(d_grid, dtype=float)
    floor = x * math.exp(p.r1 * (p.T - t))
    if np.any(d_grid <= floor):
        raise OutOfRange(f"every d must exceed x e^(r1 (T - t)) = {floor:.6g}")

    if homogeneity and validate:
        err = homogeneity_error(p.replace(d=float(d_grid[0])), x, t, eps=eps)
        if err > validate_tol:
            log.warning("scaling check failed (rel err %.3g); solving per target", err)
            homogeneity = False

    if homogeneity:
        unit_p = p.replace(d=1.0)
        unit = _surface(unit_p, Grid.default(unit_p, **grid_kw), eps)
    points = []
    for d in map(float, d_grid):
        if homogeneity:
            pt = legendre_V(unit, x / d, t)
            V = d * d * float(pt.V[0])
            V_x = d * float(pt.V_x[0])
        else:
            q = p.replace(d=d)
            pt = legendre_V(_surface(q, Grid.default(q, **grid_kw), eps), x, t)
            V, V_x = float(pt.V[0]), float(pt.V_x[0])
        V_d = (2.0 * V - x * V_x) / d
        resid = V - 0.25 * V_d * V_d
        flagged = False
        if resid < 0:
            if resid < -var_tol * (1.0 + V):
                raise NegativeVarianceResidual(
                    f"V - V_d^2/4 = {resid:.3g} < 0 at d={d:.6g}")
            resid, flagged = 0.0, True
        points.append(FrontierPoint(d, V, V_d, d - 0.5 * V_d, math.sqrt(resid), flagged))
    points.sort(key=lambda q: q.z_mean)
    return points


def frontier_csv(points, fh=None, header_comment: str | None = None) -> str:
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    buf.write("d,V,V_d,z_mean,std_dev\n")
    for q in points:
        buf.write(f"{q.d:.12g},{q.V:.12g},{q.V_d:.12g},{q.z_mean:.12g},{q.std_dev:.12g}\n")
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text
