"""Borrowing and saving boundaries in dual log space and in wealth space.

In ``z`` the borrowing boundary ``b(s)`` is the last zero of
``I2 = w + a2 w_z`` and the saving boundary ``l(s)`` the first zero of
``I1 = w + a1 w_z``. Each indicator must cross zero exactly once per level.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .dual_transform import DualSurface
from .errors import BoundaryAtEdge, MultipleCrossings
from .market import DerivedConstants, MarketParams
from .pde_core import WSolution


@dataclass(frozen=True, eq=False)
class BoundaryCurves:
    s_nodes: np.ndarray
    b: np.ndarray
    l: np.ndarray
    params: MarketParams
    B: np.ndarray | None = None
    L: np.ndarray | None = None

    @property
    def t_nodes(self) -> np.ndarray:
        return self.params.T - self.s_nodes

    def wealth_csv(self, fh=None, header_comment: str | None = None) -> str:
        """CSV ``t,B,L,discounted_target`` in ascending ``t``."""
        order = np.argsort(self.t_nodes)
        t = self.t_nodes[order]
        block = np.column_stack([t, self.B[order], self.L[order], self.params.discounted_target(t)])
        return _write_csv(block, "t,B,L,discounted_target", fh, header_comment)

    def dual_csv(self, c: DerivedConstants, fh=None, header_comment: str | None = None) -> str:
        """CSV ``s,b,l,b_upper,l_lower`` (the ``s = 0`` row has no envelopes)."""
        env = boundary_envelopes(c, self.params, self.s_nodes)
        l_low = np.minimum(env.l_lower, env.l_lower_proof)
        block = np.column_stack([self.s_nodes, self.b, self.l, env.b_upper, l_low])
        return _write_csv(block, "s,b,l,b_upper,l_lower", fh, header_comment)


def _write_csv(block, header, fh, header_comment):
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    buf.write(header + "\n")
    np.savetxt(buf, block, delimiter=",", fmt="%.12g")
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def _single_crossing(indicator: np.ndarray, negative: np.ndarray, z: np.ndarray,
                     which: str, s: float, last: bool):
    flips = np.nonzero(negative[:-1] != negative[1:])[0]
    if flips.size != 1:
        raise MultipleCrossings(
            f"{which}: expected one sign change at s={s:.6g}, found {flips.size}")
    i = int(flips[0])
    if not negative[i]:
        raise MultipleCrossings(f"{which}: indicator increases through zero the wrong way at s={s:.6g}")
    lo, hi = indicator[i], indicator[i + 1]
    frac = 0.0 if hi == lo else -lo / (hi - lo)
    frac = min(max(frac, 0.0), 1.0)
    dz = z[1] - z[0]
    pos = z[i] + frac * dz
    if pos - z[0] < 2 * dz or z[-1] - pos < 2 * dz:
        raise BoundaryAtEdge(f"{which} boundary at z={pos:.6g} is within 2 dz of the grid edge")
    return pos


def extract_z_boundaries(sol: WSolution, c: DerivedConstants | None = None) -> BoundaryCurves:
    """Locate ``b(s)`` and ``l(s)`` at every solver level by linear refinement."""
    c = sol.constants if c is None else c
    z = sol.z
    s = sol.s
    b = np.empty(s.size)
    l = np.empty(s.size)
    for j in range(s.size):
        I2 = sol.w[j] + c.a2 * sol.w_z[j]
        I1 = sol.w[j] + c.a1 * sol.w_z[j]
        b[j] = _single_crossing(I2, I2 <= 0, z, "borrowing (I2)", s[j], last=True)
        l[j] = _single_crossing(I1, I1 < 0, z, "saving (I1)", s[j], last=False)
    return BoundaryCurves(s_nodes=s, b=b, l=l, params=sol.params)


def _interp_rows(values: np.ndarray, z: np.ndarray, zq: np.ndarray) -> np.ndarray:
    return np.array([np.interp(zq[j], z, values[j]) for j in range(values.shape[0])])


def map_to_wealth(bc: BoundaryCurves, ds: DualSurface) -> BoundaryCurves:
    """``B = -u(e^b)``, ``L = -u(e^l)`` with ``u`` interpolated linearly in ``z``."""
    if np.any(bc.b > ds.z[-1]) or np.any(bc.l < ds.z[0]):
        raise BoundaryAtEdge("boundary outside the dual grid")
    B = -_interp_rows(ds.u, ds.z, bc.b)
    L = -_interp_rows(ds.u, ds.z, bc.l)
    return BoundaryCurves(s_nodes=bc.s_nodes, b=bc.b, l=bc.l, params=bc.params, B=B, L=L)


@dataclass(frozen=True)
class Envelopes:
    b_upper: np.ndarray
    l_lower: np.ndarray
    l_lower_proof: np.ndarray


def boundary_envelopes(c: DerivedConstants, p: MarketParams, s) -> Envelopes:
    """Closed-form envelopes: ``b(s) < b_upper(s)`` and ``l(s) >= l_lower(s)``.

    ``l_lower`` is built from ``(theta2, r1, k)``; ``l_lower_proof`` from
    ``(theta1, r2, k)``. Callers compare against the smaller of the two.
    """
    s = np.asarray(s, dtype=float)
    z0 = np.log(2.0 * p.d)
    b_upper = z0 - (p.r1 + c.theta2) * s
    l_lower = z0 - np.log(c.a1 + np.exp((c.theta2 - c.k) * s)) - (p.r1 + c.k) * s
    l_lower_proof = z0 - np.log(c.a1 + np.exp((c.theta1 - c.k) * s)) - (p.r2 + c.k) * s
    return Envelopes(b_upper, l_lower, l_lower_proof)


def initial_limits(c: DerivedConstants, p: MarketParams):
    """``(b(0+), l(0+)) = (ln 2d - ln(1 + a2), ln 2d - ln(1 + a1))``."""
    z0 = np.log(2.0 * p.d)
    return z0 - np.log1p(c.a2), z0 - np.log1p(c.a1)


def terminal_wealth_boundaries(c: DerivedConstants, p: MarketParams):
    """``(B(T), L(T)) = (a2 d / (1 + a2), a1 d / (1 + a1))``."""
    return c.a2 * p.d / (1.0 + c.a2), c.a1 * p.d / (1.0 + c.a1)


def slope_jumps(bc: BoundaryCurves, skip: int = 5):
    """Largest change in finite-difference slope of ``b`` and ``l`` between
    adjacent intervals, ignoring the first ``skip`` levels near ``s = 0``.

    Only a plausibility diagnostic for the C^1 regime.
    """
    ds = np.diff(bc.s_nodes)
    out = {}
    for name, curve in (("b", bc.b), ("l", bc.l)):
        slope = np.diff(curve) / ds
        out[name] = float(np.max(np.abs(np.diff(slope[skip:])))) if slope.size > skip + 1 else 0.0
    return out
