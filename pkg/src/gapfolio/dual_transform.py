"""Recover the primal value function and feedback policy from ``w``.

The chain runs ``w -> u -> v -> V``:

* ``u(y, t) = w(ln y, T - t)`` and ``u_y = w_z / y``;
* ``v(y, t) = -int_0^y u(xi, t) dxi`` (so ``v_y = -u``);
* ``V(x, t) = sup_y (v(y, t) - x y)`` attained at ``y = J(x, t)``, the root of
  ``-u(y, t) = x``.

Between grid nodes ``u`` and ``w_z`` are interpolated linearly in ``z = ln y``.
``v`` integrates that interpolant exactly plus a curvature correction built
from the nodal ``w_z``, which lifts the quadrature from second to fourth
order. Partial cells carry the matching share of the correction, so ``V``
stays continuous across nodes. Below the first
node ``u`` is taken linear in ``y`` towards its known limit ``-e^{-r1 tau} d``
at ``y = 0``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace

import numpy as np

from .errors import NotBracketed, OutOfRange, TailTooFat, ValidationError
from .market import DerivedConstants, MarketParams
from .pde_core import WSolution


@dataclass(frozen=True, eq=False)
class DualSurface:
    """Dual quantities on the solver grid, rows indexed by time-to-go ``s``."""

    z: np.ndarray
    s: np.ndarray
    u: np.ndarray
    u_y: np.ndarray
    w_z: np.ndarray
    params: MarketParams
    constants: DerivedConstants
    v: np.ndarray | None = None
    tail_tol: float | None = None

    @property
    def y(self) -> np.ndarray:
        return np.exp(self.z)

    @property
    def t(self) -> np.ndarray:
        return self.params.T - self.s

    @property
    def dz(self) -> float:
        return float(self.z[1] - self.z[0])

    @property
    def v_y(self) -> np.ndarray:
        return -self.u

    @property
    def v_yy(self) -> np.ndarray:
        return -self.u_y

    def u_limit(self, j):
        """``lim_{y -> 0+} u`` at level ``j``."""
        return -np.exp(-self.params.r1 * self.s[j]) * self.params.d


def build_u(sol: WSolution) -> DualSurface:
    z = sol.z
    return DualSurface(z=z, s=sol.s, u=sol.w, u_y=sol.w_z * np.exp(-z)[None, :],
                       w_z=sol.w_z, params=sol.params, constants=sol.constants)


def _curvature_share(wz0, wz1, z0, dz, frac):
    """Correction to ``int e^z u dz`` from ``z0`` to ``z0 + frac dz``.

    ``u - L ~ u''/2 (z - z0)(z - z1)`` for the cell chord ``L``, with ``u''``
    taken from the nodal ``w_z``. At ``frac = 1`` this is ``-u'' e^{zm} dz^3 / 12``.
    """
    return 0.5 * (wz1 - wz0) * dz * dz * (frac**3 / 3 - frac**2 / 2) * np.exp(z0 + 0.5 * frac * dz)


def _cell_integrals(z, u, w_z):
    """``int e^z u dz`` over each cell (rows = levels), fourth order."""
    dz = z[1] - z[0]
    slope = (u[:, 1:] - u[:, :-1]) / dz
    ez = np.exp(z)
    chord = ez[None, 1:] * (u[:, 1:] - slope) - ez[None, :-1] * (u[:, :-1] - slope)
    return chord + _curvature_share(w_z[:, :-1], w_z[:, 1:], z[None, :-1], dz, 1.0)


def build_v(ds: DualSurface, tail_tol: float | None = None) -> DualSurface:
    """Integrate ``-u`` from ``y = 0`` to every node.

    The piece below the first node uses the trapezoid between the first node
    and the exact limit of ``u`` at ``y = 0``. Raises :class:`TailTooFat`
    when the first node is not yet close to that limit.
    """
    p = ds.params
    if tail_tol is None:
        tail_tol = 1e-4 * p.d
    u_lim = ds.u_limit(np.arange(ds.s.size))
    gap = np.abs(ds.u[:, 0] - u_lim)
    if np.any(gap > tail_tol):
        j = int(np.argmax(gap))
        raise TailTooFat(
            f"|u(y_min) - u(0+)| = {gap[j]:.3e} > {tail_tol:.3e} at s={ds.s[j]:.4g}; "
            "extend the grid to the left")
    y_min = np.exp(ds.z[0])
    v = np.empty_like(ds.u)
    v[:, 0] = -0.5 * y_min * (ds.u[:, 0] + u_lim)
    v[:, 1:] = v[:, :1] - np.cumsum(_cell_integrals(ds.z, ds.u, ds.w_z), axis=1)
    return replace(ds, v=v, tail_tol=tail_tol)


def dual_surface(sol: WSolution, tail_tol: float | None = None) -> DualSurface:
    return build_v(build_u(sol), tail_tol)


@dataclass(frozen=True)
class LegendrePoint:
    V: np.ndarray
    V_x: np.ndarray
    V_xx: np.ndarray
    J: np.ndarray
    rho: np.ndarray     # -V_x / V_xx = J u_y(J)


def _legendre_level(ds: DualSurface, j: int, x: np.ndarray, clip: bool):
    """Exact Legendre transform of the interpolated ``v`` at level ``j``."""
    p = ds.params
    u = ds.u[j]
    wz = ds.w_z[j]
    z = ds.z
    dz = ds.dz
    target = -ds.u_limit(j)
    if clip:
        x = np.minimum(x, target)
    elif np.any(x >= target):
        raise OutOfRange(f"x must be below the discounted target {target:.6g}")
    if np.any(x < -u[-1]):
        raise NotBracketed(
            f"x={np.min(x):.6g} lies left of the tabulated wealth range "
            f"(min {-u[-1]:.6g}); enlarge the grid to the right")

    q = -x                                  # solve u(z*) = q
    i = np.searchsorted(u, q, side="right") - 1
    V = np.empty_like(x)
    J = np.empty_like(x)
    uy = np.empty_like(x)
    rho = np.empty_like(x)

    tail = i < 0
    if np.any(tail):
        y_min = np.exp(z[0])
        u_lim = -target
        slope = (u[0] - u_lim) / y_min
        Jt = (q[tail] - u_lim) / slope
        J[tail] = Jt
        vt = -(u_lim * Jt + 0.5 * slope * Jt**2)
        V[tail] = vt - x[tail] * Jt
        uy[tail] = slope
        rho[tail] = Jt * slope

    body = ~tail
    if np.any(body):
        ib = np.minimum(i[body], z.size - 2)
        u0, u1 = u[ib], u[ib + 1]
        frac = (q[body] - u0) / (u1 - u0)
        zs = z[ib] + frac * dz
        Jb = np.exp(zs)
        m = (u1 - u0) / dz
        partial = Jb * (q[body] - m) - np.exp(z[ib]) * (u0 - m)
        partial = partial + _curvature_share(wz[ib], wz[ib + 1], z[ib], dz, frac)
        vb = ds.v[j, ib] - partial
        wz_s = wz[ib] + frac * (wz[ib + 1] - wz[ib])
        J[body] = Jb
        V[body] = vb - x[body] * Jb
        uy[body] = wz_s / Jb
        rho[body] = wz_s
    return V, J, uy, rho


def legendre_V(ds: DualSurface, x, t, clip: bool = False) -> LegendrePoint:
    """Evaluate ``V, V_x, V_xx, J`` at wealth ``x`` (array) and time ``t``.

    ``J`` is found by binary search over the monotone node values of ``u``
    followed by the exact root of the linear-in-``z`` interpolant in the
    bracketing cell. Off-level times are blended linearly between the two
    neighbouring solver levels. ``clip=True`` maps wealth at or beyond the
    discounted target to the boundary value ``V = 0`` instead of raising.
    """
    if ds.v is None:
        raise ValidationError("build_v must run before legendre_V")
    p = ds.params
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not 0.0 <= t <= p.T:
        raise OutOfRange(f"t={t} outside [0, {p.T}]")
    if not clip and np.any(x >= p.discounted_target(t)):
        raise OutOfRange(f"x must be below the discounted target {p.discounted_target(t):.6g}")
    s = p.T - t
    n = ds.s.size - 1
    pos = s / p.T * n
    j0 = min(int(np.floor(pos + 1e-12)), n)
    frac = pos - j0
    if frac < 1e-9 or j0 == n:
        V, J, uy, rho = _legendre_level(ds, j0, x, clip)
    else:
        # blend along lines of constant distance to the (moving) discounted target
        gap = p.discounted_target(t) - x
        a = _legendre_level(ds, j0, -ds.u_limit(j0) - gap, True)
        b = _legendre_level(ds, j0 + 1, -ds.u_limit(j0 + 1) - gap, True)
        V, J, uy, rho = ((1 - frac) * qa + frac * qb for qa, qb in zip(a, b))
    return LegendrePoint(V=V, V_x=-J, V_xx=1.0 / uy, J=J, rho=rho)


def value_bounds(p: MarketParams, c: DerivedConstants, x, t):
    """Closed-form lower/upper envelopes of ``V``.

    The lower envelope is ``sup_y (-e^{theta1 tau} y^2 / 4 + (e^{-r2 tau} d - x) y)``,
    which is zero once ``x`` exceeds ``e^{-r2 tau} d``.
    """
    x = np.asarray(x, dtype=float)
    tau = p.T - np.asarray(t, dtype=float)
    lo_gap = np.maximum(np.exp(-p.r2 * tau) * p.d - x, 0.0)
    hi_gap = np.exp(-p.r1 * tau) * p.d - x
    return np.exp(-c.theta1 * tau) * lo_gap**2, np.exp(-c.theta2 * tau) * hi_gap**2


BORROW, ALL_IN_STOCK, SAVE = "B", "N", "S"


def classify(rho, x, c: DerivedConstants):
    """Trading region from ``rho = -V_x/V_xx``: borrow if ``a2 rho > x``,
    save if ``a1 rho < x``, all-in-stock otherwise."""
    rho = np.asarray(rho, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.where(c.a2 * rho > x, BORROW, np.where(c.a1 * rho < x, SAVE, ALL_IN_STOCK))


def policy_from_rho(rho, x, c: DerivedConstants):
    rho = np.asarray(rho, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.where(c.a2 * rho > x, c.a2 * rho, np.where(c.a1 * rho < x, c.a1 * rho, x))


@dataclass(frozen=True, eq=False)
class ValueSurface:
    """``V`` and friends tabulated on a wealth grid at every solver level.

    Entries at or beyond the discounted target (or outside the tabulated
    range) are NaN.
    """

    x_grid: np.ndarray
    t_nodes: np.ndarray
    V: np.ndarray
    V_x: np.ndarray
    V_xx: np.ndarray
    J: np.ndarray
    pi_star: np.ndarray
    dual: DualSurface

    def to_csv(self, fh=None, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        buf.write("t,x,V,V_x,V_xx,pi_star\n")
        for k, t in enumerate(self.t_nodes):
            block = np.column_stack([np.full_like(self.x_grid, t), self.x_grid, self.V[k],
                                     self.V_x[k], self.V_xx[k], self.pi_star[k]])
            block = block[np.isfinite(block[:, 2])]
            np.savetxt(buf, block, delimiter=",", fmt="%.12g")
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def value_surface(ds: DualSurface, x_grid, t_nodes=None) -> ValueSurface:
    p = ds.params
    x_grid = np.asarray(x_grid, dtype=float)
    t_nodes = ds.t[::-1] if t_nodes is None else np.asarray(t_nodes, dtype=float)
    shape = (t_nodes.size, x_grid.size)
    out = {k: np.full(shape, np.nan) for k in ("V", "V_x", "V_xx", "J", "pi")}
    lowest = -ds.u[:, -1].max()
    for k, t in enumerate(t_nodes):
        ok = (x_grid < p.discounted_target(t)) & (x_grid >= lowest)
        if not np.any(ok):
            continue
        pt = legendre_V(ds, x_grid[ok], float(t))
        out["V"][k, ok] = pt.V
        out["V_x"][k, ok] = pt.V_x
        out["V_xx"][k, ok] = pt.V_xx
        out["J"][k, ok] = pt.J
        out["pi"][k, ok] = policy_from_rho(pt.rho, x_grid[ok], ds.constants)
    return ValueSurface(x_grid=x_grid, t_nodes=t_nodes, V=out["V"], V_x=out["V_x"],
                        V_xx=out["V_xx"], J=out["J"], pi_star=out["pi"], dual=ds)


def feedback_policy(surface, x, t, c: DerivedConstants | None = None, clip: bool = False):
    """Optimal dollar amount in the stock at ``(x, t)``.

    ``surface`` may be a :class:`DualSurface` or a :class:`ValueSurface`;
    ``rho`` always comes from the dual side as ``J u_y(J, t)``.
    """
    ds = surface.dual if isinstance(surface, ValueSurface) else surface
    c = ds.constants if c is None else c
    x = np.atleast_1d(np.asarray(x, dtype=float))
    pt = legendre_V(ds, x, t, clip=clip)
    return policy_from_rho(pt.rho, x, c)
