"""Implicit finite-difference solver for the dual log-space PDE.

The unknown ``w(z, s)`` lives in log-dual space ``z = ln y`` and time-to-go
``s = T - t``. It satisfies the semi-linear parabolic equation

    w_s - 1/2 sigma2 A^2 w_zz + (mu - 1/2 sigma2 A^2 - sigma2 A) w_z
        + (mu - sigma2 A) w = 0,         w(z, 0) = e^z / 2 - d,

where ``A = clamp_A(w / (|w_z| + eps))`` switches between the borrowing
(``A = a2``), all-in-stock and saving (``A = a1``) regimes.

Each time step is backward Euler with the nonlinear coefficient frozen at
the previous Picard iterate, which leaves a tridiagonal linear system.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import GridTooSmall, PicardDivergence, ValidationError
from .market import DerivedConstants, MarketParams, clamp_A, validate_params

logger = logging.getLogger(__name__)

SCHEME_VERSION = "be-picard-expfit-1"
BOUNDARY_MODES = ("asymptotic", "truncated")


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[z_min, z_max] x [0, T]``."""

    z_min: float
    z_max: float
    nz: int
    ns: int

    def __post_init__(self):
        if not self.z_min < self.z_max:
            raise ValidationError(f"need z_min < z_max, got {self.z_min}, {self.z_max}")
        if self.nz < 3:
            raise ValidationError(f"need nz >= 3, got {self.nz}")
        if self.ns < 1:
            raise ValidationError(f"need ns >= 1, got {self.ns}")

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / (self.nz - 1)

    @property
    def z(self) -> np.ndarray:
        return np.linspace(self.z_min, self.z_max, self.nz)

    def s(self, T: float) -> np.ndarray:
        return np.linspace(0.0, T, self.ns + 1)

    @classmethod
    def default(cls, p: MarketParams, left: float = 14.0, right: float = 4.0,
                nz: int = 1801, steps_per_year: int = 200) -> "Grid":
        """Grid centred on ``ln(2d)``: 14 units to the left, 4 to the right."""
        z0 = float(np.log(2.0 * p.d))
        ns = max(1, int(round(steps_per_year * p.T)))
        return cls(z0 - left, z0 + right, nz, ns)

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.z_min, self.z_max, factor * (self.nz - 1) + 1, factor * self.ns)


@dataclass(frozen=True)
class SolverOptions:
    max_picard: int = 50
    picard_rtol: float = 1e-10
    boundary: str = "asymptotic"
    continuation: bool = False
    continuation_start: float = 1e-2
    continuation_steps: int = 7
    edge_margin: float = 1.0

    def __post_init__(self):
        if self.boundary not in BOUNDARY_MODES:
            raise ValidationError(f"boundary must be one of {BOUNDARY_MODES}")
        if self.max_picard < 1:
            raise ValidationError("max_picard must be >= 1")


@dataclass(frozen=True, eq=False)
class WSolution:
    grid: Grid
    params: MarketParams
    constants: DerivedConstants
    w: np.ndarray
    w_z: np.ndarray
    epsilon: float
    picard_iterations: np.ndarray
    residuals: np.ndarray
    boundary: str = "asymptotic"
    options: SolverOptions = field(default_factory=SolverOptions)

    @property
    def z(self) -> np.ndarray:
        return self.grid.z

    @property
    def s(self) -> np.ndarray:
        return self.grid.s(self.params.T)

    def to_csv(self, fh=None, header_comment: str | None = None,
               z_stride: int = 1, s_stride: int = 1) -> str:
        """Long-format CSV with columns ``z,s,w,w_z``, optionally thinned."""
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        buf.write("z,s,w,w_z\n")
        zi = np.arange(0, self.grid.nz, z_stride)
        z = self.z[zi]
        s_all = self.s
        for j in range(0, s_all.size, s_stride):
            block = np.column_stack([z, np.full_like(z, s_all[j]), self.w[j, zi], self.w_z[j, zi]])
            np.savetxt(buf, block, delimiter=",", fmt="%.12g")
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def initial_condition(z, d):
    return 0.5 * np.exp(z) - d


def boundary_data(p: MarketParams, c: DerivedConstants, z_min: float, z_max: float,
                  s: float, mode: str = "asymptotic"):
    """Return ``(g_left, g_right)`` for the conditions ``(w - w_z)(z_min) = g_left``
    and ``w_z(z_max) = g_right`` at time-to-go ``s``.

    ``"truncated"`` uses the truncated-problem data (borrowing rate on the left,
    ``theta1`` on the right). ``"asymptotic"`` matches the far-field behaviour
    of the untruncated solution (saving rate on the left, ``theta2`` on the
    right); both bracket the true solution between the same exponential
    barriers.
    """
    if mode == "truncated":
        return -np.exp(-p.r2 * s) * p.d, 0.5 * np.exp(c.theta1 * s + z_max)
    return -np.exp(-p.r1 * s) * p.d, 0.5 * np.exp(c.theta2 * s + z_max)


def _derivative(w, dz, g_left, g_right):
    wz = np.empty_like(w)
    wz[1:-1] = (w[2:] - w[:-2]) / (2.0 * dz)
    # edge derivatives follow from the boundary conditions themselves
    wz[0] = w[0] - g_left
    wz[-1] = g_right
    return wz


def regularized_A(w_val, wz_val, eps, c: DerivedConstants):
    """``clamp_A(w / (|w_z| + eps))``."""
    if eps <= 0:
        raise ValidationError("eps must be > 0")
    return clamp_A(np.asarray(w_val, dtype=float) / (np.abs(wz_val) + eps), c)


def _assemble(A, p, dz, ds, g_left, g_right):
    s2 = p.sigma2
    diff = 0.5 * s2 * A**2 / dz**2
    drift = (p.mu - 0.5 * s2 * A**2 - s2 * A)
    adv = drift / (2.0 * dz)
    react = p.mu - s2 * A
    # exponential fitting: the spatially constant mode decays exactly as exp(-react s)
    react_eff = np.expm1(react * ds) / ds

    n = A.size
    ab = np.zeros((3, n))
    diag = 1.0 / ds + react_eff + 2.0 * diff
    lower = -diff - adv          # coefficient of w[j-1] in row j
    upper = -diff + adv          # coefficient of w[j+1] in row j
    extra = np.zeros(n)

    # ghost node w[-1] = w[1] - 2 dz (w[0] - g_left)
    diag[0] += 2.0 * dz * (diff[0] + adv[0])
    upper[0] = -2.0 * diff[0]
    extra[0] = 2.0 * dz * (diff[0] + adv[0]) * g_left
    # ghost node w[n] = w[n-2] + 2 dz g_right
    lower[-1] = -2.0 * diff[-1]
    extra[-1] = 2.0 * dz * (diff[-1] - adv[-1]) * g_right

    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return ab, extra


def _picard_step(w_prev, p, c, grid, ds, s_new, eps, opts, guess):
    dz = grid.dz
    g_left, g_right = boundary_data(p, c, grid.z_min, grid.z_max, s_new, opts.boundary)
    rhs0 = w_prev / ds
    w_k = guess
    update = np.inf
    for it in range(1, opts.max_picard + 1):
        wz_k = _derivative(w_k, dz, g_left, g_right)
        A = regularized_A(w_k, wz_k, eps, c)
        ab, extra = _assemble(A, p, dz, ds, g_left, g_right)
        w_new = solve_banded((1, 1), ab, rhs0 + extra, check_finite=False)
        update = float(np.max(np.abs(w_new - w_k)))
        w_k = w_new
        if update <= opts.picard_rtol * (1.0 + float(np.max(np.abs(w_new)))):
            return w_k, it, update
    raise PicardDivergence(
        f"Picard iteration did not converge at s={s_new:.6g}: "
        f"last update {update:.3e} after {opts.max_picard} iterations")


def _check_grid_span(c: DerivedConstants, p: MarketParams, grid: Grid, margin: float):
    z0 = np.log(2.0 * p.d)
    b0 = z0 - np.log1p(c.a2)
    l0 = z0 - np.log1p(c.a1)
    if not (grid.z_min < l0 - margin and grid.z_max > b0 + margin):
        raise GridTooSmall(
            f"grid [{grid.z_min:.4g}, {grid.z_max:.4g}] must cover the initial "
            f"boundaries [{l0:.4g}, {b0:.4g}] with margin {margin}")


def _check_edges(w, wz, c: DerivedConstants, s):
    # the regime indicators must have the far-field sign at both edges
    I1_left = w[:, :3] + c.a1 * wz[:, :3]
    I2_right = w[:, -3:] + c.a2 * wz[:, -3:]
    bad_left = np.any(I1_left >= 0, axis=1)
    bad_right = np.any(I2_right <= 0, axis=1)
    if np.any(bad_left) or np.any(bad_right):
        j = int(np.argmax(bad_left | bad_right))
        raise GridTooSmall(f"free boundary reaches the truncation edge at s={s[j]:.4g}")


def solve_w(c: DerivedConstants, p: MarketParams, g: Grid | None = None, eps: float = 1e-8,
            opts: SolverOptions | None = None) -> WSolution:
    """Solve the truncated, regularized problem on ``g`` and return the surface."""
    if g is None:
        g = Grid.default(p)
    if opts is None:
        opts = SolverOptions()
    if not 0.0 < eps < 1.0:
        raise ValidationError(f"eps must lie in (0, 1), got {eps}")
    _check_grid_span(c, p, g, opts.edge_margin)

    z = g.z
    s = g.s(p.T)
    ds = p.T / g.ns
    w = np.empty((g.ns + 1, g.nz))
    wz = np.empty_like(w)
    w[0] = initial_condition(z, p.d)
    wz[0] = 0.5 * np.exp(z)
    iters = np.zeros(g.ns + 1, dtype=int)
    resid = np.zeros(g.ns + 1)

    if opts.continuation:
        eps_seq = np.geomspace(max(opts.continuation_start, eps), eps, opts.continuation_steps)
    else:
        eps_seq = np.array([eps])

    for n in range(g.ns):
        guess = w[n] if n == 0 else 2.0 * w[n] - w[n - 1]
        total = 0
        for e in eps_seq:
            guess, it, upd = _picard_step(w[n], p, c, g, ds, s[n + 1], e, opts, guess)
            total += it
        w[n + 1] = guess
        iters[n + 1] = total
        resid[n + 1] = upd
        gl, gr = boundary_data(p, c, g.z_min, g.z_max, s[n + 1], opts.boundary)
        wz[n + 1] = _derivative(w[n + 1], g.dz, gl, gr)

    _check_edges(w[1:], wz[1:], c, s[1:])
    logger.debug("solve_w: %d steps, max Picard iterations %d", g.ns, iters.max())
    return WSolution(grid=g, params=p, constants=c, w=w, w_z=wz, epsilon=eps,
                     picard_iterations=iters, residuals=resid, boundary=opts.boundary,
                     options=opts)


def solve(p: MarketParams, g: Grid | None = None, eps: float = 1e-8,
          opts: SolverOptions | None = None) -> WSolution:
    """Convenience wrapper: validate ``p`` and call :func:`solve_w`."""
    return solve_w(validate_params(p), p, g, eps, opts)


def w_envelopes(c: DerivedConstants, p: MarketParams, z, s):
    """Lower/upper envelopes for ``w`` and ``w_z`` on the broadcast ``(s, z)`` mesh."""
    z = np.asarray(z, dtype=float)
    s = np.asarray(s, dtype=float)
    ez = np.exp(z)
    w_lo = 0.5 * np.exp(c.theta2 * s) * ez - np.exp(-p.r1 * s) * p.d
    w_hi = 0.5 * np.exp(c.theta1 * s) * ez - np.exp(-p.r2 * s) * p.d
    wz_lo = 0.5 * np.exp(-c.kappa * s) * ez
    wz_hi = 0.5 * np.exp(c.k * s) * ez
    return w_lo, w_hi, wz_lo, wz_hi


@dataclass(frozen=True)
class BoundViolation:
    quantity: str        # "w" or "w_z"
    side: str            # "lower" or "upper"
    s_index: int
    z_index: int
    value: float
    bound: float
    margin: float        # signed distance past the bound (positive = violation)


@dataclass(frozen=True)
class BoundReport:
    violations: list
    n_checked: int
    worst_margin: dict

    @property
    def ok(self) -> bool:
        return not self.violations


def check_w_bounds(sol: WSolution, c: DerivedConstants, p: MarketParams,
                   tol: float = 0.0, rtol: float = 0.0) -> BoundReport:
    """Compare every node of ``sol`` against the exponential envelopes.

    A node violates a bound when it lies past it by more than
    ``tol + rtol * |value|``. ``worst_margin`` records the largest signed
    excess per check (negative means every node is strictly inside).
    """
    s = sol.s[:, None]
    z = sol.z[None, :]
    w_lo, w_hi, wz_lo, wz_hi = w_envelopes(c, p, z, s)
    checks = [
        ("w", "lower", w_lo - sol.w, sol.w, w_lo),
        ("w", "upper", sol.w - w_hi, sol.w, w_hi),
        ("w_z", "lower", wz_lo - sol.w_z, sol.w_z, wz_lo),
        ("w_z", "upper", sol.w_z - wz_hi, sol.w_z, wz_hi),
    ]
    violations = []
    worst = {}
    for qty, side, excess, value, bound in checks:
        allowed = tol + rtol * np.abs(value)
        worst[f"{qty}_{side}"] = float(np.max(excess - allowed))
        for j, i in zip(*np.nonzero(excess > allowed)):
            violations.append(BoundViolation(qty, side, int(j), int(i), float(value[j, i]),
                                             float(bound[j, i]), float(excess[j, i])))
    return BoundReport(violations=violations, n_checked=sol.w.size, worst_margin=worst)
