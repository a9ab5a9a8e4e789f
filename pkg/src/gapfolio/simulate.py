"""Monte Carlo evaluation of feedback policies under the two-rate wealth SDE.

The wealth process is

    dX = [(r1 1{X > pi} + r2 1{X < pi}) (X - pi) + mu pi] dt + sigma pi dW,

discretised by Euler-Maruyama. Random numbers are generated in fixed-size
blocks of paths, each block seeded from ``(seed, block_index)`` through
:class:`numpy.random.SeedSequence` and a Philox generator. A path's noise
therefore depends only on the seed and its index, independent of how blocks
are scheduled.
"""

from __future__ import annotations

import io
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dual_transform import DualSurface, ValueSurface, legendre_V, policy_from_rho
from .errors import OutOfRange, PolicyEvaluationFailure, ValidationError
from .market import MarketParams, validate_params

BLOCK_SIZE = 8192


@dataclass
class Policy:
    """A named feedback rule ``(x, t) -> pi`` evaluated on arrays of wealth."""

    name: str
    rule: Callable[[np.ndarray, float], np.ndarray]
    extrapolated: int = field(default=0, compare=False)

    def __call__(self, x, t):
        return self.rule(np.asarray(x, dtype=float), t)


def zero_policy() -> Policy:
    return Policy("zero", lambda x, t: np.zeros_like(x))


def all_in_stock() -> Policy:
    return Policy("all_in_stock", lambda x, t: x.copy())


def constant_dollar(amount: float) -> Policy:
    return Policy(f"constant_dollar({amount:g})", lambda x, t: np.full_like(x, amount))


def classical_no_gap(p: MarketParams, r: float) -> Policy:
    """The no-gap optimal rule ``a (e^{-r(T-t)} d - x)`` with ``a = (mu - r)/sigma2``."""
    a = (p.mu - r) / p.sigma2

    def rule(x, t):
        return a * (p.d * np.exp(-r * (p.T - t)) - x)

    return Policy(f"classical_no_gap({r:g})", rule)


class OptimalPolicy(Policy):
    """Tabulated optimal feedback built from a dual surface.

    At each solver level the wealth nodes are ``x_i = -u_i`` and
    ``rho_i = w_z,i``; ``rho`` is interpolated linearly in ``x`` (exactly
    the linear-in-``z`` interpolant) and closed by ``rho = 0`` at the
    discounted target. Wealth beyond the target gets ``rho = 0``; wealth left
    of the table extends ``rho`` linearly. Both cases are counted in
    ``extrapolated``.
    """

    def __init__(self, surface: DualSurface | ValueSurface):
        ds = surface.dual if isinstance(surface, ValueSurface) else surface
        super().__init__("optimal", self._rule)
        self.ds = ds
        self.c = ds.constants
        self.p = ds.params
        targets = -ds.u_limit(np.arange(ds.s.size))
        self._targets = targets
        self._x = np.concatenate([-ds.u[:, ::-1], targets[:, None]], axis=1)
        self._rho = np.concatenate([ds.w_z[:, ::-1], np.zeros((ds.s.size, 1))], axis=1)
        self.extrapolated = 0
        self._lock = threading.Lock()

    def _rho_level(self, j, xq):
        xs = self._x[j]
        rs = self._rho[j]
        rho = np.interp(xq, xs, rs, right=0.0)
        left = xq < xs[0]
        if np.any(left):
            slope = (rs[1] - rs[0]) / (xs[1] - xs[0])
            rho[left] = rs[0] + slope * (xq[left] - xs[0])
        hits = int(np.count_nonzero(left | (xq > xs[-1])))
        if hits:
            with self._lock:
                self.extrapolated += hits
        return rho

    def rho(self, x, t):
        p = self.p
        n = self.ds.s.size - 1
        pos = (p.T - t) / p.T * n
        j0 = min(max(int(math.floor(pos + 1e-12)), 0), n)
        frac = pos - j0
        gap = p.discounted_target(t) - x
        if frac < 1e-9 or j0 == n:
            return self._rho_level(j0, self._targets[j0] - gap)
        r0 = self._rho_level(j0, self._targets[j0] - gap)
        r1 = self._rho_level(j0 + 1, self._targets[j0 + 1] - gap)
        return (1 - frac) * r0 + frac * r1

    def _rule(self, x, t):
        return policy_from_rho(self.rho(x, t), x, self.c)


@dataclass(frozen=True)
class SimConfig:
    x0: float = 1.0
    t0: float = 0.0
    n_paths: int = 200_000
    n_steps: int = 600
    seed: int = 20240229
    antithetic: bool = False

    def check(self, p: MarketParams):
        if self.n_paths < 1 or self.n_steps < 1:
            raise ValidationError("n_paths and n_steps must be >= 1")
        if not 0.0 <= self.t0 < p.T:
            raise ValidationError(f"t0 must lie in [0, T), got {self.t0}")
        if not self.x0 * math.exp(p.r1 * (p.T - self.t0)) < p.d:
            raise ValidationError("x0 e^{r1 (T - t0)} must be below the target d")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class PathStats:
    policy: str
    mean_sq_dev: float
    std_err: float
    n_paths: int
    terminal_mean: float
    terminal_var: float
    terminal_min: float
    terminal_max: float
    min_pi: float
    max_abs_pi: float
    extrapolated_steps: int = 0
    terminal_wealth: np.ndarray | None = None

    def terminal_csv(self, fh=None) -> str:
        if self.terminal_wealth is None:
            raise ValidationError("simulate with keep_terminal=True to dump terminal wealth")
        buf = io.StringIO()
        buf.write("path,X_T\n")
        np.savetxt(buf, np.column_stack([np.arange(self.n_paths), self.terminal_wealth]),
                   delimiter=",", fmt=["%d", "%.12g"])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def _block_normals(seed: int, block: int, n_steps: int, size: int, antithetic: bool):
    """Row ``i`` holds the increments of path ``block * BLOCK_SIZE + i``.

    Rows are drawn in order, so a path's noise does not depend on how many
    paths follow it. Antithetic pairs are adjacent rows ``(2i, 2i + 1)``.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))
    if not antithetic:
        return rng.standard_normal((size, n_steps))
    half = (size + 1) // 2
    z = rng.standard_normal((half, n_steps))
    out = np.empty((2 * half, n_steps))
    out[0::2] = z
    out[1::2] = -z
    return out[:size]


def _run_block(pol: Policy, p: MarketParams, cfg: SimConfig, block: int, first: int, size: int):
    dt = (p.T - cfg.t0) / cfg.n_steps
    sq_dt = math.sqrt(dt)
    sigma = p.sigma
    # column-major so each time step reads contiguous memory
    noise = np.asfortranarray(_block_normals(cfg.seed, block, cfg.n_steps, size, cfg.antithetic))
    x = np.full(size, float(cfg.x0))
    min_pi = np.inf
    max_abs = np.zeros(size)
    for k in range(cfg.n_steps):
        t = cfg.t0 + k * dt
        try:
            pi = np.asarray(pol(x, t), dtype=float)
        except Exception as exc:  # noqa: BLE001 - re-raised with path context
            raise PolicyEvaluationFailure(f"policy {pol.name!r} failed at t={t:.6g}: {exc}",
                                          path_index=first) from exc
        bad = ~np.isfinite(pi)
        if np.any(bad):
            idx = first + int(np.argmax(bad))
            raise PolicyEvaluationFailure(
                f"policy {pol.name!r} returned a non-finite value at t={t:.6g}", path_index=idx)
        cash = x - pi
        rate = np.where(cash > 0, p.r1, np.where(cash < 0, p.r2, 0.0))
        x = x + (rate * cash + p.mu * pi) * dt + sigma * pi * sq_dt * noise[:, k]
        min_pi = min(min_pi, float(pi.min()))
        np.maximum(max_abs, np.abs(pi), out=max_abs)
    return x, min_pi, max_abs


def _std_err(values: np.ndarray) -> float:
    # shifting by one sample makes identical paths give exactly zero
    if values.size < 2:
        return 0.0
    return float(np.std(values - values[0], ddof=1) / math.sqrt(values.size))


def simulate_policy(pol: Policy, p: MarketParams, cfg: SimConfig, workers: int = 1,
                    keep_terminal: bool = False) -> PathStats:
    """Estimate ``E[(X_T - d)^2]`` for ``pol`` started at ``(cfg.x0, cfg.t0)``."""
    validate_params(p)
    cfg.check(p)
    starts = list(range(0, cfg.n_paths, BLOCK_SIZE))
    jobs = [(b, first, min(BLOCK_SIZE, cfg.n_paths - first)) for b, first in enumerate(starts)]
    if hasattr(pol, "extrapolated"):
        pol.extrapolated = 0
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(lambda job: _run_block(pol, p, cfg, *job), jobs))
    else:
        results = [_run_block(pol, p, cfg, *job) for job in jobs]

    xt = np.concatenate([r[0] for r in results])
    cost = (xt - p.d) ** 2
    n = cfg.n_paths
    mean = math.fsum(cost) / n
    if cfg.antithetic and n > 1:
        # adjacent paths form a pair; BLOCK_SIZE is even so pairs never straddle blocks
        m = n // 2 * 2
        pm = cost[:m].reshape(-1, 2).mean(axis=1)
        se = _std_err(np.concatenate([pm, cost[m:]]))
    else:
        se = _std_err(cost)
    return PathStats(
        policy=pol.name,
        mean_sq_dev=mean,
        std_err=se,
        n_paths=n,
        terminal_mean=math.fsum(xt) / n,
        terminal_var=float(np.var(xt - xt[0], ddof=1)) if n > 1 else 0.0,
        terminal_min=float(xt.min()),
        terminal_max=float(xt.max()),
        min_pi=min(r[1] for r in results),
        max_abs_pi=float(max(r[2].max() for r in results)),
        extrapolated_steps=int(getattr(pol, "extrapolated", 0)),
        terminal_wealth=xt if keep_terminal else None,
    )


def zero_policy_cost(p: MarketParams, x0: float, t0: float = 0.0) -> float:
    """Exact cost of holding no stock from positive wealth: ``(x0 e^{r1 tau} - d)^2``."""
    return (x0 * math.exp(p.r1 * (p.T - t0)) - p.d) ** 2


def all_in_stock_cost(p: MarketParams, x0: float, t0: float = 0.0) -> float:
    """Exact ``E[(X_T - d)^2]`` when ``X`` is a geometric Brownian motion with drift ``mu``."""
    tau = p.T - t0
    return (x0**2 * math.exp((2 * p.mu + p.sigma2) * tau)
            - 2 * p.d * x0 * math.exp(p.mu * tau) + p.d**2)


@dataclass(frozen=True)
class VerificationRow:
    policy: str
    estimate: float
    std_err: float
    V_ref: float
    z_score: float
    passed: bool | None


@dataclass(frozen=True)
class VerificationReport:
    rows: list
    V_ref: float
    passed: bool | None
    undefined: bool
    stats: list

    def to_csv(self, fh=None, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        buf.write("policy,estimate,std_err,V_ref,z_score,pass\n")
        for r in self.rows:
            flag = "NA" if r.passed is None else ("PASS" if r.passed else "FAIL")
            buf.write(f"{r.policy},{r.estimate:.10g},{r.std_err:.10g},{r.V_ref:.10g},"
                      f"{r.z_score:.6g},{flag}\n")
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    def __str__(self) -> str:
        lines = [f"V(x0, t0) = {self.V_ref:.6f}"]
        for r in self.rows:
            flag = "n/a" if r.passed is None else ("ok" if r.passed else "FAIL")
            lines.append(f"  {r.policy:<28s} {r.estimate:12.6f} +/- {r.std_err:9.6f}"
                         f"  z={r.z_score:+8.3f}  {flag}")
        overall = "UNDEFINED" if self.passed is None else ("PASS" if self.passed else "FAIL")
        lines.append(f"overall: {overall}")
        return "\n".join(lines)


def verify_value(surface: DualSurface | ValueSurface, pols: list, p: MarketParams,
                 cfg: SimConfig, n_sigma: float = 3.0, min_paths: int = 30,
                 workers: int = 1) -> VerificationReport:
    """Compare Monte Carlo costs against ``V(x0, t0)``.

    The policy named ``"optimal"`` must match ``V`` within ``n_sigma``
    standard errors; every other policy must not beat ``V`` by more than that.
    Below ``min_paths`` the standard error is not trusted and the verdict is
    left undefined.
    """
    ds = surface.dual if isinstance(surface, ValueSurface) else surface
    if cfg.x0 >= p.discounted_target(cfg.t0):
        raise OutOfRange("x0 is not below the discounted target")
    V_ref = float(legendre_V(ds, cfg.x0, cfg.t0).V[0])
    undefined = cfg.n_paths < min_paths
    rows, stats = [], []
    verdicts = []
    for pol in pols:
        st = simulate_policy(pol, p, cfg, workers=workers)
        stats.append(st)
        z = (st.mean_sq_dev - V_ref) / st.std_err if st.std_err > 0 else (
            0.0 if st.mean_sq_dev == V_ref else math.copysign(math.inf, st.mean_sq_dev - V_ref))
        if pol.name == "optimal":
            ok = abs(st.mean_sq_dev - V_ref) <= n_sigma * st.std_err
        else:
            ok = st.mean_sq_dev >= V_ref - n_sigma * st.std_err
        verdicts.append(ok)
        rows.append(VerificationRow(pol.name, st.mean_sq_dev, st.std_err, V_ref, z,
                                    None if undefined else ok))
    passed = None if undefined else all(verdicts)
    return VerificationReport(rows=rows, V_ref=V_ref, passed=passed, undefined=undefined,
                              stats=stats)
