"""Run configuration: flat ``key=value`` files, JSON, and figure presets.

A text config looks like::

    # baseline gap case
    market.r1 = 0.02
    market.r2 = 0.08
    [grid]
    nz = 1801

Keys inside a ``[section]`` block get the section name as prefix. Files
ending in ``.json`` are read as nested JSON objects instead.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace

from .errors import ValidationError
from .market import BASELINE, MarketParams, validate_params
from .pde_core import SCHEME_VERSION, Grid, SolverOptions
from .simulate import SimConfig

GRID_KEYS = ("left", "right", "nz", "steps_per_year", "z_min", "z_max", "ns")
SOLVER_KEYS = ("eps", "boundary", "max_picard", "picard_rtol", "continuation")
SIM_KEYS = ("x0", "t0", "n_paths", "n_steps", "seed", "antithetic")

_GAP = {"fig3a": (0.02, 0.08), "fig3b": (0.03, 0.07), "fig3c": (0.04, 0.06), "fig3d": (0.05, 0.05)}

PRESETS: dict[str, dict] = {name: {"market.r1": r1, "market.r2": r2} for name, (r1, r2) in _GAP.items()}
PRESETS["fig4"] = {}
PRESETS.update({f"fig5{k}": {"market.mu": mu} for k, mu in zip("abcd", (0.20, 0.25, 0.30, 0.35))})
PRESETS.update({f"fig6{k}": {"market.sigma2": s2} for k, s2 in zip("abcd", (0.30, 0.25, 0.20, 0.15))})
PRESETS["fig8"] = {"market.sigma2": 0.15**2}
PRESETS["baseline"] = {}
PRESETS["equal_rates"] = {"market.r1": 0.05, "market.r2": 0.05}

PRESET_GROUPS = {
    "fig3": ["fig3a", "fig3b", "fig3c", "fig3d"],
    "fig5": ["fig5a", "fig5b", "fig5c", "fig5d"],
    "fig6": ["fig6a", "fig6b", "fig6c", "fig6d"],
}


@dataclass(frozen=True)
class RunConfig:
    market: MarketParams = BASELINE
    grid: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    sim: SimConfig = field(default_factory=SimConfig)
    output_dir: str = "."

    @property
    def eps(self) -> float:
        return float(self.solver.get("eps", 1e-8))

    def make_grid(self) -> Grid:
        g = self.grid
        if "z_min" in g or "z_max" in g:
            base = Grid.default(self.market)
            return Grid(float(g.get("z_min", base.z_min)), float(g.get("z_max", base.z_max)),
                        int(g.get("nz", base.nz)), int(g.get("ns", base.ns)))
        kw = {k: g[k] for k in ("left", "right", "nz", "steps_per_year") if k in g}
        grid = Grid.default(self.market, **kw)
        return replace(grid, ns=int(g["ns"])) if "ns" in g else grid

    def solver_options(self) -> SolverOptions:
        kw = {k: v for k, v in self.solver.items() if k != "eps"}
        return SolverOptions(**kw)

    def as_dict(self) -> dict:
        return {"market": self.market.as_dict(), "grid": dict(sorted(self.grid.items())),
                "solver": dict(sorted(self.solver.items())), "sim": asdict(self.sim)}

    def config_hash(self) -> str:
        """Digest of everything that affects outputs, including the scheme version."""
        payload = json.dumps({**self.as_dict(), "scheme": SCHEME_VERSION}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _coerce(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(t)
        except ValueError:
            pass
    return t.strip("\"'")


def parse_text(text: str) -> dict:
    """Flatten a ``key=value`` document into ``{"section.key": value}``."""
    out: dict = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if section and "." not in key:
            key = f"{section}.{key}"
        out[key] = _coerce(value)
    return out


def _flatten(obj: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in obj.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def load_file(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if path.lower().endswith(".json"):
        try:
            return _flatten(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return parse_text(text)


def build_config(flat: dict, output_dir: str | None = None) -> RunConfig:
    """Turn flattened ``section.key`` values into a validated :class:`RunConfig`."""
    market = BASELINE.as_dict()
    grid, solver, sim = {}, {}, asdict(SimConfig())
    for key, value in flat.items():
        section, _, name = key.partition(".")
        if section == "market" and name in market:
            market[name] = float(value)
        elif section == "grid" and name in GRID_KEYS:
            grid[name] = value
        elif section in ("solver", "grid") and name in SOLVER_KEYS:
            solver[name] = value
        elif section == "sim" and name in SIM_KEYS:
            sim[name] = value
        elif key == "output_dir":
            output_dir = output_dir or str(value)
        else:
            raise ValidationError(f"unknown config key {key!r}")
    p = MarketParams(**market)
    validate_params(p)
    for k in ("n_paths", "n_steps", "seed"):
        sim[k] = int(sim[k])
    for k in ("x0", "t0"):
        sim[k] = float(sim[k])
    sim["antithetic"] = bool(sim["antithetic"])
    cfg = RunConfig(market=p, grid=grid, solver=solver, sim=SimConfig(**sim),
                    output_dir=output_dir or ".")
    cfg.make_grid()
    cfg.solver_options()
    return cfg


def resolve(path: str | None = None, preset: str | None = None, overrides=(),
            output_dir: str | None = None) -> RunConfig:
    """Layer preset, then file, then ``key=value`` overrides."""
    flat: dict = {}
    if preset:
        if preset not in PRESETS:
            raise ValidationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        flat.update(PRESETS[preset])
    if path:
        flat.update(load_file(os.fspath(path)))
    for item in overrides:
        flat.update(parse_text(item))
    return build_config(flat, output_dir)
