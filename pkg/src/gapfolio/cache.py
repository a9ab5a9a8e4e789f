"""On-disk cache of solved ``w`` surfaces, keyed by a content hash.

Entries are ``.npz`` files named by the hash of parameters, grid, ``eps``,
solver options and the scheme version. Writes go to a temporary file that
is renamed into place, so readers never see a partial entry.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import CacheCorrupt
from .market import MarketParams, validate_params
from .pde_core import SCHEME_VERSION, Grid, SolverOptions, WSolution, solve_w

log = logging.getLogger(__name__)


def cache_dir() -> Path:
    env = os.environ.get("GAPFOLIO_CACHE_DIR")
    return Path(env) if env else Path.home() / ".cache" / "gapfolio"


def surface_key(p: MarketParams, g: Grid, eps: float, opts: SolverOptions) -> str:
    payload = {"params": p.as_dict(), "grid": asdict(g), "eps": eps,
               "options": asdict(opts), "scheme": SCHEME_VERSION}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:24]


def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def save(sol: WSolution, key: str, root: Path | None = None) -> Path:
    root = cache_dir() if root is None else Path(root)
    root.mkdir(parents=True, exist_ok=True)
    meta = {"key": key, "digest": _digest(sol.w, sol.w_z), "eps": sol.epsilon,
            "params": sol.params.as_dict(), "grid": asdict(sol.grid),
            "options": asdict(sol.options), "scheme": SCHEME_VERSION}
    target = root / f"{key}.npz"
    fd, tmp = tempfile.mkstemp(dir=root, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, w=sol.w, w_z=sol.w_z, iters=sol.picard_iterations,
                     resid=sol.residuals, meta=np.array(json.dumps(meta, sort_keys=True)))
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target


def load(key: str, root: Path | None = None) -> WSolution | None:
    """Return the cached surface, ``None`` on a miss, or raise :class:`CacheCorrupt`."""
    root = cache_dir() if root is None else Path(root)
    path = root / f"{key}.npz"
    if not path.exists():
        return None
    try:
        with np.load(path, allow_pickle=False) as z:
            w, wz = z["w"], z["w_z"]
            iters, resid = z["iters"], z["resid"]
            meta = json.loads(str(z["meta"]))
    except Exception as exc:  # noqa: BLE001 - any read failure means a bad entry
        raise CacheCorrupt(f"cannot read cache entry {path}: {exc}") from exc
    if meta.get("key") != key or meta.get("digest") != _digest(w, wz):
        raise CacheCorrupt(f"hash mismatch in cache entry {path}")
    p = MarketParams(**meta["params"])
    g = Grid(**meta["grid"])
    opts = SolverOptions(**meta["options"])
    return WSolution(grid=g, params=p, constants=validate_params(p), w=w, w_z=wz,
                     epsilon=meta["eps"], picard_iterations=iters, residuals=resid,
                     boundary=opts.boundary, options=opts)


def solve_cached(p: MarketParams, g: Grid, eps: float = 1e-8, opts: SolverOptions | None = None,
                 use_cache: bool = True, root: Path | None = None):
    """Solve or load. Returns ``(solution, hit)``."""
    opts = SolverOptions() if opts is None else opts
    key = surface_key(p, g, eps, opts)
    if use_cache:
        sol = load(key, root)
        if sol is not None:
            log.info("cache hit %s", key)
            return sol, True
    sol = solve_w(validate_params(p), p, g, eps, opts)
    if use_cache:
        path = save(sol, key, root)
        log.info("cache store %s", path)
    return sol, False
