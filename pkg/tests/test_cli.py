import json

import numpy as np
import pytest

from gapfolio import cache
from gapfolio.cli import main
from gapfolio.config import PRESET_GROUPS, PRESETS, build_config, parse_text, resolve
from gapfolio.errors import CacheCorrupt, ParameterOrdering, ValidationError
from gapfolio.market import BASELINE
from gapfolio.pde_core import Grid, SolverOptions
from gapfolio.svg import LinePlot

FAST = ["--set", "grid.nz=601", "--set", "grid.steps_per_year=100"]


@pytest.fixture(autouse=True)
def cache_env(tmp_path, monkeypatch):
    monkeypatch.setenv("GAPFOLIO_CACHE_DIR", str(tmp_path / "cache"))


def _csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    return lines[1].split(","), [row.split(",") for row in lines[2:]]


def test_parse_sections_and_prefixes():
    flat = parse_text("# c\nmarket.r1 = 0.03\n[market]\nr2=0.07  # inline\n[sim]\nn_paths = 10\nantithetic = yes\n")
    assert flat == {"market.r1": 0.03, "market.r2": 0.07, "sim.n_paths": 10, "sim.antithetic": True}
    with pytest.raises(ValidationError):
        parse_text("nonsense line")


def test_build_config_and_hash(tmp_path):
    cfg = build_config({"market.r1": 0.05, "market.r2": 0.05})
    assert cfg.market.r1 == 0.05 and cfg.market.mu == BASELINE.mu
    again = build_config({"market.r2": 0.05, "market.r1": 0.05})
    assert cfg.config_hash() == again.config_hash()
    assert cfg.config_hash() != build_config({}).config_hash()
    with pytest.raises(ValidationError):
        build_config({"market.bogus": 1})
    with pytest.raises(ParameterOrdering):
        build_config({"market.mu": 0.05})
    (tmp_path / "c.json").write_text(json.dumps({"market": {"r1": 0.05, "r2": 0.05}}))
    assert resolve(str(tmp_path / "c.json")).config_hash() == cfg.config_hash()


def test_presets():
    assert resolve(preset="fig8").market.sigma2 == pytest.approx(0.0225)
    assert [resolve(preset=n).market.mu for n in PRESET_GROUPS["fig5"]] == [0.20, 0.25, 0.30, 0.35]
    assert [resolve(preset=n).market.sigma2 for n in PRESET_GROUPS["fig6"]] == [0.30, 0.25, 0.20, 0.15]
    assert resolve(preset="fig3d").market.r1 == resolve(preset="fig3d").market.r2 == 0.05
    assert set(PRESETS) >= {"fig3a", "fig3b", "fig3c", "fig3d", "fig4", "fig8"}
    with pytest.raises(ValidationError):
        resolve(preset="fig99")


def test_grid_overrides():
    cfg = resolve(overrides=["grid.nz=401", "grid.ns=30"])
    g = cfg.make_grid()
    assert g.nz == 401 and g.ns == 30
    g2 = resolve(overrides=["grid.z_min=-8", "grid.z_max=7"]).make_grid()
    assert (g2.z_min, g2.z_max) == (-8.0, 7.0)


def test_cache_roundtrip_and_corruption(tmp_path):
    g = Grid.default(BASELINE, nz=401, steps_per_year=40)
    sol, hit = cache.solve_cached(BASELINE, g, root=tmp_path)
    assert not hit
    again, hit = cache.solve_cached(BASELINE, g, root=tmp_path)
    assert hit
    np.testing.assert_array_equal(sol.w, again.w)
    assert not list(tmp_path.glob("*.tmp"))
    key = cache.surface_key(BASELINE, g, 1e-8, SolverOptions())
    assert key != cache.surface_key(BASELINE, g, 1e-7, SolverOptions())
    path = tmp_path / f"{key}.npz"
    data = dict(np.load(path))
    data["w"] = data["w"] + 1e-9
    np.savez(path, **data)
    with pytest.raises(CacheCorrupt):
        cache.load(key, tmp_path)
    path.write_bytes(b"garbage")
    with pytest.raises(CacheCorrupt):
        cache.load(key, tmp_path)


def test_svg_render(tmp_path):
    plot = LinePlot(title="a<b", xlabel="t", ylabel="y").add([0, 1, 2], [1, np.nan, 3], "one")
    plot.add([0, 1], [2, 2], "flat", dashed=True)
    text = plot.render()
    assert text.startswith("<svg") and text.count("<polyline") == 2 and "a&lt;b" in text
    plot.save(tmp_path / "p.svg")
    assert (tmp_path / "p.svg").read_text() == text


def test_solve_twice_hits_cache(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["solve", "--preset", "baseline", "--out", str(out)] + FAST) == 0
    header, rows = _csv(out / "w_surface.csv")
    assert header == ["z", "s", "w", "w_z"]
    meta = json.loads((out / "meta.json").read_text())
    assert meta["bounds"]["violations"] == 0
    first = (out / "w_surface.csv").read_bytes()
    capsys.readouterr()
    assert main(["solve", "--preset", "baseline", "--out", str(out)] + FAST) == 0
    assert "cache hit" in capsys.readouterr().err
    assert (out / "w_surface.csv").read_bytes() == first


def test_exit_codes(tmp_path):
    assert main(["solve", "--set", "market.mu=0.05", "--out", str(tmp_path)]) == 2
    assert main(["solve", "--set", "grid.z_min=-3", "--set", "grid.z_max=2",
                 "--out", str(tmp_path)]) == 3
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["solve", "--out", str(blocker / "sub")] + FAST) == 4


def test_boundaries_outputs(tmp_path):
    out = tmp_path / "b"
    assert main(["boundaries", "--preset", "baseline", "--out", str(out)] + FAST) == 0
    header, rows = _csv(out / "boundaries_wealth.csv")
    assert header == ["t", "B", "L", "discounted_target"]
    assert float(rows[-1][1]) == pytest.approx(4.1176, abs=1e-3)
    assert float(rows[-1][2]) == pytest.approx(5.6522, abs=1e-3)
    header, _ = _csv(out / "boundaries_dual.csv")
    assert header == ["s", "b", "l", "b_upper", "l_lower"]
    assert (out / "boundaries.svg").read_text().startswith("<svg")
    eq = tmp_path / "e"
    assert main(["boundaries", "--preset", "fig3d", "--out", str(eq)] + FAST) == 0
    _, rows = _csv(eq / "boundaries_wealth.csv")
    assert all(abs(float(r[1]) - float(r[2])) < 1e-9 for r in rows)


def test_value_and_policy_tables(tmp_path):
    out = tmp_path / "v"
    assert main(["value", "--preset", "equal_rates", "--out", str(out), "--x", "1,4,12",
                 "--t", "0,3"]) == 0
    header, rows = _csv(out / "value.csv")
    assert header == ["t", "x", "V", "V_x", "V_xx", "pi_star", "status"]
    table = {(float(r[0]), float(r[1])): r for r in rows}
    assert float(table[0, 1][2]) == pytest.approx(57.8677, rel=1e-4)
    assert float(table[0, 1][5]) == pytest.approx(7.60708, abs=2e-3)
    assert float(table[3, 4][2]) == pytest.approx(36.0, abs=1e-3)
    assert table[0, 12][-1] == "out_of_range"
    out = tmp_path / "p"
    assert main(["policy", "--preset", "fig8", "--out", str(out), "--x", "1,2,3,4,5,6,7,8,9",
                 "--t", "0"] + FAST) == 0
    header, rows = _csv(out / "policy.csv")
    ratio = [float(r[header.index("pi_over_x")]) for r in rows]
    # flat at 1 across the all-in-stock band, strictly falling elsewhere
    assert all(a >= b for a, b in zip(ratio, ratio[1:]))
    assert ratio[0] > 1 > ratio[-1]
    assert (out / "pi_over_x.svg").exists() and (out / "pi.svg").exists()


def test_simulate_verify_frontier(tmp_path):
    out = tmp_path / "s"
    sim = ["--set", "sim.n_paths=3000", "--set", "sim.n_steps=100"]
    assert main(["simulate", "--preset", "equal_rates", "--out", str(out), "--dump-terminal",
                 "--policies", "zero,constant_dollar:2"] + sim) == 0
    header, rows = _csv(out / "simulate.csv")
    assert header[0] == "policy" and rows[0][0] == "zero"
    assert (out / "terminal_zero.csv").exists()
    first = (out / "simulate.csv").read_bytes()
    assert main(["simulate", "--preset", "equal_rates", "--out", str(out),
                 "--policies", "zero,constant_dollar:2"] + sim) == 0
    assert (out / "simulate.csv").read_bytes() == first

    assert main(["verify", "--preset", "equal_rates", "--out", str(out), "--strict"] + sim) == 0
    header, rows = _csv(out / "verify.csv")
    assert header == ["policy", "estimate", "std_err", "V_ref", "z_score", "pass"]
    assert rows[0][0] == "optimal" and rows[0][-1] == "PASS"

    assert main(["frontier", "--preset", "equal_rates", "--out", str(out), "--d-grid", "10"]) == 0
    header, rows = _csv(out / "frontier.csv")
    assert header == ["d", "V", "V_d", "z_mean", "std_dev"]
    assert float(rows[0][3]) == pytest.approx(3.4522, abs=5e-3)
    assert float(rows[0][4]) == pytest.approx(3.8725, abs=5e-3)


def test_sweep_group(tmp_path):
    out = tmp_path / "w"
    assert main(["sweep", "--group", "fig3", "--out", str(out)] + FAST) == 0
    assert len(list(out.glob("boundaries_fig3*.svg"))) == 4
    header, rows = _csv(out / "sweep_boundaries.csv")
    assert header == ["label", "t", "B", "L", "discounted_target"]
    assert {r[0] for r in rows} == set(PRESET_GROUPS["fig3"])
    assert main(["sweep", "--vary", "market.mu=0.2,0.3", "--out", str(out)] + FAST) == 0
    assert main(["sweep", "--out", str(out)]) == 2


def test_negative_leading_x_list(tmp_path):
    out = tmp_path / "neg"
    assert main(["value", "--x", "-2,0,1", "--t", "0", "--out", str(out), "-q"] + FAST) == 0
    body = [l for l in (out / "value.csv").read_text().splitlines() if not l.startswith("#")]
    assert len(body) == 4 and body[1].split(",")[1] in ("-2", "-2.0")
