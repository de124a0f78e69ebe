import json
import warnings

import numpy as np
import pytest

from roughdrift import experiments
from roughdrift.cli import main
from roughdrift.errors import ConfigurationError, ExplosionError
from roughdrift.experiments import (config_from_dict, reflection_tail, run_ldp, run_solve, run_tails,
                                    weibull_shape)
from roughdrift.io import read_json, read_rough_path_csv, read_table_csv, read_trajectory_csv, write_points_csv


def scenario(**over):
    raw = {
        "driver": {"kind": "fbm", "H": 0.4, "d": 2, "n": 32, "T": 1.0},
        "sigma": {"name": "sin-rotation", "params": {"amp": 0.5}},
        "drift": {"name": "cubic_inward"},
        "xi": [[1.0, 0.5]],
        "seeds": [0],
    }
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(raw.get(k), dict):
            raw[k] = {**raw[k], **v}
        else:
            raw[k] = v
    return raw


def write_cfg(tmp_path, raw, name="cfg.json"):
    f = tmp_path / name
    f.write_text(json.dumps(raw))
    return str(f)


# -- configuration -------------------------------------------------------------

@pytest.mark.parametrize("raw,field", [
    (scenario(driver={"H": 0.3}), "driver.H"),
    (scenario(driver={"n": 0}), "driver.n"),
    (scenario(sigma={"name": "bogus"}), "sigma"),
    (scenario(mode="linear"), "mode"),
    (scenario(xi=[[1.0, 0.0], [1.0]]), "xi"),
    (scenario(colour="red"), "colour"),
    ({k: v for k, v in scenario().items() if k != "drift"}, "drift"),
])
def test_config_errors_name_the_field(tmp_path, capsys, raw, field):
    with pytest.raises(ConfigurationError, match=field.replace(".", r"\.")):
        config_from_dict(raw)
    assert main(["solve", "--config", write_cfg(tmp_path, raw), "--out", str(tmp_path / "o")]) == 2
    assert field in capsys.readouterr().err


def test_unreadable_config_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", "--config", str(bad)]) == 2
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["nonsense"]) == 2


def test_cubic_defaults_to_one_sided():
    cfg = config_from_dict(scenario())
    assert cfg.mode is None and cfg.make_drift().mode == "one_sided"


# -- solve --------------------------------------------------------------------------

def test_solve_without_dynamics_is_constant(tmp_path):
    raw = scenario(sigma={"name": "zero", "params": {}}, drift={"name": "zero"}, seeds=[0, 1])
    assert main(["solve", "--config", write_cfg(tmp_path, raw), "--out", str(tmp_path / "o")]) == 0
    for seed in (0, 1):
        _, y = read_trajectory_csv(tmp_path / "o" / f"seed{seed}_xi0.csv")
        assert np.all(y == [1.0, 0.5])


def test_solve_eight_seeds_finite(tmp_path):
    out = tmp_path / "o"
    assert main(["solve", "--config", write_cfg(tmp_path, scenario()), "--out", str(out), "--seeds", "8"]) == 0
    files = sorted(out.glob("seed*_xi0.csv"))
    assert len(files) == 8
    for f in files:
        t, y = read_trajectory_csv(f)
        assert np.all(np.isfinite(y)) and t[0] == 0.0 and t[-1] == 1.0
    summary = read_json(out / "summary.json")
    assert all(r["ok"] and r["finite"] for r in summary["runs"])


def test_solve_all_failed_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise ExplosionError("forced", 0.5)

    monkeypatch.setattr(experiments, "_solve_one", boom)
    assert main(["solve", "--config", write_cfg(tmp_path, scenario()), "--out", str(tmp_path / "o")]) == 3
    runs = read_json(tmp_path / "o" / "summary.json")["runs"]
    assert runs[0]["ok"] is False and "forced" in runs[0]["error"]


def test_solve_is_bitwise_reproducible(tmp_path):
    cfg = config_from_dict(scenario(seeds=[3]))
    run_solve(cfg, tmp_path / "a")
    run_solve(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "seed3_xi0.csv").read_bytes() == (tmp_path / "b" / "seed3_xi0.csv").read_bytes()


# -- tails -------------------------------------------------------------------------

def test_weibull_shape_recovers_known_law():
    rng = np.random.default_rng(0)
    shape, _, _ = weibull_shape(rng.weibull(2.0, 20000))
    assert shape == pytest.approx(2.0, rel=0.1)


def test_tails_needs_enough_replicates(tmp_path):
    cfg = write_cfg(tmp_path, scenario())
    assert main(["tails", "--config", cfg, "--replicates", "999", "--out", str(tmp_path / "o")]) == 2


def test_tails_deterministic_without_noise(tmp_path):
    cfg = config_from_dict(scenario(sigma={"name": "zero", "params": {}}, xi=[[2.0, 0.0]]))
    rep = run_tails(cfg, 1000, outdir=tmp_path)
    assert rep.deterministic and rep.passed
    surv = read_table_csv(tmp_path / "survival.csv")
    assert np.all(surv["r"] <= max(2.0, 1.0) + 1e-12)


def test_tails_parallel_matches_serial(tmp_path):
    cfg = config_from_dict(scenario(driver={"n": 16}))
    run_tails(cfg, 1000, workers=1, outdir=tmp_path / "a")
    run_tails(cfg, 1000, workers=2, outdir=tmp_path / "b")
    for name in ("survival.csv", "tails.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_tails_bm_bounded_sigma_shape_near_two(tmp_path):
    # start at the origin: an offset steepens the top decile of |Y| at desk scale
    cfg = config_from_dict(scenario(driver={"H": 0.5, "n": 128}, drift={"name": "zero"}, xi=[[0.0, 0.0]]))
    rep = run_tails(cfg, 10000, outdir=tmp_path)
    assert 1.6 <= rep.shape <= 3.0


# -- ldp -------------------------------------------------------------------------------

def bm_scenario(**over):
    raw = {"driver": {"kind": "fbm", "H": 0.5, "d": 1, "n": 64}, "sigma": {"name": "constant"},
           "drift": {"name": "zero"}, "xi": [[0.0]], "replicates": 2000, "radius": 1.0,
           "eps_grid": [0.6, 0.5, 0.45, 0.4]}
    raw.update(over)
    return raw


def test_reflection_tail_values():
    # P(sup|W| >= a) ~ 4 (1 - Phi(a)) for large a; exact value 1 for a <= 0
    from scipy.stats import norm

    assert reflection_tail(0.0) == 1.0
    assert reflection_tail(3.0) == pytest.approx(4 * norm.sf(3.0), rel=1e-2)
    # monotone in a and in T
    assert reflection_tail(1.0) > reflection_tail(2.0) > reflection_tail(3.0)
    assert reflection_tail(2.0, T=4.0) == pytest.approx(reflection_tail(1.0), rel=1e-12)


def test_ldp_zero_radius(tmp_path):
    rep = run_ldp(config_from_dict(bm_scenario(radius=0.0, replicates=200)), outdir=tmp_path)
    assert rep.probability == [1.0] * 4 and all(q == 0.0 for q in rep.q)


def test_ldp_no_noise_all_infinite(tmp_path):
    cfg = config_from_dict(bm_scenario(sigma={"name": "zero"}, replicates=200))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = run_ldp(cfg, outdir=tmp_path)
    messages = [str(w.message) for w in caught]
    assert any("no exceedances" in m for m in messages) and any("spread check skipped" in m for m in messages)
    assert all(np.isinf(rep.q)) and not rep.stable
    back = read_table_csv(tmp_path / "ldp.csv")
    assert np.all(np.isinf(back["q"]))


def test_ldp_matches_reflection_principle(tmp_path):
    rep = run_ldp(config_from_dict(bm_scenario()), outdir=tmp_path)
    exact = [-e * e * np.log(reflection_tail(1.0 / e)) for e in rep.eps]
    assert np.allclose(rep.q, exact, rtol=0.3)
    assert rep.stable


# -- lift and bounds --------------------------------------------------------------

def test_lift_command(tmp_path):
    pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]], float)
    write_points_csv(tmp_path / "sq.csv", np.linspace(0, 1, 5), pts)
    assert main(["lift", "--input", str(tmp_path / "sq.csv"), "--out", str(tmp_path / "sq_lift.csv")]) == 0
    x = read_rough_path_csv(tmp_path / "sq_lift.csv")
    assert x.area[-1, 0, 1] == pytest.approx(1.0)
    assert main(["lift", "--input", str(tmp_path / "missing.csv")]) == 2


def test_bounds_command(tmp_path, capsys):
    raw = scenario(driver={"H": 0.5, "n": 8}, drift={"name": "neg_identity"}, mode="linear", seeds=[0, 1])
    assert main(["bounds", "--config", write_cfg(tmp_path, raw), "--out", str(tmp_path / "o")]) == 0
    reports = sorted((tmp_path / "o").glob("*.json"))
    assert len(reports) == 4
    for r in reports:
        rep = read_json(r)
        table = read_table_csv(r.with_suffix(".csv"))
        assert len(next(iter(table.values()))) == len(rep["grid"])
    assert "slope" in capsys.readouterr().out
