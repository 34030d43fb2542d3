"""Smoke test for the esc_py extension module.

Build and install the wheel first:

    cd crates/python && maturin build --release -o dist && pip install dist/esc_py-*.whl

then run `python python/smoke_test.py` (or `pytest python/smoke_test.py`).
"""

import json
import math

import esc_py


def test_scores_and_identification():
    f = esc_py.ForecastRecord([0.6, 0.9], var=1.0, es=1.5, alpha=0.975)
    assert f.allocation_gap() == 0.0
    # no exceedance: only the pinball part counts
    var_score, esc_score = esc_py.score_tuple(f, [0.2, 0.3])
    assert esc_score == 0.0
    assert math.isclose(var_score, esc_py.score_var(1.0, 0.5, 0.975))
    assert math.isclose(esc_py.ident_var(1.0, 0.5, 0.975), -0.025)
    assert math.isclose(esc_py.ident_esc(0.6, 1.0, 1.2, 2.0), 0.6)
    assert math.isclose(esc_py.ident_es(1.0, 1.5, 0.5, 0.975), -0.5)


def test_ilr_round_trip():
    w = esc_py.closing([1.0, 2.0, 3.0])
    assert math.isclose(sum(w), 1.0)
    z = esc_py.ilr(w)
    assert len(z) == 2
    back = esc_py.ilr_inv(z)
    assert all(math.isclose(a, b, rel_tol=1e-12) for a, b in zip(w, back))


def test_errors_are_raised():
    try:
        esc_py.closing([1.0, -1.0])
    except esc_py.EscError as e:
        assert str(e)
    else:
        raise AssertionError("negative parts were accepted")


def test_dm_test_detects_a_shift():
    res = esc_py.dm_test([0.1, -0.2, 0.3, 0.05] * 50)
    assert res["n"] == 200
    assert res["zone"] == "red"


def test_simulate_and_backtest():
    cfg = json.dumps(
        {
            "window": 250,
            "horizon": 30,
            "models": ["HS", "TRUTH"],
            "seed": 3,
            "simulation": {"dim": 2},
        }
    )
    panel, truth = esc_py.simulate(cfg)
    assert len(panel) == 280 and panel.dim == 2
    assert len(truth["esc"]) == 280
    hs = esc_py.hs_forecast(panel.slice(0, 250), 0.975)
    assert hs.allocation_gap() < 1e-9
    report = esc_py.backtest(cfg)
    assert report["missing"] == {"HS": 0, "TRUTH": 0}
    assert {row["model"] for row in report["avg_scores"]} == {"HS", "TRUTH"}
    # an observed panel has no analytic truth
    try:
        esc_py.backtest(cfg, panel)
    except esc_py.EscError as e:
        assert "TRUTH" in str(e)
    else:
        raise AssertionError("TRUTH ran without a truth")
    curve = esc_py.murphy_curve([hs], panel.slice(250, 251), "VaR")
    # right-continuous: zero left of the first knot and from the last knot on
    assert curve["left_values"][0] == 0.0 and curve["values"][-1] == 0.0


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"ok {name}")
