import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from adpmcmc.data import (
    CONFIG_ENV, TimeSeriesData, load_config, load_record, load_series, save_record, simulate_dataset,
    write_series,
)
from adpmcmc.models import DomainError, ModelId, Params
from adpmcmc.rng import make_rng
from adpmcmc.sampler import SamplerConfig, run_chain

from conftest import EXAMPLE_PARAMS, FLEX_ALLEE, THETA_LOGISTIC


def test_noiseless_linear_growth():
    sim = simulate_dataset(ModelId.M0, Params((0.15,), 0.0, 0.0, 0.0), 10, make_rng(0))
    assert np.allclose(sim.x_true, 0.15 * np.arange(1, 11), atol=1e-14)
    assert np.array_equal(sim.y, sim.x_true)


def test_theta_logistic_fluctuates_about_capacity():
    sim = simulate_dataset(ModelId.M2, THETA_LOGISTIC, 5000, make_rng(1))
    assert np.mean(sim.x_true[500:]) == pytest.approx(math.log(6.1917), abs=0.35)


def test_flexible_allee_settles_at_capacity():
    p = Params(FLEX_ALLEE.b, 0.0, 0.0, math.log(2.0))
    sim = simulate_dataset(ModelId.M4, p, 400, make_rng(0))
    assert sim.x_true[-1] == pytest.approx(math.log(20), abs=1e-8)
    assert np.all(np.diff(sim.x_true) >= 0)


def test_simulation_is_deterministic_and_guarded():
    a = simulate_dataset(ModelId.M2, THETA_LOGISTIC, 30, make_rng(5))
    b = simulate_dataset(ModelId.M2, THETA_LOGISTIC, 30, make_rng(5))
    assert np.array_equal(a.y, b.y) and np.array_equal(a.x_true, b.x_true)
    with pytest.raises(DomainError, match="step 2"):
        simulate_dataset(ModelId.M1, Params((50.0, 1.0), 0.0, 0.0, 5.0), 10, make_rng(0))
    with pytest.raises(ValueError):
        simulate_dataset(ModelId.M0, EXAMPLE_PARAMS[ModelId.M0], 0, make_rng(0))


def write(tmp_path, text, name="s.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_series_examples(tmp_path):
    d = load_series(write(tmp_path, "1,2.0\n2,4.0"), log_transform=True)
    assert np.allclose(d.y, np.log([2.0, 4.0])) and d.t.tolist() == [1, 2]
    assert d.meta["transform"] == "log"
    assert load_series(write(tmp_path, "t,n\n1,10\n2,12\n"), log_transform=True).T == 2
    with pytest.raises(ValueError, match=":1:"):
        load_series(write(tmp_path, "1,0"), log_transform=True)


def test_load_series_errors_carry_line_numbers(tmp_path):
    with pytest.raises(ValueError, match=":3:.*increase"):
        load_series(write(tmp_path, "t,n\n2,1\n2,3\n"), log_transform=False)
    with pytest.raises(ValueError, match=":3:.*parse"):
        load_series(write(tmp_path, "1,2\n2,3\n3,abc\n"), log_transform=False)
    with pytest.raises(ValueError, match=":2:.*columns"):
        load_series(write(tmp_path, "1,2\n2,3,4\n"), log_transform=False)
    with pytest.raises(ValueError, match="no observations"):
        load_series(write(tmp_path, "t,n\n"), log_transform=False)
    assert load_series(write(tmp_path, "1,-2.5\n\n3,0\n"), log_transform=False).y.tolist() == [-2.5, 0.0]


def test_series_invariants():
    with pytest.raises(ValueError):
        TimeSeriesData([1, 1], [0.0, 0.1])
    with pytest.raises(ValueError):
        TimeSeriesData([1], [math.nan])
    with pytest.raises(ValueError):
        TimeSeriesData([], [])


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(float, st.integers(1, 40), elements=st.floats(-1e300, 1e300, allow_subnormal=True)),
       st.integers(-1000, 1000))
def test_write_load_round_trip(tmp_path_factory, y, start):
    d = TimeSeriesData(np.arange(start, start + len(y)) * 3, y, {"source": "x", "transform": "none"})
    path = tmp_path_factory.mktemp("rt") / "s.csv"
    write_series(d, path)
    back = load_series(path, log_transform=False)
    assert np.array_equal(back.t, d.t) and np.array_equal(back.y, d.y)


def test_config_file_and_environment_override(tmp_path, monkeypatch):
    a = write(tmp_path, json.dumps({"model": "M1", "sampler": {"L": 30, "seed": 4},
                                    "prior": {"x0_var": 2.0}, "log_transform": False}), "a.json")
    b = write(tmp_path, json.dumps({"model": "M4"}), "b.json")
    run = load_config(a)
    assert run.model == "M1" and run.sampler.L == 30 and run.sampler.x0_var == 2.0 and not run.log_transform
    monkeypatch.setenv(CONFIG_ENV, str(b))
    assert load_config(a).model == "M4"
    monkeypatch.delenv(CONFIG_ENV)
    assert load_config(None).sampler == SamplerConfig()
    with pytest.raises(ValueError):
        load_config(write(tmp_path, json.dumps({"modle": "M1"}), "c.json"))


def test_record_round_trip(tmp_path, m2_data):
    rec = run_chain(ModelId.M2, m2_data.y, SamplerConfig(L=20, n_anneal=10, n_burn=20, n_sample=30, seed=1))
    save_record(rec, tmp_path)
    back = load_record(tmp_path)
    assert back.model is ModelId.M2 and back.stage_acceptance == rec.stage_acceptance
    for name in ("theta", "accept_flags", "log_marginals", "paths", "bcrlb_inputs", "warmup_theta"):
        assert np.array_equal(getattr(back, name), getattr(rec, name))
    header = (tmp_path / "draws.csv").read_text().splitlines()[0]
    assert header == "b0,b2,b3,sigma_eps2,sigma_w2,x0,accepted,log_marginal"


# The inverse-gamma noise prior (mean 0.2) keeps both variances near 0.13 when the truth
# is 1e4 times smaller, which biases every density-dependent model; only M0 survives.
PRIOR_CONFLICT = pytest.mark.xfail(strict=True, reason="noise prior incompatible with 1e-4 variance truth")


@pytest.mark.slow
@pytest.mark.parametrize("model", [ModelId.M0] + [pytest.param(m, marks=PRIOR_CONFLICT)
                                                  for m in list(ModelId)[1:]])
def test_low_noise_round_trip_coverage(model):
    base = EXAMPLE_PARAMS[model]
    truth = Params(base.b, base.sigma_eps2 / 1e4, base.sigma_w2 / 1e4, base.x0)
    k = len(model.coef_names)
    covered = 0
    for rep in range(10):
        y = simulate_dataset(model, truth, 50, make_rng(100 + rep)).y
        cfg = SamplerConfig(L=100, n_anneal=500, n_burn=1000, n_sample=2000, seed=rep, collect_bcrlb=False,
                            store_paths=False)
        rec = run_chain(model, y, cfg)
        lo, hi = np.quantile(rec.theta[:, :k], [0.025, 0.975], axis=0)
        covered += np.all((lo <= truth.b) & (np.array(truth.b) <= hi))
    assert covered >= 8
