import hashlib
import warnings

import numpy as np
import pytest
from conftest import FIXTURES

from latvar import stats, synth
from latvar.errors import DataError
from latvar.predictor import CalibrationState, fit_ld, fit_od, update_calibration
from latvar.synth import GeneratorSpec, generate, generate_detailed, preset
from latvar.trace import format_trace


def corr(trace):
    return stats.pearson(trace.column("n_proposals"), trace.column("t_post_ms"))


def digest(trace):
    return hashlib.sha256(format_trace(trace).encode()).hexdigest()


def test_constant_count_noise_free():
    spec = GeneratorSpec("od", 50, (12.0, 0.3), mu_r_ms=200.0, constant_count=250, seed=3)
    tr = generate(spec)
    assert np.all(tr.column("t_post_ms") == pytest.approx(0.3 * 250 + 12.0, abs=1e-9))
    assert len({(r.t_read_ms, r.t_pre_ms, r.t_infer_ms, r.t_post_ms) for r in tr.records}) == 1


def test_remainder_split():
    spec = GeneratorSpec("od", 5, (12.0, 0.3), mu_r_ms=200.0, constant_count=1)
    r = generate(spec).records[0]
    assert (r.t_read_ms, r.t_pre_ms, r.t_infer_ms) == pytest.approx((10.0, 20.0, 170.0))


def test_seed7_poisson_correlation():
    tr = generate(preset("faster-rcnn", seed=7, rate=300.0, scenario_rates=()))
    assert tr.m == 600
    assert corr(tr) >= 0.95


def test_presets_span_correlation_regimes():
    rs = {name: corr(generate(preset(name, seed=7))) for name in ("faster-rcnn", "weak-coupling", "one-stage")}
    assert rs["one-stage"] < 0.6
    assert rs["faster-rcnn"] >= 0.95
    assert 0.3 < rs["weak-coupling"] < 0.7


def test_od_recovery_seed42():
    m = fit_od(generate(preset("faster-rcnn", seed=42)))
    assert m.alpha0_ms == pytest.approx(12.0, rel=0.05)
    assert m.alpha1_ms_per_proposal == pytest.approx(0.3, rel=0.05)


def test_ld_recovery_seed43():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        tr = generate(preset("lane-quadratic", seed=43))
    m = fit_ld(tr)
    for got, want in zip((m.beta0_ms, m.beta1_ms_per_pixel, m.beta2_ms_per_pixel2), (2.0, 0.01, 1e-5)):
        assert got == pytest.approx(want, rel=0.10)


def test_noise_free_recovery_exact():
    od = GeneratorSpec("od", 300, (12.0, 0.3), mu_r_ms=200.0, rate=300.0, seed=1)
    m = fit_od(generate(od))
    assert m.alpha0_ms == pytest.approx(12.0, rel=1e-9)
    assert m.alpha1_ms_per_proposal == pytest.approx(0.3, rel=1e-9)
    ld = GeneratorSpec("ld", 300, (2.0, 0.01, 1e-5), mu_r_ms=40.0, scenario_rates=(("a", 3000.0), ("b", 600.0)), seed=1)
    m = fit_ld(generate(ld))
    for got, want in zip((m.beta0_ms, m.beta1_ms_per_pixel, m.beta2_ms_per_pixel2), (2.0, 0.01, 1e-5)):
        assert got == pytest.approx(want, rel=1e-9)


def test_determinism_and_distinct_seeds():
    a = generate(preset("faster-rcnn", seed=5))
    assert digest(a) == digest(generate(preset("faster-rcnn", seed=5)))
    assert digest(a) != digest(generate(preset("faster-rcnn", seed=6)))


def test_scenario_blocks():
    tr = generate(preset("faster-rcnn", seed=1))
    tags = [r.scenario_tag for r in tr.records]
    assert tags == ["city"] * 200 + ["residential"] * 200 + ["road"] * 200


def test_drift_drives_lambda():
    spec = GeneratorSpec("od", 1000, (12.0, 0.3), mu_r_ms=200.0, sigma_r_ms=1.0, rate=300.0, drift=1.0, seed=2)
    res = generate_detailed(spec)
    remaining = res.trace.column("remaining")
    state = CalibrationState.initial(200.0, decay=1.0)
    lams = []
    for r in remaining:
        state = update_calibration(state, r, 200.0)
        lams.append(state.lam)
    lams = np.array(lams)
    for lo in range(0, 1000, 100):
        window = slice(lo, lo + 100)
        assert np.mean(remaining[window]) == pytest.approx(200.0 * np.mean(res.drift_factors[window]), rel=0.01)
        assert np.mean(lams[window]) == pytest.approx(np.mean(1 / res.drift_factors[window]), rel=0.01)


def test_rain_sweep_cv_decreases():
    tr = generate(preset("rain-sweep", seed=9))
    e2e = tr.column("end_to_end")
    tags = [r.scenario_tag for r in tr.records]
    cvs = [stats.summarize(e2e[[t == tag for t in tags]]).cv for tag in ("rain-0", "rain-50", "rain-100", "rain-200")]
    assert cvs == sorted(cvs, reverse=True)


def test_clamps_reported():
    spec = GeneratorSpec("od", 200, (1.0, 0.0), mu_r_ms=10.0, noise_sigma_ms=5.0, rate=10.0, seed=0)
    with pytest.warns(RuntimeWarning):
        res = generate_detailed(spec)
    assert res.clamped > 0
    assert min(res.trace.column("t_post_ms")) >= 0


@pytest.mark.parametrize("kw", [
    dict(frames=0, rate=1.0),
    dict(frames=10, rate=0.0),
    dict(frames=10, rate=1.0, constant_count=3),
    dict(frames=10, scenario_rates=(("a", -1.0),)),
    dict(frames=10, rate=1.0, noise_sigma_ms=-1.0),
])
def test_invalid_specs(kw):
    with pytest.raises(DataError):
        GeneratorSpec("od", coefficients=(1.0, 1.0), mu_r_ms=1.0, **kw)


@pytest.mark.parametrize("seed", [1, 2, 17, 2024])
def test_lanenet_fixture_constraints(seed):
    tr = synth.make_lanenet_fixture(seed)
    s = stats.summarize(tr.column("end_to_end"), (0.95,))
    assert tr.m == 1000
    assert s.percentiles[0.95] <= 160
    assert 330 <= s.max_ms <= 345
    assert 75 <= s.mean_ms <= 95


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_fixtures_regenerate_byte_identically():
    for name, text in synth.fixture_texts().items():
        assert (FIXTURES / name).read_text() == text, name


def test_manifest_lists_seeds():
    lines = (FIXTURES / "fixtures.manifest").read_text().splitlines()
    assert lines[0] == "name,seed,spec-hash"
    assert {l.split(",")[0] for l in lines[1:]} == set(synth.FIXTURES)


def test_spec_kv_round_trip(tmp_path):
    spec = preset("lane-quadratic", seed=11, drift=0.2)
    from latvar.kvfile import format_kv

    p = tmp_path / "s.spec"
    p.write_text(format_kv(spec.to_kv()))
    assert synth.load_spec(p) == spec
    p.write_text("preset=faster-rcnn\nframes=60\n")
    assert synth.load_spec(p, seed=4) == preset("faster-rcnn", frames=60, seed=4)
    assert spec.spec_hash() == preset("lane-quadratic", seed=99, drift=0.2).spec_hash()
