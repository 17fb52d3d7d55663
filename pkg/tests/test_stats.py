import math
import statistics

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from latvar import stats
from latvar.errors import DataError, UndefinedCorrelationError
from latvar.trace import ingest_trace


def test_constant_series():
    s = stats.summarize([5, 5, 5])
    assert (s.mean_ms, s.range_ms, s.cv, s.std_ms) == (5.0, 0.0, 0.0, 0.0)


def test_hand_computed_series():
    s = stats.summarize([1, 5, 3])
    assert s.range_ms == 4.0
    assert s.mean_ms == 3.0
    assert s.std_ms == pytest.approx(math.sqrt(8 / 3), rel=1e-12)
    assert s.std_ms == pytest.approx(1.632993, abs=1e-6)
    assert s.cv == pytest.approx(0.544331, abs=1e-6)


def test_percentiles_linear_interpolation():
    # rank h = (n-1) q: for [10, 20, 30, 40] and q=0.5 -> h=1.5 -> 25
    s = stats.summarize([40, 10, 30, 20], quantiles=(0.5, 0.8))
    assert s.percentiles[0.5] == 25.0
    assert s.percentiles[0.8] == pytest.approx(34.0)  # h = 2.4


def test_lanenet_series_cv_matches_stdlib(fixtures_dir):
    series = ingest_trace(fixtures_dir / "lanenet_fixture.csv").column("end_to_end").tolist()
    s = stats.summarize(series)
    oracle_cv = statistics.pstdev(series) / statistics.fmean(series)
    assert s.cv == pytest.approx(oracle_cv, rel=1e-12)
    assert s.range_ms == pytest.approx(max(series) - min(series), abs=1e-9)
    qs = statistics.quantiles(series, n=100, method="inclusive")
    assert s.percentiles[0.5] == pytest.approx(qs[49], rel=1e-12)
    assert s.percentiles[0.8] == pytest.approx(qs[79], rel=1e-12)
    assert s.percentiles[0.99] == pytest.approx(qs[98], rel=1e-12)


def test_summarize_errors():
    with pytest.raises(DataError):
        stats.summarize([])
    with pytest.raises(DataError, match=r"\[2\]"):
        stats.summarize([1.0, 2.0, float("nan")])


def test_pearson_exact_cases():
    assert stats.pearson([1, 2, 3], [1, 2, 3]) == 1.0
    assert stats.pearson([1, 2, 3], [3, 2, 1]) == -1.0


def test_pearson_errors():
    with pytest.raises(DataError):
        stats.pearson([1, 2], [1, 2, 3])
    with pytest.raises(UndefinedCorrelationError):
        stats.pearson([1, 1, 1], [1, 2, 3])


def test_pearson_matches_stdlib(fixtures_dir):
    trace = ingest_trace(fixtures_dir / "synthetic_od_600.csv")
    x = trace.column("n_proposals").tolist()
    y = trace.column("t_post").tolist()
    assert stats.pearson(x, y) == pytest.approx(statistics.correlation(x, y), rel=1e-12)


def test_cdf_points():
    assert stats.cdf_points([2]) == [(2.0, 1.0)]
    assert stats.cdf_points([3, 1]) == [(1.0, 0.5), (3.0, 1.0)]
    with pytest.raises(DataError):
        stats.cdf_points([])


def test_cdf_matches_counting_oracle(fixtures_dir):
    series = ingest_trace(fixtures_dir / "synthetic_od_600.csv").column("end_to_end")
    pts = stats.cdf_points(series)
    n = len(series)
    for v, f in pts[::37]:
        # fraction of samples <= v, counted directly (values are distinct)
        assert f == pytest.approx(sum(1 for s in series if s <= v) / n)
    assert pts[-1][1] == 1.0
    assert [v for v, _ in pts] == sorted(series)


def test_cdf_text_format():
    assert stats.format_cdf([(1.0, 0.5), (3.0, 1.0)]).splitlines()[0] == "value_ms,fraction"


series_st = st.lists(st.floats(0.1, 1e4, allow_nan=False), min_size=1, max_size=50)


@given(series_st, st.randoms())
def test_summarize_permutation_invariant(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    assert stats.summarize(xs) == stats.summarize(ys)


@given(series_st, st.floats(0.01, 100))
def test_scaling(xs, c):
    a = stats.summarize(xs)
    b = stats.summarize([c * x for x in xs])
    assert b.mean_ms == pytest.approx(c * a.mean_ms, rel=1e-12)
    assert b.std_ms == pytest.approx(c * a.std_ms, rel=1e-9, abs=1e-9 * c * a.mean_ms)
    assert b.range_ms == pytest.approx(c * a.range_ms, rel=1e-12, abs=1e-12 * c * a.max_ms)
    assert b.cv == pytest.approx(a.cv, rel=1e-9, abs=1e-12)
    for q in a.percentiles:
        assert b.percentiles[q] == pytest.approx(c * a.percentiles[q], rel=1e-12)


@given(series_st)
def test_summary_invariants(xs):
    s = stats.summarize(xs, quantiles=(0.1, 0.5, 0.9, 0.99))
    assert s.range_ms == s.max_ms - s.min_ms >= 0
    assert s.cv >= 0
    vals = [s.percentiles[q] for q in sorted(s.percentiles)]
    assert vals == sorted(vals)


pairs = st.integers(3, 30).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-1e3, 1e3), min_size=n, max_size=n),
        st.lists(st.floats(-1e3, 1e3), min_size=n, max_size=n),
    )
)


@given(pairs, st.floats(0.1, 10), st.floats(-100, 100))
def test_pearson_affine_invariance(xy, a, b):
    x, y = map(np.asarray, xy)
    if np.ptp(x) < 1e-3 or np.ptp(y) < 1e-3:
        return
    r = stats.pearson(x, y)
    assert -1.0 <= r <= 1.0
    assert stats.pearson(y, x) == pytest.approx(r, abs=1e-12)
    assert stats.pearson(a * x + b, y) == pytest.approx(r, abs=1e-9)
    assert stats.pearson(-a * x + b, y) == pytest.approx(-r, abs=1e-9)
