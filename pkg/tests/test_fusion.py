import dataclasses
import itertools

import numpy as np
import pytest
from conftest import CONFIGS
from hypothesis import given, settings
from hypothesis import strategies as st

from latvar import fusion
from latvar.errors import ConfigError, DataError
from latvar.fusion import (
    LatencyModel,
    StreamSpec,
    SyncConfig,
    format_fusion,
    load_fusion_config,
    simulate_fusion,
)

BACKENDS = ["python"] + (["compiled"] if fusion.BACKEND == "compiled" else [])


def brute_force_sync(arrival, stamps, streams, k, queue_size, slop):
    """Exhaustive reference: try every tuple, keep the best by (span, min stamp)."""
    queues = [[] for _ in range(k)]
    last = [float("-inf")] * k
    emits, picks = [], []
    for t, x, s in zip(arrival, stamps, streams):
        if x <= last[s]:
            continue
        if len(queues[s]) == queue_size:
            queues[s].pop(0)
        queues[s].append(x)
        pools = [[x] if j == s else queues[j] for j in range(k)]
        best = None
        for combo in itertools.product(*pools):
            span = max(combo) - min(combo)
            if span > slop:
                continue
            key = (span, min(combo), combo)
            if best is None or key < best:
                best = key
        if best is None:
            continue
        emits.append(t)
        picks.append(best[2])
        for j, c in enumerate(best[2]):
            queues[j] = [v for v in queues[j] if v > c]
            last[j] = c
    return emits, picks


def two_stream(lat_a, lat_b, period=100.0, queue=100, duration=2000.0, seed=0):
    cfg = SyncConfig(2, queue_size=queue, slop_ms=100.0, duration_ms=duration, seed=seed)
    streams = [StreamSpec(period, LatencyModel.constant(lat_a)), StreamSpec(period, LatencyModel.constant(lat_b))]
    return cfg, streams


@pytest.fixture(scope="module")
def congested():
    return load_fusion_config(CONFIGS / "fusion_congested.cfg", seed=11)


@pytest.mark.parametrize("backend", BACKENDS)
def test_aligned_streams(backend):
    res = simulate_fusion(*two_stream(10, 10), backend=backend)
    assert res.fusion_count == 20
    assert np.all(res.inter_fusion_delays_ms == 100.0)
    assert res.dropped_per_stream == (0, 0)
    assert np.all(res.spans_ms == 0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_slow_stream_sets_the_pace(backend):
    # A delivers frame n at 100n+10, B at 100n+200; with one slot per queue,
    # A's slot at each B arrival holds the frame one period ahead, still
    # within the slop, so every B arrival fuses except the last (A has no
    # frame after it).
    res = simulate_fusion(*two_stream(10, 200, queue=1), backend=backend)
    assert np.array_equal(res.emit_times_ms, 200.0 + 100.0 * np.arange(19))
    assert np.all(res.inter_fusion_delays_ms == 100.0)
    assert np.all(res.spans_ms <= 100.0)


def test_queue_size_reduces_delay_spread(congested):
    cfg, streams = congested
    small = simulate_fusion(dataclasses.replace(cfg, queue_size=100), streams)
    large = simulate_fusion(dataclasses.replace(cfg, queue_size=1000), streams)
    assert np.std(large.inter_fusion_delays_ms) < np.std(small.inter_fusion_delays_ms)
    assert large.fusion_count > small.fusion_count
    assert sum(small.dropped_per_stream) > sum(large.dropped_per_stream)


def test_heavy_tail_produces_multi_second_gap(congested):
    res = simulate_fusion(*congested)
    assert res.worst_delay_ms > 2000


@pytest.mark.parametrize("queue", [1, 10, 100, 1000])
def test_invariants_on_congested(congested, queue):
    cfg, streams = congested
    res = simulate_fusion(dataclasses.replace(cfg, queue_size=queue), streams)
    assert np.all(res.spans_ms <= cfg.slop_ms)
    if res.fusion_count > 1:
        assert np.all(np.diff(res.fused_stamps_ms, axis=0) > 0)
    assert res.fusion_count <= min(res.delivered_per_stream)
    assert np.all(np.diff(res.emit_times_ms) >= 0)


def test_determinism(congested):
    a = simulate_fusion(*congested)
    b = simulate_fusion(*congested)
    assert format_fusion(a) == format_fusion(b)
    cfg, streams = congested
    c = simulate_fusion(dataclasses.replace(cfg, seed=12), streams)
    assert format_fusion(c) != format_fusion(a)


@pytest.mark.skipif(fusion.BACKEND != "compiled", reason="extension not built")
@pytest.mark.parametrize("queue", [1, 3, 100, 1000])
def test_kernels_agree_on_congested(congested, queue):
    cfg, streams = congested
    cfg = dataclasses.replace(cfg, queue_size=queue)
    py = simulate_fusion(cfg, streams, backend="python")
    cc = simulate_fusion(cfg, streams, backend="compiled")
    assert format_fusion(py) == format_fusion(cc)
    assert np.array_equal(py.fused_stamps_ms, cc.fused_stamps_ms)


events_st = st.integers(2, 4).flatmap(
    lambda k: st.tuples(
        st.just(k),
        st.lists(
            st.tuples(st.integers(0, 40), st.integers(0, 30), st.integers(0, k - 1)),
            min_size=1,
            max_size=40,
        ),
        st.integers(1, 4),
        st.sampled_from([0.5, 2.0, 5.0]),
    )
)


@settings(max_examples=300, deadline=None)
@given(events_st)
def test_kernels_match_brute_force(case):
    k, raw, queue, slop = case
    # one delivery per (stream, stamp), sorted as the simulator orders events
    seen = {}
    for t, x, s in raw:
        seen.setdefault((s, x), t)
    ev = sorted((float(t), s, float(x)) for (s, x), t in seen.items())
    t = [e[0] for e in ev]
    x = [e[2] for e in ev]
    s = [e[1] for e in ev]
    want_emit, want_picks = brute_force_sync(t, x, s, k, queue, slop)
    for backend in BACKENDS:
        emit, spans, chosen, *_ = fusion.get_kernel(backend)(
            np.array(t), np.array(x), np.array(s), k, queue, slop
        )
        assert emit.tolist() == want_emit
        assert [tuple(r) for r in chosen.tolist()] == want_picks
        assert np.all(spans <= slop)


def test_latency_models():
    rng = np.random.default_rng(0)
    vals, clamped = LatencyModel.gaussian(1.0, 5.0).sample(1000, rng)
    assert clamped > 0 and np.all(vals >= 0)
    vals, _ = LatencyModel.from_series([1, 2, 3]).sample(7, rng)
    assert vals.tolist() == [1, 2, 3, 1, 2, 3, 1]
    with pytest.raises(DataError):
        LatencyModel("uniform", (1.0,))
    with pytest.raises(DataError):
        LatencyModel.constant(-1)


def test_config_validation():
    with pytest.raises(DataError):
        SyncConfig(1)
    with pytest.raises(DataError):
        SyncConfig(2, queue_size=0)
    with pytest.raises(DataError):
        SyncConfig(2, slop_ms=0)
    cfg, streams = two_stream(10, 10)
    with pytest.raises(DataError):
        simulate_fusion(dataclasses.replace(cfg, k_streams=3), streams)
    with pytest.raises(DataError):
        simulate_fusion(dataclasses.replace(cfg, duration_ms=500), streams)


def test_zero_fusions_is_not_an_error():
    cfg, streams = two_stream(10, 500)
    cfg = dataclasses.replace(cfg, slop_ms=0.5, queue_size=1)
    # B runs at half rate; when its frame lands, A's single slot already
    # holds a frame 400 ms newer
    streams = [streams[0], StreamSpec(200.0, LatencyModel.constant(500))]
    res = simulate_fusion(cfg, streams)
    assert res.fusion_count == 0
    assert res.worst_delay_ms == 0.0
    assert "# fusion_count=0" in format_fusion(res)


def test_output_format():
    res = simulate_fusion(*two_stream(10, 10, duration=1000))
    lines = format_fusion(res).splitlines()
    assert lines[0] == "fusion_index,emit_time_ms,inter_fusion_delay_ms,span_ms"
    assert lines[1] == "0,10.000000,,0.000000"
    assert lines[2] == "1,110.000000,100.000000,0.000000"
    assert "# dropped_per_stream=0;0" in lines


def test_config_file_parsing(tmp_path, fixtures_dir):
    p = tmp_path / "f.cfg"
    trace = fixtures_dir / "lanenet_fixture.csv"
    p.write_text(
        f"k_streams=2\nduration_ms=3000\nperiod_ms=50\nstream.0.latency=gaussian:20,2\n"
        f"stream.1.latency=trace:{trace}\nstream.1.period_ms=100\n"
    )
    cfg, streams = load_fusion_config(p, seed=3)
    assert cfg.queue_size == 100 and cfg.slop_ms == 100
    assert streams[0] == StreamSpec(50.0, LatencyModel.gaussian(20, 2))
    assert streams[1].latency.kind == "trace" and len(streams[1].latency.series) == 1000
    for bad in ("k_streams=2\nduration_ms=1000\nperiod_ms=50\nstream.0.latency=constant:1\n",
                "k_streams=2\nduration_ms=1000\nperiod_ms=50\nstream.0.latency=constant:1\nstream.1.latency=poisson:3\n",
                "k_streams=2\nduration_ms=1000\nperiod_ms=50\nstream.2.latency=constant:1\n",
                "k_streams=2\nduration_ms=1000\nperiod_ms=50\nqueue=3\n"):
        p.write_text(bad)
        with pytest.raises(ConfigError):
            load_fusion_config(p, seed=0)
