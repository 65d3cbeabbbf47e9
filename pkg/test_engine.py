"""
Engine Test Suite
The four patterns plus overhead mode over simulated queue pairs.
"""
import pytest

from engine import (
    run_bidirectional,
    run_onesided_latency,
    run_overhead,
    run_pingpong,
    run_point,
    run_unidirectional,
)
from models import BenchmarkMode, SchedulePoint, TransportKind
from simverbs import create_queue_pair_pair
from stats import report_throughput


def _point(size=1, count=1000):
    return SchedulePoint(payload_size=size, message_count=count)


def test_unidirectional_wire_bytes(make_config):
    config = make_config(mode=BenchmarkMode.UNIDIR, queue_depth=128, post_batch=10)
    report = run_unidirectional(create_queue_pair_pair(config), _point(), config)
    assert report.messages == 1000
    assert report.wire_bytes == 27_000
    assert report.rnr_naks == 0
    assert report.payload_bytes_moved == 1000
    assert report.summary is None
    print(f"✅ 1000 x 1B: {report.wire_bytes} wire bytes")


def test_bidirectional_doubles_message_rate(make_config):
    uni_config = make_config(mode=BenchmarkMode.UNIDIR, queue_depth=64)
    bi_config = make_config(mode=BenchmarkMode.BIDIR, queue_depth=64)
    uni = run_unidirectional(create_queue_pair_pair(uni_config), _point(64), uni_config)
    bi = run_bidirectional(create_queue_pair_pair(bi_config), _point(64), bi_config)
    assert bi.messages == 2 * uni.messages
    assert bi.wire_bytes == 2 * uni.wire_bytes
    uni_mmps, _ = report_throughput(uni)
    bi_mmps, _ = report_throughput(bi)
    assert bi_mmps == pytest.approx(2 * uni_mmps, rel=0.01)


def test_rdma_read_counts_responder_bytes(make_config):
    config = make_config(transport=TransportKind.RC_RDMA_READ, queue_depth=16)
    report = run_unidirectional(create_queue_pair_pair(config), _point(8, 100), config)
    assert report.wire_bytes == 100 * (8 + 42)


def test_onesided_latency_equals_link_latency(make_config):
    config = make_config(mode=BenchmarkMode.LATENCY, sim_latency_ns=1000, sim_link_gbps=0)
    report = run_onesided_latency(create_queue_pair_pair(config), _point(1, 500), config)
    assert len(report.latency) == 500
    assert set(report.latency) == {1000}
    assert report.summary.avg_us == pytest.approx(1.0)
    assert report.summary.p9999_us == pytest.approx(1.0)


def test_pingpong_round_trip(make_config):
    config = make_config(mode=BenchmarkMode.PINGPONG, sim_latency_ns=1000, sim_link_gbps=0)
    report = run_pingpong(create_queue_pair_pair(config), _point(1, 200), config)
    assert set(report.latency) == {2000}
    assert report.elapsed_ns == 200 * 2000
    assert report.wire_bytes == 200 * 54
    assert report.payload_bytes_moved == 400
    print("✅ Ping-pong RTT is twice the one-way latency")


def test_pingpong_deliveries_alternate(make_config):
    config = make_config(mode=BenchmarkMode.PINGPONG)
    qps = create_queue_pair_pair(config, record_deliveries=True)
    run_pingpong(qps, _point(4096, 50), config)
    sources = [d.source_port for d in qps[0].fabric.delivery_log]
    assert len(sources) == 100
    assert sources == [0, 1] * 50


def test_pingpong_echo_is_verified_at_large_sizes(make_config):
    config = make_config(mode=BenchmarkMode.PINGPONG, min_size=1 << 20, max_size=1 << 20)
    report = run_pingpong(create_queue_pair_pair(config), _point(1 << 20, 3), config)
    assert report.messages == 3


def test_overhead_residual_is_zero(make_config):
    config = make_config(mode=BenchmarkMode.OVERHEAD, max_size=8192)
    for size in (1, 64, 4096, 8192):
        report = run_overhead(create_queue_pair_pair(config), _point(size, 20), config)
        assert report.overhead.residual_unmodeled == 0
        assert not report.overhead.anomaly
    one_byte = run_overhead(create_queue_pair_pair(config), _point(1, 20), config)
    assert one_byte.overhead.overhead_percent == pytest.approx(2600.0)


def test_slow_receiver_shows_rnr_naks(make_config):
    slow = make_config(queue_depth=16, sim_recv_delay_ns=50_000)
    prompt = make_config(queue_depth=16)
    slow_report = run_unidirectional(create_queue_pair_pair(slow), _point(1, 200), slow)
    prompt_report = run_unidirectional(create_queue_pair_pair(prompt), _point(1, 200), prompt)
    assert slow_report.rnr_naks > 0
    assert prompt_report.rnr_naks == 0
    assert slow_report.wire_bytes > prompt_report.wire_bytes
    assert slow_report.elapsed_ns > prompt_report.elapsed_ns


def test_warmup_is_excluded(make_config):
    config = make_config(queue_depth=16, base_count=1000, warmup_count=100)
    report = run_unidirectional(create_queue_pair_pair(config), _point(1, 1000), config)
    assert report.messages == 900
    assert report.wire_bytes == 900 * 27


@pytest.mark.parametrize("mode", list(BenchmarkMode))
def test_run_point_dispatches_every_mode(make_config, mode):
    config = make_config(mode=mode)
    report = run_point(create_queue_pair_pair(config), _point(16, 10), config, run_index=2)
    assert report.mode is mode
    assert report.run_index == 2
    assert report.elapsed_ns > 0
