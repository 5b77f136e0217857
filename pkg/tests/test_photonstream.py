import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chi2_contingency

from spsource._validation import PreconditionError
from spsource.emitter import DriveProfile, EmitterParams, mcwf_simulate
from spsource.optics import GridSpec, gaussian_pulse
from spsource.photonstream import (
    MAGIC,
    BernoulliSampler,
    DetectorModel,
    JumpRecordSampler,
    PnSampler,
    PulseTrain,
    TimestampStream,
    apply_loss,
    beamsplit,
    detect,
    detection_flags,
    emit_stream,
    merge,
    pulse_slot,
)


def within_binomial(k, n, p, z=3.0):
    return abs(k - n * p) <= z * math.sqrt(n * p * (1 - p))


def periodic(n, period_ps, channel=0):
    t = np.arange(n, dtype=np.int64) * int(period_ps)
    return TimestampStream(np.full(n, channel, np.uint8), t)


def test_pulse_picking_spacing():
    train = PulseTrain(76.13, 10, 3)
    assert train.effective_rate == pytest.approx(25.3767, abs=1e-4)
    assert train.period_ps / 1e3 == pytest.approx(39.41, abs=0.01)


def test_ideal_source_one_record_per_pulse():
    train = PulseTrain(76.13, 5000, 3)
    s = emit_stream(1.0, train, 19.0, seed=1)
    assert len(s) == 5000
    assert np.array_equal(pulse_slot(s.times, train), np.arange(5000))


def test_bernoulli_record_count():
    s = emit_stream(0.5652, PulseTrain(25.38, 10**6, 1), 19.0, seed=2)
    assert within_binomial(len(s), 10**6, 0.5652)


def test_emit_deterministic_and_chunk_independent():
    train = PulseTrain(76.13, 20_000, 3)
    a = emit_stream(0.7, train, 19.0, seed=9)
    b = emit_stream(0.7, train, 19.0, seed=9, chunk=777)
    assert np.array_equal(a.times, b.times)
    assert a.digest() == b.digest()
    assert emit_stream(0.7, train, 19.0, seed=10).digest() != a.digest()


def test_duty_cycle_thins_pulses():
    train = PulseTrain(25.0, 10**5, 1)
    s = emit_stream(1.0, train, 19.0, seed=4, duty_cycle=0.8)
    assert within_binomial(len(s), 10**5, 0.8)


def test_pn_sampler_photon_numbers():
    pn = np.array([0.1, 0.6, 0.3])
    train = PulseTrain(1.0, 50_000, 1)  # 1 us period, no overlap between pulses
    s = emit_stream(PnSampler(pn), train, 19.0, seed=3)
    per_pulse = np.bincount(pulse_slot(s.times, train), minlength=train.n_pulses)
    freq = np.bincount(per_pulse, minlength=3) / train.n_pulses
    assert np.allclose(freq, pn, atol=0.01)


def test_jump_record_sampler_replays_offsets():
    d = DriveProfile.from_pulse(gaussian_pulse(46.0, math.pi, GridSpec(2**14, 0.02)))
    out = mcwf_simulate(d, EmitterParams(), 2000, seed=1)
    sampler = JumpRecordSampler(out)
    train = PulseTrain(25.0, 20_000, 1)
    s = emit_stream(sampler, train, 19.0, seed=5)
    assert len(s) / train.n_pulses == pytest.approx(out.mean(), abs=0.02)
    off = s.times % int(train.period_ps)
    assert off.min() >= 0 and off.max() < 2000  # ps after the earliest emission


def test_stream_invariants():
    with pytest.raises(PreconditionError):
        TimestampStream(np.zeros(2, np.uint8), np.array([5, 5]))
    with pytest.raises(PreconditionError):
        TimestampStream(np.zeros(1, np.uint8), np.array([-1]))
    with pytest.raises(PreconditionError):
        TimestampStream(np.array([0, 1], np.uint8), np.array([5, 3]))
    # equal times on different channels are fine
    TimestampStream(np.array([0, 1], np.uint8), np.array([5, 5]))


def test_build_breaks_ties():
    s = TimestampStream.build(np.zeros(4, np.uint8), np.array([10, 10, 10, 3]))
    assert list(s.times) == [3, 10, 11, 12]


def test_loss_trivial_cases():
    s = emit_stream(1.0, PulseTrain(76.13, 1000, 3), 19.0, seed=1)
    assert np.array_equal(apply_loss(s, 1.0, 3).times, s.times)
    assert len(apply_loss(s, 0.0, 3)) == 0


def test_loss_composition():
    s = periodic(10**6, 1000)
    twice = apply_loss(apply_loss(s, 0.8, 1), 0.7, 2)
    once = apply_loss(s, 0.56, 3)
    diff = len(twice) - len(once)
    sd = math.sqrt(2 * 10**6 * 0.56 * 0.44)
    assert abs(diff) <= 3 * sd


@given(st.floats(0, 1), st.integers(0, 2**32))
@settings(max_examples=20, deadline=None)
def test_loss_keeps_order_and_subset(t, seed):
    s = periodic(2000, 100)
    out = apply_loss(s, t, seed)
    assert np.all(np.diff(out.times) > 0)
    assert np.all(np.isin(out.times, s.times))


def test_beamsplit_cases():
    s = periodic(10**6, 1000)
    a, b = beamsplit(s, 0.0, 1)
    assert len(a) == 0 and len(b) == len(s)
    a, b = beamsplit(s, 0.5, 1)
    assert within_binomial(len(a), 10**6, 0.5)
    assert np.array_equal(np.sort(np.concatenate([a.times, b.times])), s.times)
    a, b = beamsplit(s, 0.45, 2)
    assert within_binomial(len(a), 10**6, 0.45)


def test_loss_and_beamsplit_commute_statistically():
    s = periodic(10**5, 1000)
    blocks = 1000

    def block_counts(x):
        return np.bincount(x.times // (1000 * blocks), minlength=10**5 // blocks)

    a1, _ = beamsplit(apply_loss(s, 0.6, 1), 0.4, 2)
    a2, _ = beamsplit(s, 0.4, 3)
    a2 = apply_loss(a2, 0.6, 4)
    c1, c2 = block_counts(a1), block_counts(a2)
    bins = np.linspace(min(c1.min(), c2.min()), max(c1.max(), c2.max()) + 1, 6)
    table = np.vstack([np.histogram(c1, bins)[0], np.histogram(c2, bins)[0]])
    table = table[:, table.sum(axis=0) > 0]
    assert chi2_contingency(table).pvalue > 1e-3


def test_detect_identity():
    s = emit_stream(0.9, PulseTrain(76.13, 5000, 3), 19.0, seed=1)
    assert np.array_equal(detect(s, DetectorModel(1.0, 0.0, 0.0), 2).times, s.times)


def test_dead_time_drops_close_record():
    s = TimestampStream(np.zeros(2, np.uint8), np.array([0, 20_000]))
    assert list(detect(s, DetectorModel(1.0, 30.0, 0.0), 1).times) == [0]
    # other channels are independent
    s2 = TimestampStream(np.array([0, 1], np.uint8), np.array([0, 20_000]))
    assert len(detect(s2, DetectorModel(1.0, 30.0, 0.0), 1)) == 2


def test_dead_time_on_unpicked_train_accepts_one_third():
    train = PulseTrain(76.13, 30_000, 1)
    s = emit_stream(1.0, train, 1e6, seed=1)  # near-instant decay: offsets ~1 fs
    out = detect(s, DetectorModel(1.0, 30.0, 0.0), 2)
    assert len(out) / len(s) == pytest.approx(1 / 3, abs=1e-3)
    picked = emit_stream(1.0, PulseTrain(76.13, 10_000, 3), 1e6, seed=1)
    assert len(detect(picked, DetectorModel(1.0, 30.0, 0.0), 2)) == 10_000


def test_detect_efficiency_and_jitter_keep_order():
    s = emit_stream(1.0, PulseTrain(76.13, 10**5, 3), 19.0, seed=1)
    out = detect(s, DetectorModel(0.79, 30.0, 50.0), 7)
    assert within_binomial(len(out), 10**5, 0.79)
    assert np.all(np.diff(out.times) > 0)


def test_detector_model_validation():
    with pytest.raises(PreconditionError):
        DetectorModel(1.2)
    with pytest.raises(PreconditionError):
        DetectorModel(0.5, dead_time=-1.0)


def test_csv_and_binary_roundtrip(tmp_path):
    a = emit_stream(0.5, PulseTrain(76.13, 2000, 3), 19.0, seed=8)
    s = merge(a, a.with_channel(1))
    s.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "# rep_rate_mhz=76.13 pick_factor=3 seed=8"
    assert lines[1] == "channel,t_ps"
    back = TimestampStream.from_csv(tmp_path / "s.csv")
    assert np.array_equal(back.times, s.times) and np.array_equal(back.channels, s.channels)
    assert back.seed == 8 and back.pick_factor == 3
    s.to_binary(tmp_path / "s.bin")
    raw = (tmp_path / "s.bin").read_bytes()
    assert raw[:4] == MAGIC and len(raw) == 4 + 9 * len(s)
    back = TimestampStream.from_binary(tmp_path / "s.bin")
    assert np.array_equal(back.times, s.times) and np.array_equal(back.channels, s.channels)
    (tmp_path / "bad.bin").write_bytes(b"XXXX")
    with pytest.raises(ValueError):
        TimestampStream.from_binary(tmp_path / "bad.bin")


def test_detection_flags():
    train = PulseTrain(25.0, 10, 1)
    s = TimestampStream(np.zeros(3, np.uint8), np.array([10, 40_050, 200_001]))
    flags = detection_flags(s, train)
    assert list(np.flatnonzero(flags)) == [0, 1, 5]


def test_sampler_validation():
    with pytest.raises(PreconditionError):
        BernoulliSampler(1.5)
    with pytest.raises(PreconditionError):
        PnSampler([0.5, 0.6])
