import math

import numpy as np
import pytest

from rabitomo.errors import ConfigurationError, DegenerateFitError, PlanningError, TraceFormatError, ValidationError
from rabitomo.fitting import fit_trace
from rabitomo.qubit import PureState, state_fidelity
from rabitomo.rabi import RabiModel, RotationAxis, forward_phases, ideal_signal
from rabitomo.readout import (CSV_HEADER, Channel, ChannelNoise, PulseErrors, PulseSequence,
                              channel_baseline, default_tau_grid, parse_trace_csv,
                              photocurrent_amplitude, plan_envelopes, realize_state,
                              rpqst_sequence, rpqst_trace_pair, synthesize_trace, trace_to_csv)
from rabitomo.tomography import amplitude_significant

MODEL = RabiModel()


def _plan(target=PureState.from_degrees(15.37, 235), axis="x", env=0.5, n=40, repeats=1):
    seq = rpqst_sequence(target, axis, MODEL)
    return plan_envelopes(seq, env, default_tau_grid(MODEL, n), repeats)


def test_sequence_duration_is_sum_of_segments():
    seq = PulseSequence(prep_duration=1e-7, probe_duration=2e-7)
    assert seq.duration == pytest.approx(2e-6 + 1e-7 + 2e-7 + 3e-6 + 1e-6)
    with pytest.raises(ValidationError):
        PulseSequence(dead_time=-1.0)
    with pytest.raises(ValidationError):
        PulseSequence(laser_init_duration=0, laser_readout_duration=0, dead_time=0)


def test_planner_examples():
    seq = PulseSequence(laser_init_duration=4e-6, laser_readout_duration=5e-6, dead_time=1e-6)
    assert seq.duration == pytest.approx(10e-6)
    assert plan_envelopes(seq, 0.5, [0.0]).repetitions == (50000,)
    seq = PulseSequence(laser_init_duration=0.0, laser_readout_duration=0.499, dead_time=0.0)
    assert plan_envelopes(seq, 0.5, [0.0]).repetitions == (1,)
    plan = plan_envelopes(PulseSequence(), 0.5, np.arange(40) * 1e-9, sweep_repeats=3)
    order = plan.visit_order()
    assert len(order) == 120 and order == list(range(40)) * 3


def test_planner_per_envelope_repetitions_and_errors():
    seq = PulseSequence(laser_init_duration=0, laser_readout_duration=1e-6, dead_time=0)
    plan = plan_envelopes(seq, 10e-6, [0.0, 1e-6, 4e-6])
    assert plan.repetitions == (10, 5, 2)
    with pytest.raises(PlanningError, match="envelope_duration"):
        plan_envelopes(seq, 0.5e-6, [0.0])
    with pytest.raises(PlanningError, match="envelope_duration"):
        plan_envelopes(seq, 3e-6, [0.0, 5e-6])
    with pytest.raises(PlanningError):
        plan_envelopes(seq, 1.0, [2e-6, 1e-6])
    with pytest.raises(PlanningError):
        plan_envelopes(seq, 1.0, [0.0], sweep_repeats=0)


def test_preparation_pulse_realizes_target():
    for th, ph in [(15.37, 235), (45, 30), (90, 0), (120, 300), (180, 0)]:
        s = PureState.from_degrees(th, ph)
        r = realize_state(rpqst_sequence(s, "x", MODEL), MODEL)
        assert state_fidelity(s, r) == pytest.approx(1.0, abs=1e-12)
    s = PureState.from_degrees(45, 30)
    r = realize_state(rpqst_sequence(s, "x", MODEL), MODEL, PulseErrors(math.radians(5), 0.0))
    assert r.theta == pytest.approx(s.theta, abs=1e-12)
    assert r.phi == pytest.approx(s.phi + math.radians(5), abs=1e-12)


def test_photocurrent_amplitude():
    assert photocurrent_amplitude(0) == 0.0
    assert photocurrent_amplitude(3.121e7) == pytest.approx(10e-12, abs=0.01e-12)
    lo, hi = photocurrent_amplitude([3.12e6, 3.12e8])
    assert 0.995e-12 <= lo <= 1.005e-12 and 99.5e-12 <= hi <= 100.5e-12
    with pytest.raises(ValidationError):
        photocurrent_amplitude(-1.0)


def test_channel_noise_validation():
    with pytest.raises(ConfigurationError):
        ChannelNoise(Channel.PC, pc_mean_current=1e-9)
    with pytest.raises(ConfigurationError):
        ChannelNoise(Channel.PC, pc_mean_current=5e-11, pc_band=(1e-12, 2e-11))
    with pytest.raises(ConfigurationError):
        ChannelNoise(Channel.PL, pl_count_rate=-1)
    ChannelNoise(Channel.PL, pc_mean_current=1e-9)  # band applies to the PC channel only


@pytest.mark.parametrize("channel", [Channel.PL, Channel.PC])
def test_noiseless_synthesis_equals_ideal_signal(channel):
    s = PureState.from_degrees(45, 30)
    for axis in RotationAxis:
        plan = _plan(s, axis, repeats=2)
        noise = ChannelNoise(channel, enabled=False)
        tr = synthesize_trace(MODEL, s, axis, plan, noise)
        base = channel_baseline(noise, plan.sequence)
        ideal = ideal_signal(MODEL.with_baseline(base), s, axis, plan.tau_array())
        np.testing.assert_allclose(tr.signal, ideal, rtol=1e-12)


def test_pl_poisson_mean_equals_variance():
    s = PureState.from_degrees(90, 0)  # x-drive leaves z = 0: constant mean
    seq = rpqst_sequence(s, "x", MODEL)
    taus = np.linspace(0, 1e-9, 10_000)
    env = 1.5 * seq.with_probe(taus[-1]).duration
    plan = plan_envelopes(seq, env, taus)
    assert set(plan.repetitions) == {1}
    rate = 1e4 / seq.laser_readout_duration
    tr = synthesize_trace(MODEL, s, "x", plan, ChannelNoise(Channel.PL, pl_count_rate=rate, rng_seed=9))
    assert np.all(tr.samples >= 0) and np.all(tr.samples == np.round(tr.samples))
    assert tr.samples.mean() == pytest.approx(1e4, rel=0.01)
    assert tr.samples.var(ddof=1) == pytest.approx(1e4, rel=0.05)


@pytest.mark.parametrize("channel", [Channel.PL, Channel.PC])
def test_seeded_synthesis_is_bit_identical(channel):
    plan = _plan()
    s = PureState.from_degrees(15.37, 235)
    a = synthesize_trace(MODEL, s, "x", plan, ChannelNoise(channel, rng_seed=42))
    b = synthesize_trace(MODEL, s, "x", plan, ChannelNoise(channel, rng_seed=42))
    c = synthesize_trace(MODEL, s, "x", plan, ChannelNoise(channel, rng_seed=43))
    assert trace_to_csv(a) == trace_to_csv(b)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


@pytest.mark.parametrize("channel", [Channel.PL, Channel.PC])
def test_mean_of_noisy_traces_converges(channel):
    s = PureState.from_degrees(35, 120)
    plan = _plan(s, "y", n=16)
    noise = ChannelNoise(channel, pl_count_rate=2e3, pc_noise_rms=2e-12)
    ideal = synthesize_trace(MODEL, s, "y", plan, replace_enabled(noise)).signal
    n = 10_000
    traces = np.array([synthesize_trace(MODEL, s, "y", plan, noise.with_seed(i)).signal
                       for i in range(n)])
    mean = traces.mean(axis=0)
    se = traces.std(axis=0, ddof=1) / math.sqrt(n)
    z = (mean - ideal) / se
    # 16 points: all inside a 4 sigma band, and the chi-square consistent with pure scatter
    assert np.all(np.abs(z) < 4.0)
    assert abs(np.mean(z ** 2) - 1.0) < 3 * math.sqrt(2 / z.size)
    # a quarter of the traces leaves a larger error
    half = traces[: n // 4].mean(axis=0)
    assert np.sqrt(np.mean((half - ideal) ** 2)) > np.sqrt(np.mean((mean - ideal) ** 2))


def replace_enabled(noise):
    from dataclasses import replace
    return replace(noise, enabled=False)


def test_trace_pair_shares_state_and_scales():
    s = PureState.from_degrees(45, 30)
    px, py = _plan(s, "x"), _plan(s, "y")
    pair = rpqst_trace_pair(MODEL, s, px, py, ChannelNoise(Channel.PL, enabled=False),
                            ChannelNoise(Channel.PC, enabled=False))
    assert len(pair) == 4
    for axis in RotationAxis:
        pl, pc = pair[(Channel.PL, axis)], pair[(Channel.PC, axis)]
        np.testing.assert_array_equal(pl.tau_values, pc.tau_values)
        np.testing.assert_allclose(pl.signal / pl.signal[0], pc.signal / pc.signal[0], rtol=1e-12)
    with pytest.raises(ValidationError):
        rpqst_trace_pair(MODEL, s, px, _plan(s, "y", n=30), ChannelNoise(Channel.PL),
                         ChannelNoise(Channel.PC))
    with pytest.raises(ValidationError):
        rpqst_trace_pair(MODEL, s, px, py, ChannelNoise(Channel.PC), ChannelNoise(Channel.PC))


def test_trace_pair_noise_streams_are_disjoint():
    s = PureState.from_degrees(45, 30)
    pair = rpqst_trace_pair(MODEL, s, _plan(s, "x"), _plan(s, "y"),
                            ChannelNoise(Channel.PL, rng_seed=5), ChannelNoise(Channel.PC, rng_seed=5))
    resid = {}
    for key, tr in pair.items():
        clean = synthesize_trace(MODEL, s, tr.axis, _plan(s, tr.axis),
                                 replace_enabled(ChannelNoise(tr.channel)))
        resid[key] = (tr.signal - clean.signal) / np.std(tr.signal - clean.signal)
    keys = list(resid)
    for i in range(len(keys)):
        for j in range(i + 1, len(keys)):
            assert abs(np.corrcoef(resid[keys[i]], resid[keys[j]])[0, 1]) < 0.6


def test_reported_state_phases_within_fit_tolerance():
    s = PureState.from_degrees(15, 235)
    pp = forward_phases(s)
    pair = rpqst_trace_pair(MODEL, s, _plan(s, "x"), _plan(s, "y"),
                            ChannelNoise(Channel.PL, rng_seed=11), ChannelNoise(Channel.PC, rng_seed=11))
    for (ch, axis), tr in pair.items():
        fit = fit_trace(tr)
        want = -pp.alpha if axis is RotationAxis.X else pp.beta
        err = math.remainder(fit.phase - want, 2 * math.pi)
        assert abs(err) < 4 * fit.phase_sigma, (ch, axis, err, fit.phase_sigma)


def test_degenerate_state_x_trace_is_flat_within_noise():
    s = PureState.from_degrees(90, 0)
    pair = rpqst_trace_pair(MODEL, s, _plan(s, "x"), _plan(s, "y"),
                            ChannelNoise(Channel.PL, rng_seed=3), ChannelNoise(Channel.PC, rng_seed=3))
    for ch in Channel:
        x = pair[(ch, RotationAxis.X)]
        try:
            fit = fit_trace(x)
        except DegenerateFitError:
            continue
        assert not amplitude_significant(fit) or not fit.phase_reliable
        y = fit_trace(pair[(ch, RotationAxis.Y)])
        assert amplitude_significant(y) and y.phase_reliable


def test_csv_round_trip_is_exact():
    tr = synthesize_trace(MODEL, PureState.from_degrees(15.37, 235), "y", _plan(axis="y"),
                          ChannelNoise(Channel.PL, rng_seed=8))
    text = trace_to_csv(tr)
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    assert "\r" not in text and text.endswith("\n")
    back = parse_trace_csv(text)
    np.testing.assert_array_equal(back.tau_values, tr.tau_values)
    np.testing.assert_array_equal(back.signal, tr.signal)
    assert (back.channel, back.axis, back.seed) == (tr.channel, tr.axis, tr.seed)
    assert back.state.theta == pytest.approx(tr.state.theta, abs=1e-15)
    assert trace_to_csv(back) == text


def test_csv_diagnostics():
    good = trace_to_csv(synthesize_trace(MODEL, PureState(0.3, 0.2), "x", _plan(),
                                         ChannelNoise(Channel.PC, rng_seed=1)))
    lines = good.splitlines()
    with pytest.raises(TraceFormatError) as exc:
        parse_trace_csv("tau,signal\n" + "\n".join(lines[1:]))
    assert exc.value.line == 1
    bad = list(lines)
    cells = bad[4].split(",")
    cells[1] = "abc"
    bad[4] = ",".join(cells)
    with pytest.raises(TraceFormatError) as exc:
        parse_trace_csv("\n".join(bad))
    assert (exc.value.line, exc.value.column) == (5, 2)
    assert "line 5, column 2" in str(exc.value)
    bad = list(lines)
    bad[6] = bad[6].replace(",pc,", ",pl,")
    with pytest.raises(TraceFormatError):
        parse_trace_csv("\n".join(bad))
    with pytest.raises(TraceFormatError):
        parse_trace_csv(lines[0] + "\n")
