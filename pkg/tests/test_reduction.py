import io
import math

import numpy as np
import pytest
from oracles import P_4SIGMA, binomial_ok, chi2_pvalue

from relwave.reduction import (
    Cell,
    DetectorArray,
    FrameMismatchError,
    GradualMartingale,
    InstantaneousBorn,
    MeasurementRecord,
    ZeroIntensityError,
    born_probabilities,
    crossing_time,
    get_policy,
    measure,
    read_records_jsonl,
    reduce_position,
    reduction_in_boosted_frame,
    sample_outcome,
    sample_outcomes,
    write_records_jsonl,
)
from relwave.seeding import stream_key, trial_seeds
from relwave.spacetime import BoostParameters, FourVector
from relwave.wavepacket import (
    PositionField,
    default_grid,
    gaussian_packet,
    momentum_to_position,
)


def _field(values, x=None, time=0.0, frame=None):
    x = np.arange(len(values), dtype=float) if x is None else x
    return PositionField((x,), values, time, frame)


def test_uniform_field_two_cells():
    f = _field(np.ones(200), np.linspace(0, 1, 200, endpoint=False) + 0.0025)
    det = DetectorArray.from_edges([0.0, 0.5, 1.0])
    assert np.allclose(born_probabilities(f, det), [0.5, 0.5], atol=1e-12)


def test_support_inside_one_cell():
    v = np.zeros(100)
    v[40:50] = 1.0
    det = DetectorArray.from_edges([0, 30, 60, 100])
    assert np.array_equal(born_probabilities(_field(v), det), [0.0, 1.0, 0.0])


def test_gaussian_eight_cells_loop_oracle():
    f = momentum_to_position(gaussian_packet(0.4, 0.1, 1.0, default_grid(0.4, 0.1, n=512)), 5.0)
    edges = np.linspace(-40, 40, 9)
    det = DetectorArray.from_edges(edges)
    x = f.axes[0]
    dx = x[1] - x[0]
    sums = [0.0] * 8
    for i, xi in enumerate(x):
        vol = dx / 2 if i in (0, len(x) - 1) else dx
        for c in range(8):
            if edges[c] <= xi < edges[c + 1]:
                sums[c] += abs(f.values[i]) ** 2 * vol
    want = np.array(sums) / sum(sums)
    assert np.allclose(born_probabilities(f, det), want, atol=1e-12)


def test_zero_intensity_and_frame_errors():
    det = DetectorArray.from_edges([0, 5, 10])
    with pytest.raises(ZeroIntensityError):
        born_probabilities(_field(np.zeros(10)), det)
    moving = _field(np.ones(10), frame=BoostParameters(0.3))
    with pytest.raises(FrameMismatchError):
        born_probabilities(moving, det)
    det_moving = DetectorArray(det.cells, BoostParameters(0.3))
    assert np.allclose(born_probabilities(moving, det_moving), [0.5, 0.5])
    with pytest.raises(FrameMismatchError):
        born_probabilities(_field(np.ones(10)), det_moving)


def test_momentum_mode_detector():
    amp = gaussian_packet(0.0, 0.2, 1.0, default_grid(0.0, 0.2, n=256))
    det = DetectorArray.from_edges([-10, 0, 10], mode="momentum")
    assert np.allclose(born_probabilities(amp, det), [0.5, 0.5], atol=1e-12)


def test_overlapping_cells_rejected():
    with pytest.raises(ValueError):
        DetectorArray((Cell("a", 0, 2), Cell("b", 1, 3)))


def test_assign_outside_is_minus_one():
    det = DetectorArray.from_edges([0, 1, 2])
    pts = np.array([[-1, 0, 0], [0.5, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
    assert det.assign(pts).tolist() == [-1, 0, 1, -1]


def test_sample_outcome_examples():
    seeds = trial_seeds(stream_key(0, "t"), 1000)
    assert np.all(sample_outcomes([1.0, 0.0], seeds) == 0)
    assert np.all(sample_outcomes([0.0, 1.0, 0.0], seeds) == 1)
    a = [sample_outcome([0.2, 0.3, 0.5], 12345) for _ in range(5)]
    assert len(set(a)) == 1
    with pytest.raises(ValueError):
        sample_outcome([0.5, 0.6], 1)
    with pytest.raises(ValueError):
        sample_outcome([-0.1, 1.1], 1)


@pytest.mark.parametrize("policy", ["instantaneous-born", "gradual-martingale"])
def test_fair_coin_within_4_sigma(policy):
    n = 100_000
    out = sample_outcomes([0.5, 0.5], trial_seeds(stream_key(1, "coin"), n), policy)
    assert abs(out.mean() - 0.5) <= 0.0063


def test_martingale_never_picks_zero_cell():
    seeds = trial_seeds(stream_key(2, "z"), 20_000)
    out = GradualMartingale().select([0.3, 0.0, 0.7], seeds)
    assert not np.any(out == 1)


def test_policy_registry():
    assert isinstance(get_policy(None), InstantaneousBorn)
    assert isinstance(get_policy("gradual-martingale"), GradualMartingale)
    with pytest.raises(ValueError):
        get_policy("nope")


def test_reduce_position_examples():
    v = np.zeros(50, complex)
    v[10:20] = 3.0 * np.exp(1j * np.arange(10))
    f = _field(v)
    cell = Cell("c", 5.0, 25.0)
    r = reduce_position(f, cell)
    assert r.l2_norm() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(r.values, v / f.l2_norm())
    assert r.time == f.time
    rr = reduce_position(r, cell)
    assert np.allclose(rr.values, r.values, atol=1e-15)
    with pytest.raises(ZeroIntensityError):
        reduce_position(f, Cell("empty", 30.0, 40.0))


def test_reduce_cuts_outside():
    f = _field(np.ones(10))
    r = reduce_position(f, Cell("left", -1.0, 4.5))
    assert np.all(r.values[5:] == 0) and np.all(r.values[:5] != 0)


def test_measure_records_and_jsonl():
    f = momentum_to_position(gaussian_packet(0.0, 0.2, 1.0, default_grid(0.0, 0.2, n=256)), 0.0)
    det = DetectorArray.uniform_1d(-10, 10, 4)
    seeds = trial_seeds(stream_key(4, "m"), 20)
    recs = [measure(f, det, int(s))[0] for s in seeds]
    for r in recs:
        assert abs(math.fsum(r.probabilities) - 1.0) <= 1e-12
        assert r.outcome_label == det.cells[r.outcome_index].label
        assert r.event.t == 0.0 and r.policy == "instantaneous-born"
    buf = io.StringIO()
    write_records_jsonl(recs, buf)
    buf.seek(0)
    assert read_records_jsonl(buf) == recs
    rec, reduced = measure(f, det, int(seeds[0]))
    assert reduced.l2_norm() == pytest.approx(1.0, abs=1e-12)
    assert measure(f, det, int(seeds[0]))[0] == rec


def test_record_rejects_bad_probabilities():
    with pytest.raises(ValueError):
        MeasurementRecord("a", 0, FourVector(0.0), 1.0, 1, (0.5, 0.4))
    with pytest.raises(ValueError):
        MeasurementRecord("a", 2, FourVector(0.0), 1.0, 1, (0.5, 0.5))


def test_crossing_time():
    amp = gaussian_packet(1.0, 0.05, 1.0, default_grid(1.0, 0.05))
    k = amp.grid.axes[0]
    k0 = np.sqrt(k ** 2 + 1.0)
    dens = np.abs(amp.values) ** 2 / k0
    v = np.sum(dens * k / k0) / np.sum(dens)
    assert crossing_time(amp, 10.0) == pytest.approx(10.0 / v, rel=1e-12)
    assert crossing_time(amp, 10.0, t0=2.0, start=4.0) == pytest.approx(2.0 + 6.0 / v, rel=1e-12)
    # a narrow momentum spread moves at close to the group velocity of the centre
    assert 10.0 / v == pytest.approx(10.0 * math.sqrt(2.0), rel=2e-3)


def _pre_post():
    g = default_grid(1.0, 0.2, n=512)
    pre = gaussian_packet(1.0, 0.2, 1.0, g)
    post = pre.with_values(pre.values * 0.5j)
    return pre, post


def test_boosted_reduction_width():
    pre, post = _pre_post()
    ev = FourVector(0.0, 0.0)
    r = reduction_in_boosted_frame(pre, post, ev, BoostParameters(0.5), [[0.0, 0.0, 0, 0]], support=(-1.0, 1.0))
    assert r.width == pytest.approx(1.1547005383792515, abs=1e-12)
    r0 = reduction_in_boosted_frame(pre, post, ev, BoostParameters(0.0), [[0.0, 0.0, 0, 0]], support=(-1.0, 1.0))
    assert r0.width == 0.0
    rp = reduction_in_boosted_frame(pre, post, ev, BoostParameters(0.7), [[0.0, 0.0, 0, 0]], support=(0.3, 0.3))
    assert rp.width == 0.0


def test_boosted_reduction_picks_history_by_rest_time():
    pre, post = _pre_post()
    b = BoostParameters(0.6)
    # at fixed new-frame time t' = 0 the rest-frame time is beta * gamma * x', so
    # points with x' < 0 sit before the reduction and points with x' > 0 after
    xs = np.linspace(-5, 5, 11)
    tg = np.column_stack([np.zeros(11), xs, np.zeros(11), np.zeros(11)])
    r = reduction_in_boosted_frame(pre, post, FourVector(0.0), b, tg)
    assert r.post.tolist() == (xs >= 0).tolist()
    from relwave.lorentz_action import pullback_transform
    assert np.allclose(r.samples.values[xs < 0], pullback_transform(pre, b, tg[xs < 0]).values)
    assert np.allclose(r.samples.values[xs >= 0], pullback_transform(post, b, tg[xs >= 0]).values)


def test_boosted_reduction_default_support():
    pre, post = _pre_post()
    b = BoostParameters(0.5)
    r = reduction_in_boosted_frame(pre, post, FourVector(0.0), b, [[0.0, 0.0, 0, 0]])
    lo, hi = __import__("relwave.wavepacket", fromlist=["x"]).packet_extent(
        momentum_to_position(pre, 0.0), threshold=1e-6)
    assert r.width == pytest.approx(b.gamma * b.beta * (hi - lo), rel=1e-12)


def test_rest_frame_statistics_unaffected_by_observer():
    # the boosted description never feeds into outcome probabilities
    f = momentum_to_position(gaussian_packet(0.0, 0.2, 1.0, default_grid(0.0, 0.2, n=256)), 0.0)
    det = DetectorArray.uniform_1d(-10, 10, 4)
    p = born_probabilities(f, det)
    pre, post = _pre_post()
    reduction_in_boosted_frame(pre, post, FourVector(0.0), BoostParameters(0.9), [[0.0, 0.0, 0, 0]])
    assert np.array_equal(born_probabilities(f, det), p)


def test_martingale_chi_square_small():
    p = np.array([0.1, 0.2, 0.3, 0.4])
    n = 50_000
    out = GradualMartingale().select(p, trial_seeds(stream_key(8, "g"), n))
    assert chi2_pvalue(np.bincount(out, minlength=4), n * p) > P_4SIGMA
    assert binomial_ok(np.sum(out == 3), n, 0.4)
