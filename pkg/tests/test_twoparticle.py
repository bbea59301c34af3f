import io
import math

import numpy as np
import pytest
from oracles import P_4SIGMA, binomial_ok, chi2_pvalue
from scipy import integrate

from relwave.reduction import ZeroIntensityError
from relwave.spacetime import BoostParameters
from relwave.twoparticle import (
    TIE,
    DecayGeometry,
    DegenerateGeometryError,
    SWaveState,
    conditional_state,
    cone_born_weights,
    gaussian_swave,
    hemisphere_bin_weights,
    pair_amplitude,
    run_90deg_scenario,
    run_einstein_screen,
    sample_kmag,
    swave_amplitude,
)


@pytest.fixture(scope="module")
def state():
    return gaussian_swave(1.0, 0.05, 1.0, n=801)


def test_swave_at_origin(state):
    w = np.zeros_like(state.k)
    d = np.diff(state.k)
    w[:-1] += d / 2
    w[1:] += d / 2
    assert swave_amplitude(state, 0.0) == pytest.approx(np.sum(w * state.k ** 2 * state.g), abs=1e-14)


def test_swave_loop_oracle(state):
    k, g = state.k, state.g
    w = [0.5 * (k[1] - k[0])] + [0.5 * (k[i + 1] - k[i - 1]) for i in range(1, len(k) - 1)] + [0.5 * (k[-1] - k[-2])]
    for r, t in [(0.0, 3.0), (0.7, 0.0), (12.0, 5.0), (40.0, 30.0)]:
        total = 0j
        for kj, gj, wj in zip(k, g, w):
            j0 = 1.0 if kj * r == 0 else math.sin(kj * r) / (kj * r)
            total += kj * kj * j0 * gj * wj * complex(math.cos(2 * math.sqrt(kj * kj + 1) * t),
                                                       math.sin(2 * math.sqrt(kj * kj + 1) * t))
        assert abs(swave_amplitude(state, r, t) - total) < 1e-12


def test_swave_rejects_negative_r(state):
    with pytest.raises(ValueError):
        swave_amplitude(state, -1.0)


def test_separation_grows_at_twice_group_velocity(state):
    ts = np.array([60.0, 100.0, 140.0, 180.0])
    r = np.linspace(0, 400, 8001)
    peaks = [r[np.argmax(np.abs(swave_amplitude(state, r, t)))] for t in ts]
    slope = np.polyfit(ts, peaks, 1)[0]
    vg = 1.0 / math.sqrt(2.0)  # dE/dk at k = 1, m = 1
    assert slope == pytest.approx(2 * vg, rel=0.02)


def test_pair_amplitude_isotropic(state):
    r1 = np.array([3.0, 0.0, 0.0])
    rots = [np.array([0.0, 3.0, 0.0]), np.array([0.0, 0.0, -3.0]), np.array([3, 0, 0]) @ np.eye(3)]
    vals = [pair_amplitude(state, r, np.zeros(3), 2.0) for r in [r1, *rots]]
    assert np.allclose(vals, vals[0], atol=1e-15)
    assert pair_amplitude(state, [1.0, 2.0, 2.0], [1.0, 2.0, -1.0], 0.5) == pytest.approx(
        swave_amplitude(state, 3.0, 0.5), abs=1e-15)


def test_conditional_state(state):
    pw = conditional_state((1.0, 0.0, 0.0), state)
    assert pw.momentum == (-1.0, -0.0, -0.0)
    assert np.all(np.array(pw.momentum) + np.array([1.0, 0, 0]) == 0)
    assert pw.amplitude == pytest.approx(1.0, abs=1e-12)
    node = state.k[517]
    pw = conditional_state((0.0, node, 0.0), state)
    assert pw.amplitude == state.g[517]
    k = np.array([0.6, 0.5, 0.3])
    kmag = np.linalg.norm(k)
    pw = conditional_state(k, state, t=2.0)
    # linear interpolation between grid nodes
    assert pw.amplitude == pytest.approx(math.exp(-(kmag - 1) ** 2 / (4 * 0.05 ** 2)), rel=1e-3)
    assert pw.energy == pytest.approx(math.sqrt(kmag ** 2 + 1))
    assert pw.value(np.zeros(3)) == pytest.approx(pw.amplitude * np.exp(1j * pw.energy * 2.0))
    with pytest.raises(ValueError):
        conditional_state((5.0, 0, 0), state)


def test_conditional_state_rejects_zero_amplitude():
    k = np.linspace(0.5, 1.5, 11)
    g = np.where(np.abs(k - 1) < 0.3, 1.0, 0.0)
    with pytest.raises(ValueError):
        conditional_state((0.5, 0, 0), SWaveState(k, g, 1.0))


def test_sample_kmag_follows_radial_density(state):
    u = (np.arange(200_000) + 0.5) / 200_000
    ks = sample_kmag(state, u)
    rho = state.k ** 2 * np.abs(state.g) ** 2
    mean = np.trapezoid(rho * state.k, state.k) / np.trapezoid(rho, state.k)
    assert ks.mean() == pytest.approx(mean, rel=1e-5)


def test_geometry_validation():
    with pytest.raises(ValueError):
        DecayGeometry(((1, 0, 0), (0, 1, 0)), (1.0, -1.0), (0.1, 0.1))
    with pytest.raises(ValueError):
        DecayGeometry(((1, 0, 0), (0, 0, 0)), (1.0, 1.0), (0.1, 0.1))
    with pytest.raises(ValueError):
        DecayGeometry(((1, 0, 0), (0, 1, 0)), (1.0, 1.0), (0.1, 2.0))
    g = DecayGeometry(((2, 0, 0), (0, 3, 4)), (1.0, 1.0), (0.1, 0.1))
    assert np.allclose(np.linalg.norm(g.directions, axis=1), 1.0)


def test_degenerate_geometries():
    g = DecayGeometry(((1, 0, 0), (1, 0.05, 0)), (1.0, 1.0), (0.1, 0.1))
    with pytest.raises(DegenerateGeometryError):
        run_90deg_scenario(g, BoostParameters(0.3), 0, 10)
    g3 = DecayGeometry(((1, 0, 0), (0, 1, 0), (0, 0, 1)), (1, 1, 1), (0.1, 0.1, 0.1))
    with pytest.raises(DegenerateGeometryError):
        run_90deg_scenario(g3, BoostParameters(0.3), 0, 10)


def test_cone_weights_quadrature_oracle():
    g = DecayGeometry.right_angle(half_angle=0.1, half_angle_2=0.25)
    om = [integrate.quad(lambda th: 2 * math.pi * math.sin(th), 0, a)[0] for a in (0.1, 0.25)]
    assert np.allclose(cone_born_weights(g), np.array(om) / sum(om), atol=1e-12)


def test_back_to_back_simultaneous():
    g = DecayGeometry(((1, 0, 0), (-1, 0, 0)), (5.0, 5.0), (0.1, 0.1))
    rep = run_90deg_scenario(g, BoostParameters(0.0), 1, 200)
    assert rep.ordering_delay == 0.0
    assert np.all(rep.trials["first"] == TIE)
    assert np.all(rep.trials["t_rest"][:, 0] == rep.trials["t_rest"][:, 1])


def test_downstream_advantage():
    s = 1 / math.sqrt(2)
    g = DecayGeometry(((s, s, 0), (-s, s, 0)), (math.sqrt(2), math.sqrt(2)), (0.1, 0.1))
    rep = run_90deg_scenario(g, BoostParameters(0.5), 2, 500)
    adv = rep.trials["t_boost"][:, 1] - rep.trials["t_boost"][:, 0]
    assert np.allclose(adv, 1.1547005383792517, atol=1e-12)
    assert np.all(rep.trials["firing"] == 0)
    flip = run_90deg_scenario(g, BoostParameters(-0.5), 2, 500)
    assert np.all(flip.trials["firing"] == 1)


def test_one_fires_momentum_cancels_and_direction_in_cone():
    g = DecayGeometry.right_angle(distance=10.0, distance_2=12.0, half_angle=0.2)
    for beta in (-0.8, 0.0, 0.4):
        rep = run_90deg_scenario(g, BoostParameters(beta), 5, 5000)
        tr = rep.trials
        assert np.all(rep.n_firing() == 1)
        assert np.all(tr["p1"] + tr["p2"] == 0)
        dirs = np.asarray(g.directions)[tr["firing"]]
        cosang = np.einsum("ij,ij->i", tr["p1"], dirs) / np.linalg.norm(tr["p1"], axis=1)
        assert np.all(cosang >= math.cos(0.2) - 1e-12)
    # nearer detector wins in the rest frame
    rest = run_90deg_scenario(g, BoostParameters(0.0), 5, 1000)
    assert np.all(rest.trials["first"] == 0)


def test_tie_frequencies_match_cone_weights():
    g = DecayGeometry.right_angle(half_angle=0.1, half_angle_2=0.2)
    n = 10_000
    rep = run_90deg_scenario(g, BoostParameters(0.0), 9, n)
    assert np.all(rep.trials["first"] == TIE)
    p = cone_born_weights(g)
    assert binomial_ok(np.sum(rep.trials["firing"] == 0), n, p[0])


def test_workers_do_not_change_trials():
    g = DecayGeometry.right_angle()
    a = run_90deg_scenario(g, BoostParameters(0.0), 3, 20_000, workers=1)
    b = run_90deg_scenario(g, BoostParameters(0.0), 3, 20_000, workers=2)
    for k in a.trials:
        assert np.array_equal(a.trials[k], b.trials[k])


def test_report_summary_json_ready():
    import json
    rep = run_90deg_scenario(DecayGeometry.right_angle(), BoostParameters(0.3), 1, 50)
    s = json.loads(json.dumps(rep.summary()))
    assert s["n_firing_counts"] == {"1": 50}
    assert s["first_counts"]["D1"] == 50
    assert len(rep.trial_records()) == 50
    assert rep.trial_records()[0]["silent"] == "D2"


def test_screen_isotropic_uniform():
    n = 100_000
    hits = run_einstein_screen(n, seed=4)
    nb = hits.n_theta * hits.n_phi
    assert chi2_pvalue(hits.counts(), np.full(nb, n / nb)) > P_4SIGMA
    assert np.all(hits.registered_per_trial() == 1)
    assert hits.theta.min() >= 0 and hits.theta.max() <= math.pi / 2


def test_screen_hits_lie_in_their_bins():
    hits = run_einstein_screen(2000, seed=1, n_theta=4, n_phi=6)
    i, j = np.divmod(hits.bin, 6)
    mu = np.cos(hits.theta)
    assert np.all((mu <= 1 - i / 4 + 1e-12) & (mu >= 1 - (i + 1) / 4 - 1e-12))
    assert np.all((hits.phi >= 2 * math.pi * j / 6) & (hits.phi <= 2 * math.pi * (j + 1) / 6))


def test_screen_concentrated_profile():
    def spot(theta, phi):
        return np.where((np.cos(theta) > 0.75) & (phi < math.pi / 2), 1.0, 0.0)
    hits = run_einstein_screen(3000, profile=spot, seed=2, n_theta=4, n_phi=4)
    assert np.all(hits.bin == 0)


def test_bin_weights_analytic():
    w = hemisphere_bin_weights(lambda th, ph: np.cos(th), 4, 3, quad=6)
    edges = np.linspace(1, 0, 5)
    want = np.repeat([(2 * math.pi / 3) * (a ** 3 - b ** 3) / 3 for a, b in zip(edges[:-1], edges[1:])], 3)
    assert np.allclose(w, want, rtol=1e-12)
    assert hemisphere_bin_weights(None, 2, 2).sum() == pytest.approx(2 * math.pi)


def test_screen_zero_profile():
    with pytest.raises(ZeroIntensityError):
        run_einstein_screen(10, profile=lambda th, ph: 0 * th)


def test_screen_csv():
    hits = run_einstein_screen(7, seed=0)
    buf = io.StringIO()
    hits.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "theta,phi,trial" and len(lines) == 8
    assert run_einstein_screen(0).n_trials == 0
