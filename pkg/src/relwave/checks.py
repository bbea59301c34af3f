"""Fast self-checks behind ``relwave verify``.

Each check is a small property test with a fixed seed; the full suites
live in the test tree. A check returns ``(ok, detail)``.
"""
from __future__ import annotations

import math
import time

import numpy as np
from scipy import stats

from .epr import chsh, frame_roles, optimal_chsh_settings
from .reduction import (
    DetectorArray,
    born_probabilities,
    reduction_in_boosted_frame,
    sample_outcomes,
)
from .seeding import stream_key, trial_seeds
from .spacetime import (
    BoostParameters,
    FourVector,
    boost,
    boost_events,
    intervals,
    ordering_delay,
)
from .twoparticle import DecayGeometry, run_90deg_scenario
from .wavepacket import (
    default_grid,
    gaussian_packet,
    momentum_to_position,
    position_to_momentum,
)

P_4SIGMA = 2 * stats.norm.sf(4.0)


def pooled_pvalue(counts, expected, min_expected: float = 5.0) -> float:
    """Chi-square p-value with sparse cells (expected < ``min_expected``) pooled."""
    counts, expected = np.asarray(counts, float), np.asarray(expected, float)
    small = expected < min_expected
    c, e = counts[~small], expected[~small]
    if small.any():
        if expected[small].sum() >= min_expected or c.size == 0:
            c, e = np.append(c, counts[small].sum()), np.append(e, expected[small].sum())
        else:
            j = int(np.argmin(e))
            c, e = c.copy(), e.copy()
            c[j] += counts[small].sum()
            e[j] += expected[small].sum()
    if c.size < 2:
        return 1.0
    return float(stats.chisquare(c, e * c.sum() / e.sum()).pvalue)


def check_interval(rng):
    n = 10_000
    a, c = rng.normal(size=(n, 4)) * 10, rng.normal(size=(n, 4)) * 10
    beta = rng.uniform(-0.99, 0.99)
    b = BoostParameters(beta, tuple(rng.normal(size=3)))
    s0 = intervals(a, c)
    s1 = intervals(boost_events(a, b), boost_events(c, b))
    scale = np.sum((a - c) ** 2, axis=1)
    err = float(np.max(np.abs(s1 - s0) / scale))
    return err < 1e-12, f"max scaled error {err:.2e}"


def check_boost_triple(rng):
    v = boost(FourVector(0.0, 1.0, 0.0, 0.0), BoostParameters(0.6))
    ok = abs(v.x - 1.25) < 1e-12 and abs(v.t + 0.75) < 1e-12
    return ok, f"x'={v.x!r} t'={v.t!r}"


def check_ordering_delay(rng):
    worst = 0.0
    for _ in range(200):
        dx, beta = rng.uniform(-10, 10), rng.uniform(-0.99, 0.99)
        b = BoostParameters(beta)
        ev = boost_events(np.array([[0.0, 0.0, 0, 0], [0.0, dx, 0, 0]]), b)
        worst = max(worst, abs((ev[0, 0] - ev[1, 0]) - ordering_delay(dx, b)))
    return worst < 1e-12, f"max deviation {worst:.2e}"


def check_round_trip(rng):
    grid = default_grid(1.0, 0.1, n=2048)
    amp = gaussian_packet(1.0, 0.1, 1.0, grid)
    back = position_to_momentum(momentum_to_position(amp), 1.0, grid=grid)
    err = float(np.linalg.norm(back.values - amp.values) / np.linalg.norm(amp.values))
    return err < 1e-8, f"relative L2 {err:.2e}"


def check_born(rng):
    grid = default_grid(0.5, 0.2, n=1024)
    field = momentum_to_position(gaussian_packet(0.5, 0.2, 1.0, grid))
    det = DetectorArray.uniform_1d(-20.0, 20.0, 6)
    p = born_probabilities(field, det)
    n = 100_000
    seeds = trial_seeds(stream_key(7, "verify_born"), n)
    counts = np.bincount(sample_outcomes(p, seeds), minlength=p.size)
    pv = pooled_pvalue(counts, n * p)
    return pv > P_4SIGMA, f"chi2 p-value {pv:.3g}"


def check_decay(rng):
    geom = DecayGeometry.right_angle()
    a = run_90deg_scenario(geom, BoostParameters(0.5), 11, 10_000)
    c = run_90deg_scenario(geom, BoostParameters(-0.5), 11, 10_000)
    one = bool(np.all(a.n_firing() == 1))
    flip = bool(np.all(a.trials["firing"] != c.trials["firing"]))
    return one and flip, f"one fires: {one}, winners flip: {flip}"


def check_chsh(rng):
    s = chsh(*optimal_chsh_settings(), 100_000, 3)
    z = abs(s.estimate - s.analytic) / s.stderr
    return abs(abs(s.analytic) - 2 * math.sqrt(2)) < 1e-12 and z < 4, f"S={s.estimate:.4f} ({z:.2f} sigma)"


def check_roles(rng):
    pos = [(-1.0, 0, 0), (1.0, 0, 0)]
    up, down = frame_roles(pos, BoostParameters(0.5)), frame_roles(pos, BoostParameters(-0.5))
    ok = up.first_detector == "D2" and down.first_detector == "D1" and frame_roles(pos, BoostParameters()).first_detector == "tie"
    return ok, f"+beta: {up.first_detector}, -beta: {down.first_detector}"


def check_mixed_width(rng):
    grid = default_grid(1.0, 0.2, n=1024)
    amp = gaussian_packet(1.0, 0.2, 1.0, grid)
    b = BoostParameters(0.6)
    lo, hi = -7.0, 5.0
    red = reduction_in_boosted_frame(amp, amp, FourVector(0.0, 0.0, 0.0, 0.0), b, [(0.0, 0.0, 0, 0)],
                                     support=(lo, hi))
    err = abs(red.width - b.gamma * b.beta * (hi - lo))
    return err < 1e-10, f"width error {err:.2e}"


CHECKS = {
    "interval invariance": check_interval,
    "boost arithmetic": check_boost_triple,
    "ordering delay": check_ordering_delay,
    "packet round trip": check_round_trip,
    "Born statistics": check_born,
    "decay one-fires and flip": check_decay,
    "singlet CHSH": check_chsh,
    "frame roles": check_roles,
    "boosted reduction width": check_mixed_width,
}


def run_checks(seed: int = 0, out=print) -> bool:
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        out(f"{'PASS' if ok else 'FAIL'}  {name:<26} {detail}  [{time.perf_counter() - t0:.2f}s]")
    return all_ok
