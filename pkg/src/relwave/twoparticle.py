"""Two-body decay at rest: s-wave relative packet and detector scenarios.

The pair wave function factorises into centre-of-mass and relative parts;
the centre-of-mass part is taken constant (no momentum spread), so only
the relative s-wave ``phi(r, t) = int k^2 dk j0(k r) g(k) exp(2 i E_k t)``
carries structure.

Detector scenarios are Monte Carlo over independent trials. Each trial's
draws come from ``seeding`` streams keyed on ``(seed, trial)``, so results
do not depend on how trials are chunked or parallelised.
"""
from __future__ import annotations

import csv
import math
from collections.abc import Callable
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import seeding
from .reduction import ZeroIntensityError, _inverse_cdf, get_policy
from .spacetime import BoostParameters, boost_events, ordering_delay


@dataclass(frozen=True, eq=False)
class SWaveState:
    """Radial momentum profile ``g(k)`` on a trapezoidal grid ``k >= 0``."""

    k: np.ndarray
    g: np.ndarray
    mass: float

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float).reshape(-1)
        g = np.asarray(self.g, dtype=complex).reshape(-1)
        if k.size != g.size or k.size < 2:
            raise ValueError("k and g must have equal length >= 2")
        if k[0] < 0 or np.any(np.diff(k) <= 0):
            raise ValueError("radial grid must be increasing and non-negative")
        if self.mass < 0:
            raise ValueError("mass must be non-negative")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "g", g)

    @property
    def weights(self) -> np.ndarray:
        d = np.diff(self.k)
        w = np.zeros_like(self.k)
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
        return w

    @property
    def energy(self) -> np.ndarray:
        return np.sqrt(self.k ** 2 + self.mass ** 2)

    def radial_density(self) -> np.ndarray:
        """Born density of ``|k|``: ``k^2 |g(k)|^2``."""
        return self.k ** 2 * np.abs(self.g) ** 2

    def g_at(self, kmag: float) -> complex:
        """``g`` at ``|k|``, linear between grid nodes."""
        re = np.interp(kmag, self.k, self.g.real)
        im = np.interp(kmag, self.k, self.g.imag)
        return complex(re, im)


def gaussian_swave(k_center: float, k_width: float, m: float, n: int = 2001,
                   span: float = 8.0) -> SWaveState:
    """``g(k) = exp(-(k - k_center)^2 / (4 k_width^2))`` on ``k_center +/- span k_width``."""
    if k_width <= 0:
        raise ValueError("k_width must be positive")
    k = np.linspace(max(0.0, k_center - span * k_width), k_center + span * k_width, n)
    return SWaveState(k, np.exp(-((k - k_center) ** 2) / (4.0 * k_width ** 2)), m)


def swave_amplitude(state: SWaveState, r, t: float = 0.0):
    """Relative wave function at separation ``r >= 0`` (scalar or array)."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ValueError("r must be non-negative")
    coeff = state.weights * state.k ** 2 * state.g * np.exp(2j * state.energy * t)
    # np.sinc(x) = sin(pi x) / (pi x), so j0(kr) = sinc(kr / pi)
    j0 = np.sinc(np.multiply.outer(r_arr, state.k) / math.pi)
    out = j0 @ coeff
    return complex(out) if r_arr.ndim == 0 else out


def pair_amplitude(state: SWaveState, r1, r2, t: float = 0.0):
    """``Phi(R) phi(r)`` with ``Phi`` constant, ``r = r1 - r2``."""
    sep = np.linalg.norm(np.asarray(r1, dtype=float) - np.asarray(r2, dtype=float), axis=-1)
    return swave_amplitude(state, sep, t)


@dataclass(frozen=True)
class PlaneWave:
    """Particle 2 after particle 1 was found with momentum ``k``."""

    momentum: tuple
    amplitude: complex
    energy: float
    time: float

    def value(self, r2) -> complex:
        p = np.asarray(self.momentum)
        return self.amplitude * np.exp(1j * (np.asarray(r2, dtype=float) @ p)) * np.exp(1j * self.energy * self.time)


def conditional_state(selected_k, state: SWaveState, t: float = 0.0) -> PlaneWave:
    k = np.asarray(selected_k, dtype=float).reshape(3)
    kmag = float(np.linalg.norm(k))
    if kmag < state.k[0] or kmag > state.k[-1]:
        raise ValueError(f"|k| = {kmag} lies outside the support of g")
    amp = state.g_at(kmag)
    if amp == 0:
        raise ValueError(f"g vanishes at |k| = {kmag}; detection has probability zero")
    return PlaneWave(tuple(-k), amp, math.sqrt(kmag ** 2 + state.mass ** 2), t)


def sample_kmag(state: SWaveState, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of ``|k|`` from the radial Born density."""
    rho = state.radial_density()
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]) * np.diff(state.k))])
    if cdf[-1] <= 0:
        raise ZeroIntensityError("radial density vanishes")
    return np.interp(u, cdf / cdf[-1], state.k)


class DegenerateGeometryError(ValueError):
    pass


@dataclass(frozen=True)
class DecayGeometry:
    directions: tuple
    distances: tuple
    half_angles: tuple
    source: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=float).reshape(-1, 3)
        norms = np.linalg.norm(d, axis=1)
        if np.any(norms == 0):
            raise ValueError("detector directions must be nonzero")
        d = d / norms[:, None]
        dist = np.asarray(self.distances, dtype=float).reshape(-1)
        ang = np.asarray(self.half_angles, dtype=float).reshape(-1)
        if not (d.shape[0] == dist.size == ang.size):
            raise ValueError("one direction, distance and half-angle per detector")
        if np.any(dist <= 0):
            raise ValueError("detector distances must be positive")
        if np.any((ang <= 0) | (ang >= math.pi / 2)):
            raise ValueError("half-angles must lie in (0, pi/2)")
        object.__setattr__(self, "directions", tuple(map(tuple, d)))
        object.__setattr__(self, "distances", tuple(dist))
        object.__setattr__(self, "half_angles", tuple(ang))
        object.__setattr__(self, "source", tuple(float(s) for s in self.source))

    @classmethod
    def right_angle(cls, distance: float = 10.0, distance_2: float | None = None,
                    half_angle: float = 0.1, half_angle_2: float | None = None,
                    angle: float = math.pi / 2) -> DecayGeometry:
        """Detector 1 on +x, detector 2 rotated by ``angle`` in the xy-plane."""
        d2 = (math.cos(angle), math.sin(angle), 0.0)
        return cls(((1.0, 0.0, 0.0), d2),
                   (distance, distance if distance_2 is None else distance_2),
                   (half_angle, half_angle if half_angle_2 is None else half_angle_2))

    @property
    def positions(self) -> np.ndarray:
        return np.asarray(self.source) + np.asarray(self.directions) * np.asarray(self.distances)[:, None]

    def solid_angles(self) -> np.ndarray:
        return 2.0 * math.pi * (1.0 - np.cos(self.half_angles))

    def as_dict(self) -> dict:
        return {"source": [float(v) for v in self.source],
                "directions": [[float(v) for v in d] for d in self.directions],
                "distances": [float(v) for v in self.distances],
                "half_angles": [float(v) for v in self.half_angles]}


def cone_born_weights(geom: DecayGeometry) -> np.ndarray:
    """Born probability of each acceptance cone for the isotropic s-wave.

    Either particle can enter a cone, and the pair is back to back, so the
    weight is the cone's solid angle (normalised over the cones).
    """
    om = geom.solid_angles()
    return om / om.sum()


def _cone_directions(axis: np.ndarray, half_angle: float, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Uniform (isotropic) directions inside a cone about ``axis``."""
    a = axis / np.linalg.norm(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(a, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    cos_t = 1.0 - u1 * (1.0 - math.cos(half_angle))
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t ** 2))
    ph = 2.0 * math.pi * u2
    return (np.multiply.outer(cos_t, a) + np.multiply.outer(sin_t * np.cos(ph), e1)
            + np.multiply.outer(sin_t * np.sin(ph), e2))


TIE = -1


def _decay_chunk(state: SWaveState, geom: DecayGeometry, b: BoostParameters, key: int,
                 tie_tol: float, start: int, stop: int) -> dict:
    n = stop - start
    seeds = seeding.trial_seeds(key, n, start)
    u = seeding.uniforms(seeds, 4)
    kmag = sample_kmag(state, u[:, 0])
    speed = kmag / np.sqrt(kmag ** 2 + state.mass ** 2)
    pos = geom.positions
    dist = np.asarray(geom.distances)
    t_rest = dist[None, :] / speed[:, None]
    ev = np.zeros((n, 2, 4))
    ev[..., 0] = t_rest
    ev[..., 1:] = pos[None, :, :]
    t_boost = boost_events(ev, b)[..., 0]
    delta = t_boost[:, 1] - t_boost[:, 0]
    scale = np.maximum(np.abs(t_boost).max(axis=1), 1.0)
    tie = np.abs(delta) <= tie_tol * scale
    first = np.where(tie, TIE, np.where(delta > 0, 0, 1))

    # simultaneous in the operative frame: one joint measurement over both cones
    p = cone_born_weights(geom)
    born_pick = _inverse_cdf(p, u[:, 1])
    firing = np.where(tie, born_pick, first)

    dirs = np.asarray(geom.directions)
    half = np.asarray(geom.half_angles)
    n1 = np.empty((n, 3))
    for i in range(2):
        sel = firing == i
        if sel.any():
            n1[sel] = _cone_directions(dirs[i], half[i], u[sel, 2], u[sel, 3])
    p1 = kmag[:, None] * n1
    p2 = -p1
    other = 1 - firing
    cos_other = np.einsum("ij,ij->i", -n1, dirs[other])
    partner_hit = cos_other >= np.cos(half[other])
    return {
        "trial": np.arange(start, stop),
        "kmag": kmag,
        "t_rest": t_rest,
        "t_boost": t_boost,
        "first": first,
        "firing": firing,
        "partner_hit": partner_hit,
        "p1": p1,
        "p2": p2,
    }


@dataclass(frozen=True, eq=False)
class DecayReport:
    geometry: DecayGeometry
    boost: BoostParameters
    seed: int
    trials: dict
    born_weights: np.ndarray
    ordering_delay: float | None

    @property
    def n_trials(self) -> int:
        return int(self.trials["trial"].size)

    def n_firing(self) -> np.ndarray:
        return 1 + self.trials["partner_hit"].astype(int)

    def firing_frequencies(self) -> np.ndarray:
        return np.bincount(self.trials["firing"], minlength=2) / max(self.n_trials, 1)

    def summary(self) -> dict:
        tr = self.trials
        first = tr["first"]
        return {
            "geometry": self.geometry.as_dict(),
            "beta": float(self.boost.beta),
            "boost_axis": [float(v) for v in self.boost.axis],
            "seed": self.seed,
            "n_trials": self.n_trials,
            "born_weights": self.born_weights.tolist(),
            "ordering_delay": self.ordering_delay,
            "firing_frequencies": self.firing_frequencies().tolist(),
            "first_counts": {"D1": int(np.sum(first == 0)), "D2": int(np.sum(first == 1)),
                             "tie": int(np.sum(first == TIE))},
            "n_firing_counts": {str(k): int(v) for k, v in
                                zip(*np.unique(self.n_firing(), return_counts=True))},
            "max_momentum_sum": float(np.abs(tr["p1"] + tr["p2"]).max()) if self.n_trials else 0.0,
        }

    def trial_records(self) -> list[dict]:
        tr = self.trials
        label = {0: "D1", 1: "D2", TIE: "tie"}
        out = []
        for i in range(self.n_trials):
            f = int(tr["firing"][i])
            out.append({
                "trial": int(tr["trial"][i]),
                "kmag": float(tr["kmag"][i]),
                "t_rest": tr["t_rest"][i].tolist(),
                "t_boost": tr["t_boost"][i].tolist(),
                "first": label[int(tr["first"][i])],
                "firing": label[f],
                "silent": None if tr["partner_hit"][i] else label[1 - f],
                "p1": tr["p1"][i].tolist(),
                "p2": tr["p2"][i].tolist(),
            })
        return out


def run_90deg_scenario(geom: DecayGeometry, b: BoostParameters, seed: int, n_trials: int = 10_000,
                       state: SWaveState | None = None, workers: int = 1,
                       tie_tol: float = 1e-12) -> DecayReport:
    """Decay at rest seen by two momentum detectors, ordered in the frame ``b``.

    Per trial: draw ``|k|`` from the radial Born density, propagate both
    potential arrivals as rays at the group velocity, and order them in the
    boosted frame. The first detector fires and selects particle 1's
    momentum inside its cone; particle 2 takes exactly ``-k`` and the other
    detector stays silent unless that direction falls in its cone. When the
    two arrivals coincide in the boosted frame the ordering is reported as
    a tie and the single joint measurement is Born sampled over the cones.
    """
    if len(geom.directions) != 2:
        raise DegenerateGeometryError("the scenario needs exactly two detectors")
    d = np.asarray(geom.directions)
    sep = math.acos(float(np.clip(d[0] @ d[1], -1.0, 1.0)))
    if sep < sum(geom.half_angles):
        raise DegenerateGeometryError("acceptance cones overlap (detectors nearly collinear)")
    state = gaussian_swave(1.0, 0.05, 1.0) if state is None else state
    key = seeding.stream_key(seed, "decay_90")
    fn = partial(_decay_chunk, state, geom, b, key, tie_tol)
    trials = seeding.map_trials(fn, n_trials, workers)
    delay = None
    if abs(geom.distances[0] - geom.distances[1]) == 0.0:
        dx = float((geom.positions[1] - geom.positions[0]) @ b.axis_array())
        # positive: D2 (at +dx from D1) is reached first in the boosted frame
        delay = ordering_delay(dx, b)
    return DecayReport(geom, b, seed, trials, cone_born_weights(geom), delay)


@dataclass(frozen=True, eq=False)
class ScreenHits:
    theta: np.ndarray
    phi: np.ndarray
    bin: np.ndarray
    probabilities: np.ndarray
    n_theta: int
    n_phi: int
    seed: int

    @property
    def n_trials(self) -> int:
        return int(self.bin.size)

    def counts(self) -> np.ndarray:
        return np.bincount(self.bin, minlength=self.n_theta * self.n_phi)

    def registered_per_trial(self) -> np.ndarray:
        """Bins lit per trial: a one-hot row per trial, summed."""
        onehot = np.zeros((self.n_trials, self.n_theta * self.n_phi), dtype=np.int8)
        onehot[np.arange(self.n_trials), self.bin] = 1
        return onehot.sum(axis=1)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "phi", "trial"])
        for i, (th, ph) in enumerate(zip(self.theta, self.phi)):
            w.writerow([repr(float(th)), repr(float(ph)), i])


def hemisphere_bin_weights(profile: Callable | None, n_theta: int, n_phi: int,
                           quad: int = 8) -> np.ndarray:
    """``int |A|^2 dOmega`` per equal-solid-angle bin (rings in cos theta)."""
    nodes, wts = np.polynomial.legendre.leggauss(quad)
    mu_edges = np.linspace(1.0, 0.0, n_theta + 1)
    ph_edges = np.linspace(0.0, 2.0 * math.pi, n_phi + 1)
    out = np.empty((n_theta, n_phi))
    for i in range(n_theta):
        a, b = mu_edges[i + 1], mu_edges[i]
        mu = 0.5 * (b - a) * nodes + 0.5 * (b + a)
        for j in range(n_phi):
            c, d = ph_edges[j], ph_edges[j + 1]
            ph = 0.5 * (d - c) * nodes + 0.5 * (d + c)
            if profile is None:
                dens = np.ones((quad, quad))
            else:
                mm, pp = np.meshgrid(mu, ph, indexing="ij")
                dens = np.abs(np.asarray(profile(np.arccos(mm), pp), dtype=complex)) ** 2
            out[i, j] = 0.25 * (b - a) * (d - c) * (wts @ dens @ wts)
    return out.ravel()


def _screen_chunk(p: np.ndarray, n_theta: int, n_phi: int, key: int, policy, start: int, stop: int) -> dict:
    seeds = seeding.trial_seeds(key, stop - start, start)
    pol = get_policy(policy)
    bins = pol.select(p, seeds)
    u = seeding.uniforms(seeds, 3)
    i, j = np.divmod(bins, n_phi)
    mu = 1.0 - (i + u[:, 1]) / n_theta
    ph = 2.0 * math.pi * (j + u[:, 2]) / n_phi
    return {"bin": bins, "theta": np.arccos(np.clip(mu, 0.0, 1.0)), "phi": ph}


def run_einstein_screen(n_trials: int, profile: Callable | None = None, seed: int = 0,
                        n_theta: int = 8, n_phi: int = 16, quad: int = 8, workers: int = 1,
                        policy=None) -> ScreenHits:
    """Single-electron hits on a hemispherical screen behind a pinhole.

    ``profile(theta, phi)`` is the outgoing angular amplitude (default
    isotropic). Each trial Born-samples one equal-solid-angle bin, which
    removes every other bin for that trial, then places the hit uniformly
    in ``(cos theta, phi)`` inside the bin.
    """
    w = hemisphere_bin_weights(profile, n_theta, n_phi, quad)
    if not w.sum() > 0:
        raise ZeroIntensityError("angular profile vanishes on the hemisphere")
    p = w / w.sum()
    key = seeding.stream_key(seed, "einstein_screen")
    fn = partial(_screen_chunk, p, n_theta, n_phi, key, policy)
    res = seeding.map_trials(fn, n_trials, workers)
    if not res:
        res = {"bin": np.zeros(0, dtype=int), "theta": np.zeros(0), "phi": np.zeros(0)}
    return ScreenHits(res["theta"], res["phi"], res["bin"], p, n_theta, n_phi, seed)
