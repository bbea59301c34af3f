"""Spin-singlet pair measured by two analysers.

Joint probabilities come from projector algebra on the four-dimensional
two-spin space (basis ``uu, ud, du, dd``). Sampling is sequential: the
detector that measures first in the chosen frame draws from its marginal,
the pair state is reduced, and the second detector draws from what is
left. Simultaneous measurements draw once from the joint table. The frame
only decides which detector goes first; the law is the same either way.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from functools import partial

import numpy as np

from . import seeding
from .spacetime import BoostParameters, ordering_delay

PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)
# unnormalised ket; expectation values divide by <psi|psi>, which keeps
# probabilities such as 0, 1/4 and 1/2 exact in floating point
SINGLET = np.array([0.0, 1.0, -1.0, 0.0], dtype=complex)
SPINS = (1, -1)
UNIT_TOL = 1e-12


def unit_vector(a) -> np.ndarray:
    v = np.asarray(a, dtype=float).reshape(3)
    if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
        raise ValueError(f"analyser axis must be a unit vector, |a| = {np.linalg.norm(v)!r}")
    return v


def direction(theta: float, phi: float = 0.0) -> np.ndarray:
    """Unit vector at polar angle ``theta`` from z, azimuth ``phi``."""
    return np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])


@dataclass(frozen=True)
class AnalyzerSetting:
    a: tuple
    b: tuple

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in unit_vector(self.a)))
        object.__setattr__(self, "b", tuple(float(v) for v in unit_vector(self.b)))

    @classmethod
    def coplanar(cls, theta_a: float, theta_b: float) -> AnalyzerSetting:
        """Both axes in the xz-plane, angles in radians from z."""
        return cls(tuple(direction(theta_a)), tuple(direction(theta_b)))


@dataclass(frozen=True)
class SingletState:
    """The singlet pair; packets travel as classical tracks ``+/- v t``."""

    velocity: tuple = (0.0, 0.0, 0.0)

    @property
    def vector(self) -> np.ndarray:
        return SINGLET / math.sqrt(2.0)

    def tracks(self, t: float) -> np.ndarray:
        v = np.asarray(self.velocity, dtype=float)
        return np.stack([v * t, -v * t])

    @staticmethod
    def swapped(psi: np.ndarray) -> np.ndarray:
        """Exchange the particle labels of a two-spin vector."""
        return np.asarray(psi).reshape(2, 2).T.reshape(4)


def projector(a, s: int) -> np.ndarray:
    """``(I + s a.sigma) / 2`` for outcome ``s`` along unit axis ``a``."""
    if s not in SPINS:
        raise ValueError("spin outcome must be +1 or -1")
    return 0.5 * (np.eye(2) + s * np.einsum("i,ijk->jk", unit_vector(a), PAULI))


def joint_probability(a, b, s1: int, s2: int, state: np.ndarray = SINGLET) -> float:
    op = np.kron(projector(a, s1), projector(b, s2))
    return float(np.real(np.vdot(state, op @ state)) / np.real(np.vdot(state, state)))


def joint_table(a, b, state: np.ndarray = SINGLET) -> np.ndarray:
    """``P[i, j]`` for ``s1 = SPINS[i]``, ``s2 = SPINS[j]``."""
    return np.array([[joint_probability(a, b, s1, s2, state) for s2 in SPINS] for s1 in SPINS])


def conditional_second(a, b, first: int, s_first: int, state: np.ndarray = SINGLET) -> float:
    """P(second detector reads +1) after the reduction by the first outcome.

    ``first`` is 0 when detector 1 measured first, 1 for detector 2.
    """
    if first == 0:
        reduce_op = np.kron(projector(a, s_first), np.eye(2))
        second_op = np.kron(np.eye(2), projector(b, 1))
    else:
        reduce_op = np.kron(np.eye(2), projector(b, s_first))
        second_op = np.kron(projector(a, 1), np.eye(2))
    psi = reduce_op @ state
    nrm = np.vdot(psi, psi).real
    if nrm == 0:
        raise ValueError("first outcome has probability zero")
    psi = psi / math.sqrt(nrm)
    return float(np.real(np.vdot(psi, second_op @ psi)))


@dataclass(frozen=True)
class FrameOrdering:
    first_detector: str
    delay: float
    boost: BoostParameters

    @property
    def first_index(self) -> int | None:
        return {"D1": 0, "D2": 1}.get(self.first_detector)


def simultaneous() -> FrameOrdering:
    return FrameOrdering("tie", 0.0, BoostParameters())


def frame_roles(detector_positions, b: BoostParameters) -> FrameOrdering:
    """Which detector measures first in the frame ``b``.

    Arrivals are simultaneous in the rest frame. With ``dx`` the separation
    D1 -> D2 along the boost axis, D2 is first when ``gamma beta dx > 0``.
    """
    pos = np.asarray(detector_positions, dtype=float).reshape(2, 3)
    dx = float((pos[1] - pos[0]) @ b.axis_array())
    delay = ordering_delay(dx, b)
    if delay == 0.0:
        return FrameOrdering("tie", 0.0, b)
    return FrameOrdering("D2" if delay > 0 else "D1", abs(delay), b)


@dataclass(frozen=True, eq=False)
class JointOutcome:
    s1: np.ndarray
    s2: np.ndarray
    first_detector: str

    @property
    def n_trials(self) -> int:
        return int(self.s1.size)

    def table(self) -> np.ndarray:
        """Empirical counts ``[i, j]`` in the ``SPINS`` order."""
        i = (self.s1 < 0).astype(int)
        j = (self.s2 < 0).astype(int)
        return np.bincount(2 * i + j, minlength=4).reshape(2, 2)

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "s1", "s2", "first"])
        for n, (x, y) in enumerate(zip(self.s1, self.s2)):
            w.writerow([n, int(x), int(y), self.first_detector])


def _joint_chunk(a, b, first: int | None, key: int, start: int, stop: int) -> dict:
    seeds = seeding.trial_seeds(key, stop - start, start)
    u = seeding.uniforms(seeds, 2)
    table = joint_table(a, b)
    if first is None:
        cdf = np.cumsum(table.ravel())
        idx = np.minimum(np.searchsorted(cdf / cdf[-1], u[:, 0], side="right"), 3)
        i, j = np.divmod(idx, 2)
        return {"s1": np.where(i == 0, 1, -1), "s2": np.where(j == 0, 1, -1)}
    marginal_plus = table.sum(axis=1 - first)[0]
    s_first = np.where(u[:, 0] < marginal_plus, 1, -1)
    p_plus = {s: conditional_second(a, b, first, s) for s in SPINS}
    p_second = np.where(s_first == 1, p_plus[1], p_plus[-1])
    s_second = np.where(u[:, 1] < p_second, 1, -1)
    if first == 0:
        return {"s1": s_first, "s2": s_second}
    return {"s1": s_second, "s2": s_first}


def sample_joint(a, b, order: FrameOrdering, seed: int, n_trials: int = 1, workers: int = 1,
                 stream: str = "joint") -> JointOutcome:
    a, b = unit_vector(a), unit_vector(b)
    key = seeding.stream_key(seed, "epr", stream)
    fn = partial(_joint_chunk, a, b, order.first_index, key)
    res = seeding.map_trials(fn, n_trials, workers)
    if not res:
        res = {"s1": np.zeros(0, dtype=int), "s2": np.zeros(0, dtype=int)}
    return JointOutcome(res["s1"], res["s2"], order.first_detector)


@dataclass(frozen=True)
class CorrelationEstimate:
    estimate: float
    stderr: float
    analytic: float
    n_trials: int

    def to_dict(self) -> dict:
        return asdict(self)


def correlation_analytic(a, b) -> float:
    t = joint_table(a, b)
    return float(t[0, 0] + t[1, 1] - t[0, 1] - t[1, 0])


def correlation(a, b, n_trials: int, seed: int, order: FrameOrdering | None = None,
                workers: int = 1, stream: str = "correlation") -> CorrelationEstimate:
    if n_trials < 1000:
        raise ValueError("correlation estimates need n_trials >= 1000")
    out = sample_joint(a, b, order or simultaneous(), seed, n_trials, workers, stream)
    est = float(np.mean(out.s1 * out.s2))
    return CorrelationEstimate(est, math.sqrt(max(0.0, 1.0 - est * est) / n_trials),
                               correlation_analytic(a, b), n_trials)


@dataclass(frozen=True)
class CHSHEstimate:
    estimate: float
    stderr: float
    analytic: float
    n_trials: int
    terms: tuple

    def to_dict(self) -> dict:
        d = asdict(self)
        d["terms"] = list(d["terms"])
        return d


CHSH_SIGNS = (1, -1, 1, 1)


def _chsh_pairs(a, a2, b, b2):
    return ((a, b), (a, b2), (a2, b), (a2, b2))


def chsh_analytic(a, a2, b, b2) -> float:
    return float(sum(s * correlation_analytic(x, y)
                     for s, (x, y) in zip(CHSH_SIGNS, _chsh_pairs(a, a2, b, b2))))


def chsh(a, a2, b, b2, n_trials: int, seed: int, order: FrameOrdering | None = None,
         workers: int = 1) -> CHSHEstimate:
    """``S = E(a,b) - E(a,b') + E(a',b) + E(a',b')``, ``n_trials`` per term."""
    terms = tuple(correlation(x, y, n_trials, seed, order, workers, stream=f"chsh{i}")
                  for i, (x, y) in enumerate(_chsh_pairs(a, a2, b, b2)))
    est = sum(s * t.estimate for s, t in zip(CHSH_SIGNS, terms))
    err = math.sqrt(sum((1.0 - t.estimate ** 2) for t in terms) / n_trials)
    return CHSHEstimate(float(est), err, chsh_analytic(a, a2, b, b2), n_trials, terms)


def optimal_chsh_settings() -> tuple:
    """Coplanar axes at 0, 90, 45 and 135 degrees (a, a', b, b')."""
    return tuple(direction(math.radians(d)) for d in (0.0, 90.0, 45.0, 135.0))


def correlation_sweep(n_angles: int, n_trials: int, seed: int, order: FrameOrdering | None = None,
                      workers: int = 1) -> list[dict]:
    """Rows ``angle_deg, estimate, stderr, analytic`` for angles 0..180 degrees."""
    a = direction(0.0)
    rows = []
    for i, deg in enumerate(np.linspace(0.0, 180.0, n_angles)):
        est = correlation(a, direction(math.radians(deg)), n_trials, seed, order, workers,
                          stream=f"sweep{i}")
        rows.append({"angle_deg": float(deg), "estimate": est.estimate,
                     "stderr": est.stderr, "analytic": est.analytic})
    return rows
