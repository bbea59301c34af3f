"""Born-rule measurement and reduction in the detector rest frame.

Reduction is instantaneous at the detection time in the frame where the
detector is at rest. Other frames only ever see whole pre- and post-
reduction histories transformed as a unit (:func:`reduction_in_boosted_frame`);
no boost is applied pointwise to "the collapse".
"""
from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from . import seeding
from .lorentz_action import SpacetimeSampleSet
from .spacetime import BoostParameters, FourVector, boost_events
from .wavepacket import (
    MomentumAmplitude,
    PositionField,
    as_events,
    evolve,
    group_velocity,
    norm_density,
    packet_extent,
    synthesize_events,
)


class ZeroIntensityError(ValueError):
    pass


class FrameMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Cell:
    """Axis-aligned box ``lower <= x < upper`` (position or momentum).

    1D detectors may give scalar bounds; y and z are then unbounded.
    """

    label: str
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.full(3, -np.inf)
        hi = np.full(3, np.inf)
        lo_in = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi_in = np.atleast_1d(np.asarray(self.upper, dtype=float))
        lo[:lo_in.size] = lo_in
        hi[:hi_in.size] = hi_in
        if np.any(hi <= lo):
            raise ValueError(f"cell {self.label!r} is empty")
        object.__setattr__(self, "lower", tuple(lo))
        object.__setattr__(self, "upper", tuple(hi))

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        return np.all((p >= self.lower) & (p < self.upper), axis=1)

    @property
    def center(self) -> np.ndarray:
        lo, hi = np.array(self.lower), np.array(self.upper)
        bounded = np.isfinite(lo) & np.isfinite(hi)
        return np.where(bounded, 0.5 * (np.where(bounded, lo, 0.0) + np.where(bounded, hi, 0.0)), 0.0)


def _overlap(a: Cell, b: Cell) -> bool:
    return bool(np.all(np.maximum(a.lower, b.lower) < np.minimum(a.upper, b.upper)))


@dataclass(frozen=True)
class DetectorArray:
    cells: tuple
    rest_frame_boost: BoostParameters = field(default_factory=BoostParameters)
    mode: str = "position"

    def __post_init__(self):
        cells = tuple(self.cells)
        if not cells:
            raise ValueError("detector needs at least one cell")
        if self.mode not in ("position", "momentum"):
            raise ValueError(f"unknown detector mode {self.mode!r}")
        for i, a in enumerate(cells):
            for b in cells[i + 1:]:
                if _overlap(a, b):
                    raise ValueError(f"cells {a.label!r} and {b.label!r} overlap")
        object.__setattr__(self, "cells", cells)

    @classmethod
    def uniform_1d(cls, lo: float, hi: float, n_cells: int, **kw) -> DetectorArray:
        edges = np.linspace(lo, hi, n_cells + 1)
        cells = [Cell(str(i), edges[i], edges[i + 1]) for i in range(n_cells)]
        return cls(tuple(cells), **kw)

    @classmethod
    def from_edges(cls, edges: Sequence[float], **kw) -> DetectorArray:
        e = list(edges)
        return cls(tuple(Cell(str(i), e[i], e[i + 1]) for i in range(len(e) - 1)), **kw)

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.cells]

    def assign(self, points: np.ndarray) -> np.ndarray:
        """Cell index per point, -1 outside every cell."""
        idx = np.full(np.asarray(points).reshape(-1, 3).shape[0], -1)
        for i, c in enumerate(self.cells):
            idx[c.contains(points)] = i
        return idx


def _check_frame(frame: BoostParameters | None, det: DetectorArray):
    det_b = det.rest_frame_boost
    if det_b.is_identity:
        if frame is not None and not frame.is_identity:
            raise FrameMismatchError("field is prepared in a moving frame but the detector is at rest")
        return
    if frame is None or abs(frame.beta - det_b.beta) > 1e-12 or \
            np.max(np.abs(np.subtract(frame.axis, det_b.axis))) > 1e-12:
        raise FrameMismatchError("field must be prepared in the detector rest frame before applying Born's rule")


def cell_weights(source, det: DetectorArray) -> np.ndarray:
    """Unnormalised Born weight of each cell."""
    if isinstance(source, PositionField):
        if det.mode != "position":
            raise ValueError("position field needs a position-mode detector")
        points, dens = source.points, source.intensity() * source.volume_weights
    elif isinstance(source, MomentumAmplitude):
        if det.mode != "momentum":
            raise ValueError("momentum amplitude needs a momentum-mode detector")
        points, dens = source.grid.samples, norm_density(source)
    else:
        raise TypeError(f"cannot apply Born's rule to {type(source).__name__}")
    _check_frame(source.frame, det)
    idx = det.assign(points)
    inside = idx >= 0
    return np.bincount(idx[inside], weights=dens[inside], minlength=len(det.cells))


def born_probabilities(source, det: DetectorArray) -> np.ndarray:
    """Cell probabilities ``p_i = I_i / sum_j I_j`` from a field or amplitude.

    A :class:`PositionField` uses ``|phi|^2`` times the sample volume; a
    :class:`MomentumAmplitude` uses the ``1/(2 k0)`` norm density. The
    source must be expressed in the detector's rest frame.
    """
    w = cell_weights(source, det)
    total = w.sum()
    if not total > 0:
        raise ZeroIntensityError("no intensity inside the detector cells")
    return w / total


def validate_distribution(p) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size == 0 or not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError("probabilities must be finite and non-negative")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
    return p


def _inverse_cdf(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    # never land on a trailing zero-probability category
    cdf[np.flatnonzero(p)[-1]:] = 1.0
    return np.searchsorted(cdf, u, side="right")


class ReductionPolicy:
    """How a measurement picks its outcome. Subclasses must reproduce
    Born statistics for the selected cell."""

    policy_id = "abstract"

    def select(self, p, seeds) -> np.ndarray:
        raise NotImplementedError


class InstantaneousBorn(ReductionPolicy):
    """One-shot categorical draw at the detection time (the default)."""

    policy_id = "instantaneous-born"

    def select(self, p, seeds) -> np.ndarray:
        p = validate_distribution(p)
        u = seeding.uniforms(seeds, 1)[:, 0]
        return _inverse_cdf(p, u)


class GradualMartingale(ReductionPolicy):
    """Weights drift stochastically until one cell holds all of them.

    Each step draws a cell ``j`` with the current weights ``q`` and moves
    ``q <- (1 - rate) q + rate e_j``. ``q`` is a martingale, so the cell it
    ends on is Born distributed. Stops once a weight exceeds ``1 - tol``.
    """

    policy_id = "gradual-martingale"

    def __init__(self, rate: float = 0.5, tol: float = 1e-10, max_steps: int = 400):
        if not 0 < rate < 1:
            raise ValueError("rate must be in (0, 1)")
        self.rate, self.tol, self.max_steps = rate, tol, max_steps

    def select(self, p, seeds) -> np.ndarray:
        p = validate_distribution(p)
        seeds = np.atleast_1d(np.asarray(seeds, dtype=np.uint64))
        q = np.tile(p, (seeds.size, 1))
        live = np.flatnonzero(q.max(axis=1) <= 1.0 - self.tol)
        for step in range(self.max_steps):
            if live.size == 0:
                break
            u = seeding.uniform_column(seeds[live], step)
            cdf = np.cumsum(q[live], axis=1)
            j = np.minimum((cdf < (u * cdf[:, -1])[:, None]).sum(axis=1), p.size - 1)
            q[live] *= 1.0 - self.rate
            q[live, j] += self.rate
            live = live[q[live].max(axis=1) <= 1.0 - self.tol]
        return np.argmax(q, axis=1)


POLICIES = {cls.policy_id: cls for cls in (InstantaneousBorn, GradualMartingale)}


def get_policy(policy: str | ReductionPolicy | None) -> ReductionPolicy:
    if policy is None:
        return InstantaneousBorn()
    if isinstance(policy, ReductionPolicy):
        return policy
    try:
        return POLICIES[policy]()
    except KeyError:
        raise ValueError(f"unknown reduction policy {policy!r}; known: {sorted(POLICIES)}") from None


def sample_outcome(p, seed: int, policy: str | ReductionPolicy | None = None) -> int:
    """Index of the selected cell; a pure function of ``(p, seed, policy)``."""
    return int(get_policy(policy).select(p, np.array([seed], dtype=np.uint64))[0])


def sample_outcomes(p, seeds, policy: str | ReductionPolicy | None = None) -> np.ndarray:
    return get_policy(policy).select(p, seeds)


def reduce_position(field: PositionField, cell: Cell) -> PositionField:
    """Restrict to ``cell``, renormalise to unit L2 norm; time is unchanged."""
    inside = cell.contains(field.points)
    vals = np.where(inside, field.values.ravel(), 0.0)
    n2 = float(np.sum(np.abs(vals) ** 2 * field.volume_weights))
    if not n2 > 0:
        raise ZeroIntensityError(f"cell {cell.label!r} carries no intensity")
    return PositionField(field.axes, vals / math.sqrt(n2), field.time, field.frame)


@dataclass(frozen=True)
class MeasurementRecord:
    outcome_label: str
    outcome_index: int
    event: FourVector
    pre_norm: float
    rng_seed: int
    probabilities: tuple
    policy: str = InstantaneousBorn.policy_id

    def __post_init__(self):
        p = tuple(float(x) for x in self.probabilities)
        if abs(math.fsum(p) - 1.0) > 1e-12:
            raise ValueError("recorded probabilities must sum to 1")
        if not 0 <= self.outcome_index < len(p):
            raise ValueError("outcome index out of range")
        object.__setattr__(self, "probabilities", p)

    def to_json(self) -> str:
        d = asdict(self)
        d["event"] = [self.event.t, self.event.x, self.event.y, self.event.z]
        d["probabilities"] = list(self.probabilities)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> MeasurementRecord:
        d = json.loads(line)
        d["event"] = FourVector(*d["event"])
        return cls(**d)


def measure(field: PositionField, det: DetectorArray, seed: int,
            policy: str | ReductionPolicy | None = None) -> tuple[MeasurementRecord, PositionField]:
    """Born-sample a cell at ``field.time`` and reduce the field onto it."""
    pol = get_policy(policy)
    p = born_probabilities(field, det)
    # renormalise after the float division so the record sums to 1 tightly
    p = p / math.fsum(p)
    i = int(pol.select(p, np.array([seed], dtype=np.uint64))[0])
    cell = det.cells[i]
    c = cell.center
    rec = MeasurementRecord(cell.label, i, FourVector(field.time, *c), field.l2_norm(),
                            int(seed), tuple(p), pol.policy_id)
    return rec, reduce_position(field, cell)


def write_records_jsonl(records, fh) -> None:
    for r in records:
        fh.write(r.to_json() + "\n")


def read_records_jsonl(fh) -> list[MeasurementRecord]:
    return [MeasurementRecord.from_json(line) for line in fh if line.strip()]


def crossing_time(amp: MomentumAmplitude, position: float, axis=(1.0, 0.0, 0.0),
                  t0: float = 0.0, start: float = 0.0) -> float:
    """When the packet centre, moving at its mean group velocity, reaches ``position``."""
    v = float(group_velocity(amp) @ np.asarray(axis, dtype=float))
    if v == 0:
        raise ValueError("packet centre does not move along the axis")
    return t0 + (position - start) / v


@dataclass(frozen=True, eq=False)
class BoostedReduction:
    """Pre/post histories seen from a moving frame.

    ``post[i]`` tells whether sample ``i`` lies after the rest-frame
    reduction time. ``transition`` is the new-frame time window over which
    the packet support crosses the reduction hypersurface.
    """

    samples: SpacetimeSampleSet
    post: np.ndarray
    transition: tuple[float, float]

    @property
    def width(self) -> float:
        return self.transition[1] - self.transition[0]


def reduction_in_boosted_frame(pre: MomentumAmplitude, post: MomentumAmplitude,
                               reduction_event: FourVector, b: BoostParameters,
                               targets, support: tuple[float, float] | None = None,
                               support_threshold: float = 1e-6) -> BoostedReduction:
    """Evaluate the pre- or post-reduction history at new-frame events.

    Each target is mapped back to the detector frame; before the reduction
    time it reads the ``pre`` history, from then on the ``post`` history.
    ``support`` is the packet's extent along ``b.axis`` at the reduction
    time (rest frame); by default it is taken from ``pre`` where the
    intensity exceeds ``support_threshold`` of its peak.
    """
    t_r = reduction_event.t
    axis = b.axis_array()
    if support is None:
        field = evolve(pre, t_r, pre.grid.position_axes(reduction_event.spatial[:pre.grid.dim]))
        support = packet_extent(field, axis, support_threshold)
    lo, hi = sorted(support)
    new = as_events(targets)
    old = boost_events(new, b.inverse())
    is_post = old[:, 0] >= t_r
    values = np.empty(new.shape[0], dtype=complex)
    if (~is_post).any():
        values[~is_post] = synthesize_events(pre, old[~is_post])
    if is_post.any():
        values[is_post] = synthesize_events(post, old[is_post])
    # the reduction hypersurface t = t_r over the support, seen from the new frame
    perp = reduction_event.spatial - (reduction_event.spatial @ axis) * axis
    edges = np.array([[t_r, *(perp + s * axis)] for s in (lo, hi)])
    t_edges = boost_events(edges, b)[:, 0]
    return BoostedReduction(SpacetimeSampleSet(new, values, b), is_post,
                            (float(t_edges.min()), float(t_edges.max())))
