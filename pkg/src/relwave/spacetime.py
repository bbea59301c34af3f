"""Four-vectors and boosts in natural units (c = 1).

Events are ``(t, x, y, z)``. The interval is returned in the space-minus-time
form ``|dx|^2 - dt^2`` so positive values are space-like.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# |beta| must stay below this; keeps gamma under ~2.2e4.
BETA_LIMIT = 1.0 - 1e-9


class BoostError(ValueError):
    """Raised for boost parameters outside |beta| < 1."""


@dataclass(frozen=True)
class FourVector:
    t: float
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        for name in ("t", "x", "y", "z"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"FourVector.{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)

    @property
    def spatial(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def as_array(self) -> np.ndarray:
        return np.array([self.t, self.x, self.y, self.z])

    @classmethod
    def from_array(cls, arr) -> FourVector:
        t, x, y, z = (float(v) for v in arr)
        return cls(t, x, y, z)


@dataclass(frozen=True)
class BoostParameters:
    """Velocity ``beta`` (units of c) along the unit vector ``axis``.

    The axis is normalised on construction; a zero axis is rejected.
    """

    beta: float = 0.0
    axis: tuple[float, float, float] = field(default=(1.0, 0.0, 0.0))

    def __post_init__(self):
        beta = float(self.beta)
        if not math.isfinite(beta) or abs(beta) >= BETA_LIMIT:
            raise BoostError(f"|beta| < 1 required (guard 1 - 1e-9), got beta={beta!r}")
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        norm = float(np.linalg.norm(axis))
        if not np.all(np.isfinite(axis)) or norm == 0.0:
            raise BoostError(f"boost axis must be a finite nonzero 3-vector, got {self.axis!r}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "axis", tuple(float(a) for a in axis / norm))

    @property
    def gamma(self) -> float:
        return 1.0 / math.sqrt(1.0 - self.beta * self.beta)

    @property
    def is_identity(self) -> bool:
        return self.beta == 0.0

    def inverse(self) -> BoostParameters:
        return BoostParameters(-self.beta, self.axis)

    def axis_array(self) -> np.ndarray:
        return np.array(self.axis)


def gamma(beta: float) -> float:
    return BoostParameters(beta).gamma


def interval(a: FourVector, b: FourVector) -> float:
    """Invariant interval ``|x_a - x_b|^2 - (t_a - t_b)^2``."""
    dt = a.t - b.t
    dx, dy, dz = a.x - b.x, a.y - b.y, a.z - b.z
    return dx * dx + dy * dy + dz * dz - dt * dt


def intervals(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise interval of two ``(n, 4)`` event arrays."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return np.sum(d[..., 1:] ** 2, axis=-1) - d[..., 0] ** 2


def boost_events(events: np.ndarray, b: BoostParameters) -> np.ndarray:
    """Boost an ``(..., 4)`` array of events into the frame moving with ``b``.

    Along the axis: ``x' = gamma (x - beta t)``, ``t' = gamma (t - beta x)``;
    the perpendicular part is untouched.
    """
    ev = np.asarray(events, dtype=float)
    if b.is_identity:
        return ev.copy()
    n = b.axis_array()
    t = ev[..., 0]
    r = ev[..., 1:]
    x_par = r @ n
    g = b.gamma
    t_new = g * (t - b.beta * x_par)
    x_par_new = g * (x_par - b.beta * t)
    r_new = r + np.multiply.outer(x_par_new - x_par, n)
    out = np.empty_like(ev)
    out[..., 0] = t_new
    out[..., 1:] = r_new
    return out


def boost(v: FourVector, b: BoostParameters) -> FourVector:
    return FourVector.from_array(boost_events(v.as_array(), b))


def compose_collinear(b1: BoostParameters, b2: BoostParameters) -> BoostParameters:
    """Single boost equal to ``b1`` followed by ``b2`` when both share an axis line."""
    n1, n2 = b1.axis_array(), b2.axis_array()
    if b1.is_identity:
        return b2
    if b2.is_identity:
        return b1
    c = float(n1 @ n2)
    if abs(abs(c) - 1.0) > 1e-12:
        raise BoostError("only collinear boosts compose to a pure boost")
    beta2 = b2.beta * math.copysign(1.0, c)
    return BoostParameters((b1.beta + beta2) / (1.0 + b1.beta * beta2), b1.axis)


def ordering_delay(dx: float, b: BoostParameters) -> float:
    """Time by which the event at ``+dx`` along ``b.axis`` precedes the one at 0.

    Both events are simultaneous in the unboosted frame. Returns
    ``gamma * beta * dx``; positive means the downstream event comes first
    in the boosted frame.
    """
    return b.gamma * b.beta * float(dx)


def contraction_check(stick_length_rest: float, b: BoostParameters) -> tuple[float, float]:
    """Length of a stick at rest in the boosted frame, read at equal unboosted time.

    Returns ``(L sqrt(1 - beta^2), beta x / sqrt(1 - beta^2))`` with ``x``
    the contracted length, i.e. how far apart in boosted time the two end
    readings are.
    """
    if stick_length_rest < 0:
        raise ValueError("stick length must be non-negative")
    root = math.sqrt(1.0 - b.beta * b.beta)
    length = stick_length_rest * root
    return length, b.beta * length / root
