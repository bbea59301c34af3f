"""Scalar Lorentz action on wave packets.

A boost does not map a single-time field to a single-time field: the old
slice ``t = const`` lands on new-frame times spread by ``gamma beta L``
over a packet of length ``L``. Accordingly :func:`pullback_transform`
returns a :class:`SpacetimeSampleSet` (events need not share a time), and a
new-frame state at one time is only obtained by

* :func:`momentum_boost` followed by ``wavepacket.evolve`` (the whole
  history is transformed, exact up to interpolation), or
* the explicit one-time approximation measured by
  :func:`quasi_2d_residual`.

Two routes to the same numbers: :func:`pullback_transform` evaluates the
original packet at ``boost^-1(x')``; :func:`momentum_boost` resamples
``w'(k') = w(boost^-1 k')`` on a momentum grid. The measure ``d^dk / k0``
is Lorentz invariant so no Jacobian appears.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from .spacetime import BoostParameters, boost_events, compose_collinear
from .wavepacket import (
    MomentumAmplitude,
    MomentumGrid,
    as_events,
    dispersion,
    evolve,
    norm_density,
    packet_extent,
    synthesize_events,
)


class SupportOverflowError(ValueError):
    """Boosted momenta fall outside the target momentum grid."""


@dataclass(frozen=True, eq=False)
class SpacetimeSampleSet:
    events: np.ndarray
    values: np.ndarray
    frame: BoostParameters | None = None

    def __post_init__(self):
        ev = np.array(self.events, dtype=float).reshape(-1, 4)
        v = np.array(self.values, dtype=complex).reshape(-1)
        if ev.shape[0] != v.size:
            raise ValueError("one value per event required")
        object.__setattr__(self, "events", ev)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.events[:, 0]

    @property
    def is_single_time(self) -> bool:
        return bool(np.all(self.times == self.times[0])) if len(self) else True

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y", "z", "re", "im"])
        for e, v in zip(self.events, self.values):
            w.writerow([*(repr(float(c)) for c in e), repr(float(v.real)), repr(float(v.imag))])


def _target_frame(amp: MomentumAmplitude, b: BoostParameters) -> BoostParameters:
    return b if amp.frame is None else compose_collinear(amp.frame, b)


def pullback_transform(amp: MomentumAmplitude, b: BoostParameters, targets) -> SpacetimeSampleSet:
    """New-frame values ``phi'(x') = phi(boost^-1 x')`` at the target events."""
    new = as_events(targets)
    old = boost_events(new, b.inverse())
    return SpacetimeSampleSet(new, synthesize_events(amp, old), _target_frame(amp, b))


def boost_momenta(k: np.ndarray, m: float, b: BoostParameters) -> np.ndarray:
    """Spatial part of the boosted on-shell four-momenta of ``(M, 3)`` momenta."""
    k = np.asarray(k, dtype=float).reshape(-1, 3)
    four = np.column_stack([dispersion(k, m), k])
    return boost_events(four, b)[:, 1:]


def _check_axis(grid: MomentumGrid, b: BoostParameters):
    if grid.dim == 1 and not b.is_identity:
        ax = b.axis_array()
        if abs(abs(ax[0]) - 1.0) > 1e-12:
            raise ValueError("1D packets can only be boosted along x")


def _support_mask(amp: MomentumAmplitude, tail: float) -> np.ndarray:
    dens = norm_density(amp)
    total = dens.sum()
    if total == 0:
        return np.zeros(dens.size, dtype=bool)
    order = np.argsort(dens)
    dropped = np.cumsum(dens[order]) <= tail * total
    mask = np.ones(dens.size, dtype=bool)
    mask[order[dropped]] = False
    return mask


def momentum_boost(amp: MomentumAmplitude, b: BoostParameters, grid: MomentumGrid | None = None,
                   order: int = 3, tail: float = 1e-14) -> MomentumAmplitude:
    """Amplitude of the same packet as seen from the frame moving with ``b``.

    ``w'(k') = w(k)`` with ``k = boost^-1(k')`` on shell; values between
    grid nodes come from a spline of the given ``order`` (1 = linear,
    first-order accurate; 3 = cubic, the default).

    Raises :class:`SupportOverflowError` when the boosted image of the
    packet's support (all modes but a ``tail`` fraction of the norm) does
    not fit inside ``grid`` (default: the input grid).
    """
    grid = amp.grid if grid is None else grid
    if grid.dim != amp.grid.dim:
        raise ValueError("target grid dimension differs from the amplitude's")
    _check_axis(amp.grid, b)
    if b.is_identity and grid is amp.grid:
        return MomentumAmplitude(grid, amp.values, amp.mass, amp.frame)

    support = _support_mask(amp, tail)
    if support.any():
        mapped = boost_momenta(amp.grid.samples[support], amp.mass, b)
        for ax, (lo, hi) in enumerate(grid.bounds):
            if mapped[:, ax].min() < lo or mapped[:, ax].max() > hi:
                raise SupportOverflowError(
                    f"boosted support [{mapped[:, ax].min():.4g}, {mapped[:, ax].max():.4g}] "
                    f"exceeds grid axis {ax} span [{lo:.4g}, {hi:.4g}]")

    back = boost_momenta(grid.samples, amp.mass, b.inverse())
    coords = np.stack([(back[:, ax] - a[0]) / (a[1] - a[0])
                       for ax, a in enumerate(amp.grid.axes)])
    src = amp.values
    re = map_coordinates(src.real, coords, order=order, mode="constant", cval=0.0)
    im = map_coordinates(src.imag, coords, order=order, mode="constant", cval=0.0)
    return MomentumAmplitude(grid, re + 1j * im, amp.mass, _target_frame(amp, b))


def grid_for_boost(center_k: float, sigma_k: float, m: float, b: BoostParameters,
                   points_per_sigma: float = 20.0, span_sigmas: float = 8.0,
                   max_n: int = 1 << 15) -> MomentumGrid:
    """1D grid holding a Gaussian packet both before and after an x-boost.

    The spacing resolves the narrower of the two widths (the boost
    stretches or squeezes ``dk`` by ``k0' / k0``).
    """
    if not b.is_identity and abs(abs(b.axis[0]) - 1.0) > 1e-12:
        raise ValueError("grid_for_boost handles boosts along x only")
    beta = b.beta * b.axis[0]
    bx = BoostParameters(beta)
    k = np.linspace(center_k - span_sigmas * sigma_k, center_k + span_sigmas * sigma_k, 257)
    kk = np.column_stack([k, np.zeros_like(k), np.zeros_like(k)])
    kb = boost_momenta(kk, m, bx)[:, 0]
    k_max = max(np.abs(k).max(), np.abs(kb).max())
    stretch = bx.gamma * (1.0 - beta * k / dispersion(kk, m))
    dk = sigma_k * min(1.0, float(stretch.min())) / points_per_sigma
    n = int(math.ceil(2.0 * k_max / dk)) + 1
    if n > max_n:
        raise ValueError(f"boost grid would need {n} samples (cap {max_n})")
    n += n % 2
    return MomentumGrid.uniform(n, k_max, 1)


def time_slice_spread(spatial_extent: float, b: BoostParameters) -> float:
    """Spread of new-frame times over one old-frame time slice of given extent."""
    if spatial_extent < 0:
        raise ValueError("spatial extent must be non-negative")
    return b.gamma * abs(b.beta) * spatial_extent


def quasi_2d_residual(amp: MomentumAmplitude, b: BoostParameters, x_points=None,
                      t0: float = 0.0, x_center: float | None = None) -> float:
    """Relative L2 error of treating a boosted slice as one-time.

    Pick the new-frame slice ``t' = t'_c`` through the packet centre event
    ``(t0, x_c)``. Exactly, the point of that slice above old position
    ``x`` sits at old time ``t0 + beta (x - x_c)``. The approximation keeps
    every point at ``t0``. Returns ``|exact - approx| / |exact|`` over the
    sample points (uniform weights).

    ``x_points`` are old-frame positions on the ``t0`` slice: an ``(n,)``
    array along x or ``(n, 3)`` points. By default they span the packet's
    intensity support with 257 samples.
    """
    ax = b.axis_array()
    if not b.is_identity and abs(abs(ax[0]) - 1.0) > 1e-12:
        raise ValueError("quasi-2D residual is defined for boosts along x")
    bx = BoostParameters(b.beta * ax[0])
    if x_points is None:
        field = evolve(amp, t0, amp.grid.position_axes())
        lo, hi = packet_extent(field, threshold=1e-8)
        x_points = np.linspace(lo, hi, 257)
    pts = np.asarray(x_points, dtype=float)
    if pts.ndim == 1:
        pts = np.column_stack([pts, np.zeros_like(pts), np.zeros_like(pts)])
    old_slice = np.column_stack([np.full(pts.shape[0], t0), pts])
    approx = synthesize_events(amp, old_slice)
    if x_center is None:
        inten = np.abs(approx) ** 2
        if inten.sum() == 0:
            raise ValueError("packet vanishes on the sample points")
        x_center = float(inten @ pts[:, 0] / inten.sum())
    g, beta = bx.gamma, bx.beta
    t_new = g * (t0 - beta * x_center)
    targets = old_slice.copy()
    targets[:, 0] = t_new
    targets[:, 1] = pts[:, 0] / g - beta * t_new
    exact = pullback_transform(amp, bx, targets).values
    denom = np.linalg.norm(exact)
    if denom == 0:
        raise ValueError("packet vanishes on the sample points")
    return float(np.linalg.norm(exact - approx) / denom)
