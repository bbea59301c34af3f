"""Free scalar (spin-0, neutral) wave packets.

A packet is held as a momentum amplitude ``w(k)`` against the invariant
measure ``d^dk / k0``::

    phi(t, x) = sum_j w(k_j) exp(-i (k0_j t - k_j . x)) * weight_j / k0_j

and its relativistic norm uses the orthogonality measure ``1 / (2 k0)``::

    norm(w) = sum_j |w(k_j)|^2 * weight_j / (2 k0_j)

Keep the two measures apart; they differ by a factor ``2`` and by which
power of ``k0`` appears.

The phase convention is ``exp(-i k.x)`` with ``k.x = k0 t - k . x``
(positive frequency, forward in time) everywhere.
"""
from __future__ import annotations

import csv
import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import ndtr

from .spacetime import BoostParameters, FourVector

TWO_PI = 2.0 * math.pi
# events x modes per block in direct synthesis
_BLOCK_ELEMS = 1 << 22


class AliasingWarning(UserWarning):
    pass


def _as_axis(a) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


def _uniform_step(axis: np.ndarray, what: str) -> float:
    if axis.size < 2:
        raise ValueError(f"{what} axis needs at least 2 samples")
    d = np.diff(axis)
    step = float(axis[-1] - axis[0]) / (axis.size - 1)
    if step <= 0 or np.max(np.abs(d - step)) > 1e-9 * max(abs(step), 1e-300):
        raise ValueError(f"{what} axis must be uniform and strictly increasing")
    return step


def _trapezoid(n: int, step: float) -> np.ndarray:
    w = np.full(n, step)
    w[0] = w[-1] = 0.5 * step
    return w


def _outer_product(factors: Sequence[np.ndarray]) -> np.ndarray:
    out = factors[0]
    for f in factors[1:]:
        out = np.multiply.outer(out, f)
    return out


def _embed3(points_per_axis: Sequence[np.ndarray]) -> np.ndarray:
    """Flattened (M, 3) coordinates of a 1D or 3D tensor grid (C order)."""
    if len(points_per_axis) == 1:
        x = points_per_axis[0]
        out = np.zeros((x.size, 3))
        out[:, 0] = x
        return out
    mesh = np.meshgrid(*points_per_axis, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True, eq=False)
class MomentumGrid:
    """Uniform tensor grid of momenta, symmetric about k = 0.

    ``axes`` holds one array (1D mode, ``k = (k, 0, 0)``) or three arrays
    (3D mode). Quadrature weights are trapezoidal.
    """

    axes: tuple

    def __post_init__(self):
        axes = tuple(_as_axis(a) for a in self.axes)
        if len(axes) not in (1, 3):
            raise ValueError("MomentumGrid supports 1D or 3D only")
        for a in axes:
            step = _uniform_step(a, "momentum")
            if np.max(np.abs(a + a[::-1])) > 1e-9 * step:
                raise ValueError("momentum axis must be symmetric about k = 0")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def uniform(cls, n: int, k_max: float, dim: int = 1) -> MomentumGrid:
        """``n`` samples per axis from ``-k_max`` to ``k_max`` inclusive."""
        if k_max <= 0:
            raise ValueError("k_max must be positive")
        dk = 2.0 * k_max / (n - 1)
        axis = (np.arange(n) - 0.5 * (n - 1)) * dk
        return cls((axis,) * dim)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(float(a[1] - a[0]) for a in self.axes)

    @property
    def bounds(self) -> tuple[tuple[float, float], ...]:
        return tuple((float(a[0]), float(a[-1])) for a in self.axes)

    @cached_property
    def samples(self) -> np.ndarray:
        return _embed3(self.axes)

    @cached_property
    def weights(self) -> np.ndarray:
        return _outer_product([_trapezoid(a.size, s) for a, s in zip(self.axes, self.spacing)]).ravel()

    def position_axes(self, center=0.0) -> tuple:
        """Spatial axes conjugate to this grid (``dx = 2 pi / (n dk)``)."""
        c = np.broadcast_to(np.asarray(center, dtype=float), (self.dim,))
        out = []
        for a, dk, c_i in zip(self.axes, self.spacing, c):
            n = a.size
            dx = TWO_PI / (n * dk)
            out.append(c_i + (np.arange(n) - n // 2) * dx)
        return tuple(out)


def dispersion(k, m: float):
    """On-shell energy ``sqrt(|k|^2 + m^2)``; ``k`` has trailing size 3 or is a scalar."""
    if m < 0:
        raise ValueError(f"mass must be non-negative, got {m}")
    k = np.asarray(k, dtype=float)
    k2 = k * k if k.ndim == 0 else np.sum(k * k, axis=-1)
    out = np.sqrt(k2 + m * m)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class MomentumAmplitude:
    grid: MomentumGrid
    values: np.ndarray
    mass: float
    frame: BoostParameters | None = None

    def __post_init__(self):
        if self.mass < 0:
            raise ValueError("mass must be non-negative")
        v = np.array(self.values, dtype=complex)
        if v.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} amplitude values, got {v.size}")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("amplitude values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mass", float(self.mass))
        if np.any(self.k0 == 0.0):
            raise ValueError("massless amplitude on a grid containing k = 0")

    @cached_property
    def k0(self) -> np.ndarray:
        return dispersion(self.grid.samples, self.mass)

    def with_values(self, values) -> MomentumAmplitude:
        return MomentumAmplitude(self.grid, values, self.mass, self.frame)

    def mode_coefficients(self) -> np.ndarray:
        """Per-mode weight of the synthesis sum, ``w weight / k0`` (flat)."""
        return self.values.ravel() * self.grid.weights / self.k0


@dataclass(frozen=True, eq=False)
class PositionField:
    """Samples of phi on a spatial tensor grid, all at one coordinate time."""

    axes: tuple
    values: np.ndarray
    time: float
    frame: BoostParameters | None = None

    def __post_init__(self):
        axes = tuple(_as_axis(a) for a in self.axes)
        if len(axes) not in (1, 3):
            raise ValueError("PositionField supports 1D or 3D only")
        shape = tuple(a.size for a in axes)
        v = np.array(self.values, dtype=complex).reshape(shape)
        v.setflags(write=False)
        if not math.isfinite(self.time):
            raise ValueError("field time must be finite")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "time", float(self.time))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @cached_property
    def points(self) -> np.ndarray:
        return _embed3(self.axes)

    @cached_property
    def volume_weights(self) -> np.ndarray:
        """Cell volume per sample (half cells at the edges)."""
        ws = []
        for a in self.axes:
            if a.size == 1:
                ws.append(np.ones(1))
                continue
            mid = 0.5 * (a[1:] + a[:-1])
            edges = np.concatenate([[a[0]], mid, [a[-1]]])
            ws.append(np.diff(edges))
        return _outer_product(ws).ravel()

    def intensity(self) -> np.ndarray:
        return np.abs(self.values.ravel()) ** 2

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.intensity() * self.volume_weights)))


def as_events(events) -> np.ndarray:
    if isinstance(events, FourVector):
        return events.as_array()[None, :]
    if isinstance(events, (list, tuple)) and events and isinstance(events[0], FourVector):
        return np.array([e.as_array() for e in events])
    ev = np.asarray(events, dtype=float)
    return ev.reshape(-1, 4)


def synthesize_events(amp: MomentumAmplitude, events) -> np.ndarray:
    """phi at each row of an ``(E, 4)`` event array, by direct quadrature."""
    ev = as_events(events)
    coeff = amp.mode_coefficients()
    keep = np.flatnonzero(coeff)
    out = np.zeros(ev.shape[0], dtype=complex)
    if keep.size == 0 or ev.shape[0] == 0:
        return out
    c = coeff[keep]
    k = amp.grid.samples[keep]
    k0 = amp.k0[keep]
    block = max(1, _BLOCK_ELEMS // keep.size)
    for s in range(0, ev.shape[0], block):
        e = ev[s:s + block]
        phase = np.multiply.outer(e[:, 0], k0) - e[:, 1:] @ k.T
        out[s:s + block] = np.exp(-1j * phase) @ c
    return out


def synthesize(amp: MomentumAmplitude, event) -> complex | np.ndarray:
    """phi(event). A single FourVector gives a complex, anything else an array."""
    out = synthesize_events(amp, event)
    return complex(out[0]) if isinstance(event, FourVector) else out


def _fft_factors(kax: np.ndarray, xax: np.ndarray):
    n = kax.size
    dk = kax[1] - kax[0]
    pre = np.exp(1j * np.arange(n) * dk * xax[0])
    post = np.exp(1j * kax[0] * xax)
    return pre, post


def _is_conjugate(kaxes, xaxes) -> bool:
    if len(kaxes) != len(xaxes):
        return False
    for k, x in zip(kaxes, xaxes):
        if x.size != k.size or x.size < 2:
            return False
        try:
            dx = _uniform_step(x, "position")
        except ValueError:
            return False
        dk = k[1] - k[0]
        if abs(dk * dx * k.size - TWO_PI) > 1e-10 * TWO_PI:
            return False
    return True


def _broadcast_along(vec: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = vec.size
    return vec.reshape(shape)


def _fft_synthesis(coeff: np.ndarray, kaxes, xaxes) -> np.ndarray:
    """sum_j coeff_j exp(i k_j . x_n) on conjugate tensor grids."""
    nd = len(kaxes)
    work = coeff.astype(complex)
    posts = []
    for ax, (k, x) in enumerate(zip(kaxes, xaxes)):
        pre, post = _fft_factors(k, x)
        work = work * _broadcast_along(pre, ax, nd)
        posts.append(post)
    out = np.fft.ifftn(work) * np.prod(work.shape)
    for ax, post in enumerate(posts):
        out = out * _broadcast_along(post, ax, nd)
    return out


def _fft_analysis(values: np.ndarray, kaxes, xaxes) -> np.ndarray:
    """Inverse of :func:`_fft_synthesis`: coefficients from samples."""
    nd = len(kaxes)
    work = values.astype(complex)
    pres = []
    for ax, (k, x) in enumerate(zip(kaxes, xaxes)):
        pre, post = _fft_factors(k, x)
        work = work * _broadcast_along(np.conj(post), ax, nd)
        pres.append(pre)
    out = np.fft.fftn(work) / np.prod(work.shape)
    for ax, pre in enumerate(pres):
        out = out * _broadcast_along(np.conj(pre), ax, nd)
    return out


def _normalize_axes(spatial, dim: int) -> tuple:
    if isinstance(spatial, np.ndarray) or not isinstance(spatial, (tuple, list)):
        spatial = (spatial,)
    elif spatial and np.ndim(spatial[0]) == 0:
        spatial = (np.asarray(spatial, dtype=float),)
    axes = tuple(_as_axis(a) for a in spatial)
    if len(axes) != dim:
        raise ValueError(f"need {dim} spatial axes for a {dim}D amplitude, got {len(axes)}")
    return axes


def evolve(amp: MomentumAmplitude, t: float, spatial) -> PositionField:
    """Free evolution to time ``t``, sampled on a spatial tensor grid.

    Grids conjugate to the momentum grid go through the FFT; any other grid
    is summed directly. Both give ``synthesize`` pointwise.
    """
    axes = _normalize_axes(spatial, amp.grid.dim)
    t = float(t)
    if _is_conjugate(amp.grid.axes, axes):
        coeff = (amp.mode_coefficients() * np.exp(-1j * amp.k0 * t)).reshape(amp.grid.shape)
        values = _fft_synthesis(coeff, amp.grid.axes, axes)
    else:
        pts = _embed3(axes)
        ev = np.column_stack([np.full(pts.shape[0], t), pts])
        values = synthesize_events(amp, ev)
    return PositionField(axes, values, t, amp.frame)


def momentum_to_position(amp: MomentumAmplitude, t: float = 0.0, center=0.0) -> PositionField:
    return evolve(amp, t, amp.grid.position_axes(center))


def conjugate_grid(axes) -> MomentumGrid:
    kaxes = []
    for x in axes:
        dx = _uniform_step(x, "position")
        n = x.size
        dk = TWO_PI / (n * dx)
        kaxes.append((np.arange(n) - 0.5 * (n - 1)) * dk)
    return MomentumGrid(tuple(kaxes))


def outer_fraction(amp: MomentumAmplitude, fraction: float = 0.10) -> float:
    """Share of the norm carried by the outermost ``fraction`` of each axis."""
    dens = norm_density(amp).reshape(amp.grid.shape)
    total = dens.sum()
    if total == 0:
        return 0.0
    mask = np.zeros(amp.grid.shape, dtype=bool)
    for ax, n in enumerate(amp.grid.shape):
        edge = max(1, int(math.ceil(0.5 * fraction * n)))
        idx = np.arange(n)
        outer = (idx < edge) | (idx >= n - edge)
        mask |= _broadcast_along(outer, ax, amp.grid.dim)
    return float(dens[mask].sum() / total)


def position_to_momentum(field: PositionField, m: float,
                         grid: MomentumGrid | None = None) -> MomentumAmplitude:
    """Invert :func:`evolve` on a uniform spatial grid.

    The Fourier coefficient at ``k`` carries ``exp(-i k0 t) / k0`` relative to
    ``w(k)``; both are stripped here, so feeding the result back through
    ``evolve`` at ``field.time`` on the same axes reproduces the field.

    ``grid`` defaults to the grid conjugate to ``field.axes``. Passing the
    grid the field was synthesised from avoids the last-ulp drift of
    recomputing ``dk`` from ``dx``.
    """
    if grid is None:
        grid = conjugate_grid(field.axes)
    elif not _is_conjugate(grid.axes, field.axes):
        raise ValueError("momentum grid is not conjugate to the field's spatial axes")
    k0 = dispersion(grid.samples, m)
    if np.any(k0 == 0.0):
        raise ValueError("massless inversion on a grid containing k = 0")
    coeff = _fft_analysis(field.values, grid.axes, field.axes).ravel()
    w = coeff * k0 * np.exp(1j * k0 * field.time) / grid.weights
    amp = MomentumAmplitude(grid, w, m, field.frame)
    frac = outer_fraction(amp)
    if frac > 0.01:
        warnings.warn(
            f"{frac:.1%} of the norm sits in the outer 10% of the momentum grid; "
            "the field is probably under-sampled",
            AliasingWarning,
            stacklevel=2,
        )
    return amp


def norm_density(amp: MomentumAmplitude) -> np.ndarray:
    """Per-mode contribution ``|w|^2 weight / (2 k0)`` (flat)."""
    return np.abs(amp.values.ravel()) ** 2 * amp.grid.weights / (2.0 * amp.k0)


def norm(amp: MomentumAmplitude) -> float:
    return float(np.sum(norm_density(amp)))


def mean_momentum(amp: MomentumAmplitude) -> np.ndarray:
    dens = norm_density(amp)
    return dens @ amp.grid.samples / dens.sum()


def group_velocity(amp: MomentumAmplitude) -> np.ndarray:
    """Norm-weighted mean of ``k / k0``."""
    dens = norm_density(amp)
    return dens @ (amp.grid.samples / amp.k0[:, None]) / dens.sum()


def _center3(center_k, dim: int) -> np.ndarray:
    c = np.atleast_1d(np.asarray(center_k, dtype=float))
    if c.size == 1:
        c = np.array([c[0], 0.0, 0.0])
    if c.size != 3:
        raise ValueError("center_k must be a scalar or a 3-vector")
    if dim == 1 and np.any(c[1:] != 0.0):
        raise ValueError("1D grids only carry momentum along x")
    return c


def gaussian_packet(center_k, sigma_k: float, m: float, grid: MomentumGrid,
                    frame: BoostParameters | None = None) -> MomentumAmplitude:
    """``w(k) ~ exp(-|k - center|^2 / (4 sigma^2))`` scaled to unit norm.

    Rejects grids that cut off more than 1e-6 of the Gaussian mass
    (a span of ``center +/- 6 sigma`` is comfortably inside that).
    """
    if sigma_k <= 0:
        raise ValueError("sigma_k must be positive")
    c = _center3(center_k, grid.dim)
    inside = 1.0
    for (lo, hi), c_i in zip(grid.bounds, c):
        inside *= ndtr((hi - c_i) / sigma_k) - ndtr((lo - c_i) / sigma_k)
    if 1.0 - inside > 1e-6:
        raise ValueError(
            f"grid truncates {1.0 - inside:.3g} of the Gaussian mass (limit 1e-6); widen the grid")
    d2 = np.sum((grid.samples - c) ** 2, axis=1)
    amp = MomentumAmplitude(grid, np.exp(-d2 / (4.0 * sigma_k ** 2)), m, frame)
    return amp.with_values(amp.values / math.sqrt(norm(amp)))


def default_grid(center_k, sigma_k: float, n: int = 4096, dim: int = 1,
                 span_sigmas: float = 8.0) -> MomentumGrid:
    c = _center3(center_k, dim)
    k_max = float(np.max(np.abs(c[:dim]))) + span_sigmas * sigma_k
    return MomentumGrid.uniform(n, k_max, dim)


def packet_extent(field: PositionField, axis=(1.0, 0.0, 0.0), threshold: float = 1e-6) -> tuple[float, float]:
    """Range of ``x . axis`` over samples with intensity above ``threshold * max``."""
    inten = field.intensity()
    if inten.max() == 0:
        raise ValueError("field is identically zero")
    proj = field.points[inten >= threshold * inten.max()] @ np.asarray(axis, dtype=float)
    return float(proj.min()), float(proj.max())


def _write_rows(fh, coord_names, coords: np.ndarray, values: np.ndarray):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["index", *coord_names, "re", "im"])
    for i, (pt, v) in enumerate(zip(coords, values)):
        w.writerow([i, *(repr(float(c)) for c in pt), repr(float(v.real)), repr(float(v.imag))])


def write_amplitude_csv(amp: MomentumAmplitude, fh) -> None:
    names = ["kx"] if amp.grid.dim == 1 else ["kx", "ky", "kz"]
    _write_rows(fh, names, amp.grid.samples[:, :amp.grid.dim], amp.values.ravel())


def write_field_csv(field: PositionField, fh) -> None:
    dim = len(field.axes)
    names = ["x"] if dim == 1 else ["x", "y", "z"]
    _write_rows(fh, names, field.points[:, :dim], field.values.ravel())
