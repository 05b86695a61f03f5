"""Diagnostics shared by the classical and quantum solvers.

Marginal probability distributions, momentum variance, spike detection in
momentum space, growth/saturation metrics for time series, and space-time
rasters of the position density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError


@dataclass
class ObservableSeries:
    """Time-stamped scalar records; columns share the times axis."""

    times: np.ndarray
    columns: dict[str, np.ndarray]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.times.size == 0:
            raise InvalidParameterError("series needs a non-empty 1-d time axis")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise InvalidParameterError("series times must be strictly increasing")
        for name, col in self.columns.items():
            col = np.asarray(col, dtype=float)
            if col.shape != self.times.shape:
                raise InvalidParameterError(f"column {name!r} length does not match times")
            self.columns[name] = col

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise InvalidParameterError(f"series has no column {name!r}") from None

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    @property
    def span(self) -> float:
        return float(self.times[-1] - self.times[0])


@dataclass
class Marginal:
    """Probability density along one axis at a fixed time."""

    axis: str  # "position" | "momentum"
    bin_centers: np.ndarray
    density: np.ndarray
    t: float

    def __post_init__(self):
        if self.axis not in ("position", "momentum"):
            raise InvalidParameterError(f"unknown marginal axis {self.axis!r}")
        self.bin_centers = np.asarray(self.bin_centers, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        if self.bin_centers.shape != self.density.shape:
            raise InvalidParameterError("marginal bins and density must match")

    @property
    def bin_width(self) -> float:
        return float(self.bin_centers[1] - self.bin_centers[0])

    def total(self) -> float:
        return float(self.density.sum() * self.bin_width)

    def moments(self) -> tuple[float, float]:
        """(mean, variance) of the density."""
        w = self.density / self.density.sum()
        mean = float(np.dot(w, self.bin_centers))
        var = float(np.dot(w, (self.bin_centers - mean) ** 2))
        return mean, var


@dataclass
class Raster:
    """Position density over time: values[i, j] = P(z_axis[i], t_axis[j])."""

    t_axis: np.ndarray
    z_axis: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.t_axis = np.asarray(self.t_axis, dtype=float)
        self.z_axis = np.asarray(self.z_axis, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.z_axis.size, self.t_axis.size):
            raise InvalidParameterError("raster shape does not match its axes")


@dataclass(frozen=True)
class Peak:
    location: float
    height: float
    background_ratio: float


@dataclass
class SpikeReport:
    peaks: list[Peak] = field(default_factory=list)
    background_level: float = 0.0

    def __len__(self) -> int:
        return len(self.peaks)


@dataclass(frozen=True)
class SaturationMetric:
    slope_early: float
    slope_late: float
    ratio: float
    floored: bool


def position_marginal(state) -> Marginal:
    """|ψ(z)|² as a density in z."""
    density = np.abs(state.psi) ** 2
    density = density / (density.sum() * state.spec.dz)
    return Marginal(axis="position", bin_centers=state.spec.z_grid, density=density, t=state.t)


def momentum_marginal(state) -> Marginal:
    """|ψ̃(p)|² on the p grid (p = k̄ k), normalized as a density in p."""
    phi = np.fft.fftshift(np.fft.fft(state.psi))
    p = np.fft.fftshift(state.spec.momentum_grid(state.params.kbar))
    density = np.abs(phi) ** 2
    dp = p[1] - p[0]
    density = density / (density.sum() * dp)
    return Marginal(axis="momentum", bin_centers=p, density=density, t=state.t)


def _momentum_moments(state) -> tuple[float, float]:
    w = np.abs(np.fft.fft(state.psi)) ** 2
    w = w / w.sum()
    p = state.spec.momentum_grid(state.params.kbar)
    mean = float(np.dot(w, p))
    var = float(np.dot(w, (p - mean) ** 2))
    return mean, var


def variance_p(obj) -> float:
    """Δp² = ⟨p²⟩ - ⟨p⟩² of a quantum state (momentum basis) or a classical ensemble."""
    if hasattr(obj, "psi"):
        return _momentum_moments(obj)[1]
    if hasattr(obj, "p"):
        return float(np.var(np.asarray(obj.p, dtype=float)))
    raise InvalidParameterError(f"cannot compute momentum variance of {type(obj).__name__}")


def mean_p(obj) -> float:
    if hasattr(obj, "psi"):
        return _momentum_moments(obj)[0]
    if hasattr(obj, "p"):
        return float(np.mean(np.asarray(obj.p, dtype=float)))
    raise InvalidParameterError(f"cannot compute mean momentum of {type(obj).__name__}")


# The support of a distribution is the smallest set of bins holding this
# share of the probability; the rest is numerical floor, not background.
SUPPORT_COVERAGE = 1.0 - 1e-6


def _support_mask(density: np.ndarray) -> np.ndarray:
    order = np.argsort(density)[::-1]
    covered = np.cumsum(density[order])
    cutoff = int(np.searchsorted(covered, SUPPORT_COVERAGE * covered[-1])) + 1
    mask = np.zeros(density.shape, dtype=bool)
    mask[order[:cutoff]] = True
    return mask


def detect_spikes(marginal: Marginal, threshold_ratio: float = 5.0,
                  min_separation: int | None = None) -> SpikeReport:
    """Local maxima rising threshold_ratio above the median of the support.

    The support covers all but a e-6 sliver of the probability, so grid-level
    noise floors do not drag the background level down. Candidates are pruned
    greedily, tallest first, enforcing min_separation bins between reported
    peaks. Deterministic; invariant under uniform density rescaling.
    """
    if threshold_ratio <= 1.0:
        raise InvalidParameterError("threshold_ratio must exceed 1")
    d = marginal.density
    n = d.size
    if min_separation is None:
        min_separation = max(1, math.ceil(n / 256))
    peak_max = d.max() if n else 0.0
    if peak_max <= 0.0:
        return SpikeReport(peaks=[], background_level=0.0)
    support = _support_mask(d)
    background = float(np.median(d[support]))

    interior = np.arange(1, n - 1)
    is_max = (d[interior] > d[interior - 1]) & (d[interior] >= d[interior + 1])
    candidates = interior[is_max & (d[interior] >= threshold_ratio * background)]
    # tallest first; index order breaks ties so the result is reproducible
    order = np.lexsort((candidates, -d[candidates]))
    accepted: list[int] = []
    for i in candidates[order]:
        if all(abs(i - j) >= min_separation for j in accepted):
            accepted.append(int(i))
    accepted.sort()
    peaks = [Peak(location=float(marginal.bin_centers[i]), height=float(d[i]),
                  background_ratio=float(d[i] / background)) for i in accepted]
    return SpikeReport(peaks=peaks, background_level=background)


# A series must cover at least this many modulation periods (2π each) before
# early/late slopes are meaningful.
MIN_SATURATION_PERIODS = 4


def saturation_metric(series: ObservableSeries, column: str) -> SaturationMetric:
    """Least-squares slope of the column over the first and second half of the span.

    saturation_ratio = slope_late / slope_early; an early slope at the noise
    floor is clamped (and flagged) to keep the ratio finite.
    """
    t = series.times
    y = series.column(column)
    if series.span < MIN_SATURATION_PERIODS * 2.0 * math.pi:
        raise InvalidParameterError(
            f"series spans {series.span:.3g}, need >= {MIN_SATURATION_PERIODS} modulation periods")
    mid = 0.5 * (t[0] + t[-1])
    early = t <= mid
    late = t >= mid
    if early.sum() < 2 or late.sum() < 2:
        raise InvalidParameterError("need at least two samples in each half of the series")
    slope_early = float(np.polyfit(t[early], y[early], 1)[0])
    slope_late = float(np.polyfit(t[late], y[late], 1)[0])
    scale = max(1.0, float(np.max(np.abs(y))) / max(series.span, 1.0))
    eps = 1e-12 * scale
    floored = abs(slope_early) < eps
    denom = math.copysign(eps, slope_early if slope_early != 0.0 else 1.0) if floored else slope_early
    return SaturationMetric(slope_early=slope_early, slope_late=slope_late,
                            ratio=slope_late / denom, floored=floored)


def block_average(density: np.ndarray, factor: int) -> np.ndarray:
    """Downsample a density by block means; preserves the integral exactly."""
    if factor == 1:
        return np.asarray(density, dtype=float)
    n = density.size
    if n % factor != 0:
        raise InvalidParameterError(f"grid size {n} not divisible by downsample factor {factor}")
    return np.asarray(density, dtype=float).reshape(n // factor, factor).mean(axis=1)


def position_raster(states, downsample: int = 1) -> Raster:
    """Stack |ψ(z)|² snapshots into a space-time raster.

    Snapshots must share one grid and be equally spaced in time; the optional
    block-average downsampling preserves each column's total probability.
    """
    states = list(states)
    if not states:
        raise InvalidParameterError("need at least one snapshot")
    spec = states[0].spec
    for s in states[1:]:
        if s.spec != spec:
            raise InvalidParameterError("snapshots use inconsistent grids")
    times = np.array([s.t for s in states])
    if times.size > 2:
        gaps = np.diff(times)
        if not np.allclose(gaps, gaps[0], rtol=1e-9, atol=1e-12):
            raise InvalidParameterError("snapshots must be equally spaced in time")
    z_axis = block_average(spec.z_grid, downsample)
    cols = [block_average(np.abs(s.psi) ** 2 / (np.abs(s.psi) ** 2).sum() / spec.dz, downsample)
            for s in states]
    return Raster(t_axis=times, z_axis=z_axis, values=np.column_stack(cols))


def raster_ridge(raster: Raster) -> np.ndarray:
    """z location of the densest cell in each time column."""
    return raster.z_axis[np.argmax(raster.values, axis=0)]


def raster_front(raster: Raster, tail_mass: float = 3e-3) -> np.ndarray:
    """Upper front per column: the z below which all but tail_mass of the
    column's probability lies.

    A quantile of the density, so it tracks the leading (accelerated) portion
    of the packet stably even when most of the probability stays in the
    stochastic background near the mirror.
    """
    if not (0.0 < tail_mass < 1.0):
        raise InvalidParameterError("tail_mass must lie in (0, 1)")
    bin_w = float(raster.z_axis[1] - raster.z_axis[0]) if raster.z_axis.size > 1 else 1.0
    front = np.empty(raster.t_axis.size)
    z_desc = raster.z_axis[::-1]
    for j in range(raster.t_axis.size):
        from_top = np.cumsum(raster.values[::-1, j]) * bin_w
        k = int(np.searchsorted(from_top, tail_mass))
        front[j] = z_desc[min(k, z_desc.size - 1)]
    return front


def track_apexes(track: np.ndarray, min_drop: float) -> list[float]:
    """Turning-point heights of a flight track, one per bounce.

    Splits the track at its significant minima (wall contacts) using a
    hysteresis of min_drop: a new flight starts once the track has fallen and
    risen again by more than min_drop. Returns the maximum per flight.
    """
    if min_drop <= 0.0:
        raise InvalidParameterError("min_drop must be positive")
    apexes: list[float] = []
    cur_max = float(track[0])
    cur_min = float(track[0])
    falling = False
    for v in np.asarray(track, dtype=float)[1:]:
        if not falling:
            if v > cur_max:
                cur_max = v
            elif cur_max - v > min_drop:
                falling = True
                cur_min = v
        else:
            if v < cur_min:
                cur_min = v
            elif v - cur_min > min_drop:
                apexes.append(cur_max)
                cur_max = v
                falling = False
    apexes.append(cur_max)
    return apexes
