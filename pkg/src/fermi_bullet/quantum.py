"""Matter-wave propagation over the modulated mirror by operator splitting.

The wave function obeys, in scaled units,

    i k̄ ∂ψ/∂t = ( p²/2 + z + V0 exp(-κ (z - λ sin t)) ) ψ

on a uniform z grid with periodic spectral derivatives. One Strang step of
size dt applies

    exp(-i V(z, t+dt/2) dt / 2k̄) · F⁻¹ exp(-i k̄ k² dt / 2) F · exp(-i V(z, t+dt/2) dt / 2k̄)

with the time-dependent potential frozen at the midpoint of the step. All
three factors are diagonal unitary phases in their own bases, so the discrete
norm is conserved to rounding error in reflecting mode.

The momentum grid uses p = k̄ k with k the FFT wave numbers, so the
commutator [z, p] = i k̄ is represented exactly up to the grid cutoff
|p| < π k̄ / dz.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .classical import EXP_ARG_MAX, mirror_exponential
from .errors import (
    GridTooSmallError,
    InvalidParameterError,
    LeakageAbortError,
    NumericalFailureError,
)
from .model import DimensionlessParams
from .observables import ObservableSeries, Raster, block_average

# Mirror phases smaller than this per step are dropped (the exponential tail
# of the mirror term is identically 1 to double precision there).
PHASE_EPS = 1e-18


@dataclass(frozen=True)
class GridSpec:
    """Uniform position grid; n must be a power of two for the FFT."""

    z_min: float
    z_max: float
    n: int

    def __post_init__(self):
        if not (self.z_min < self.z_max):
            raise InvalidParameterError("grid needs z_min < z_max")
        if self.n < 2 or self.n & (self.n - 1) != 0:
            raise InvalidParameterError(f"grid size must be a power of two >= 2, got {self.n}")

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / self.n

    @cached_property
    def z_grid(self) -> np.ndarray:
        return self.z_min + self.dz * np.arange(self.n)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * math.pi * np.fft.fftfreq(self.n, d=self.dz)

    def momentum_grid(self, kbar: float) -> np.ndarray:
        """p_j = k̄ k_j in FFT order; max representable |p| is π k̄ / dz."""
        return kbar * self.wavenumbers


@dataclass
class GridState:
    """Complex amplitudes ψ(z_i) with their grid, time, and physics parameters."""

    spec: GridSpec
    psi: np.ndarray
    t: float
    params: DimensionlessParams

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.psi.shape != (self.spec.n,):
            raise InvalidParameterError("psi length does not match the grid")

    def norm(self) -> float:
        return float((np.abs(self.psi) ** 2).sum() * self.spec.dz)

    def mean_z(self) -> float:
        w = np.abs(self.psi) ** 2
        return float(np.dot(w, self.spec.z_grid) / w.sum())

    def copy(self) -> "GridState":
        return GridState(spec=self.spec, psi=self.psi.copy(), t=self.t, params=self.params)


@dataclass(frozen=True)
class PropagatorConfig:
    """Numerical controls for split-operator propagation.

    boundary "reflecting" uses the bare periodic grid (the mirror and the
    leak monitor keep the packet away from the edges); "absorber" adds a
    cosine amplitude ramp over the outer absorber_width of the grid, for
    diagnostics only.
    """

    dt: float = 2.0 * math.pi / 2000.0
    boundary: str = "reflecting"
    absorber_width: float = 0.1
    leak_threshold: float = 1.0e-3
    norm_tol: float = 1.0e-6
    edge_fraction: float = 0.05
    # The mirror term saturates here. Far above every reachable energy, so
    # reflection physics is untouched, but the saturation stops the spurious
    # sub-barrier cascade that wrapped phase gradients generate at finite dt.
    potential_cap: float = 1.0e6

    def __post_init__(self):
        if self.dt <= 0.0:
            raise InvalidParameterError("dt must be positive")
        if self.boundary not in ("reflecting", "absorber"):
            raise InvalidParameterError(f"unknown boundary {self.boundary!r}")
        if not (0.0 < self.absorber_width < 0.5):
            raise InvalidParameterError("absorber_width must lie in (0, 0.5)")
        if self.potential_cap <= 0.0:
            raise InvalidParameterError("potential_cap must be positive")


def potential(z, t, params: DimensionlessParams):
    """Scaled potential z + V0 exp(-κ (z - λ sin t)), overflow-guarded."""
    return z + params.v0 * mirror_exponential(z, t, params)


def capped_potential(z, t, params: DimensionlessParams, cap: float):
    """The propagation potential: the mirror term saturates at cap."""
    return z + np.minimum(params.v0 * mirror_exponential(z, t, params), cap)


def init_gaussian(spec: GridSpec, z0: float, p0: float, delta_z: float,
                  params: DimensionlessParams, t0: float = 0.0) -> GridState:
    """Minimum-uncertainty Gaussian: σ_z = delta_z, σ_p = k̄/(2 delta_z).

    ψ(z) ∝ exp(-(z - z0)²/(4 Δz²) + i p0 z / k̄), normalized on the grid.
    Requires 5 Δz clearance from both edges and Δz > 2 dz.
    """
    if delta_z <= 2.0 * spec.dz:
        raise GridTooSmallError(
            f"packet width {delta_z:.4g} must exceed two grid spacings ({2 * spec.dz:.4g})")
    if z0 - 5.0 * delta_z < spec.z_min or z0 + 5.0 * delta_z > spec.z_max:
        raise GridTooSmallError(
            f"packet at z0={z0:.4g} with width {delta_z:.4g} needs 5σ clearance "
            f"inside [{spec.z_min:.4g}, {spec.z_max:.4g}]")
    z = spec.z_grid
    psi = np.exp(-((z - z0) ** 2) / (4.0 * delta_z**2) + 1j * p0 * z / params.kbar)
    psi /= math.sqrt(float((np.abs(psi) ** 2).sum()) * spec.dz)
    return GridState(spec=spec, psi=psi, t=t0, params=params)


def absorber_mask(spec: GridSpec, width: float) -> np.ndarray:
    """Cosine amplitude ramp from 1 (interior) to 0 (grid edges)."""
    n_ramp = max(1, int(round(width * spec.n)))
    mask = np.ones(spec.n)
    ramp = np.cos(0.5 * math.pi * np.linspace(1.0, 0.0, n_ramp))
    mask[:n_ramp] = ramp
    mask[-n_ramp:] = ramp[::-1]
    return mask


class _StepPlan:
    """Precomputed diagonal phases for repeated Strang steps of one size.

    The potential splits as z + V0 c(t) B(z) with c(t) = exp(κ λ sin t) and
    B(z) = exp(-κ z); only the gravity part spans the whole grid, while the
    mirror part acts on the window where its per-step phase exceeds
    PHASE_EPS. The per-step mirror phase therefore costs one small exp.
    """

    def __init__(self, spec: GridSpec, params: DimensionlessParams, dt: float,
                 potential_cap: float = math.inf):
        self.dt = dt
        self.params = params
        kbar = params.kbar
        k = spec.wavenumbers
        self.kinetic = np.exp(-0.5j * kbar * k * k * dt)
        z = spec.z_grid
        self.gravity_half = np.exp(-0.5j * z * dt / kbar)
        self.gravity_full = self.gravity_half * self.gravity_half
        self.coef = 0.5 * dt * params.v0 / kbar
        self.half_cap = 0.5 * dt * potential_cap / kbar
        if params.v0 > 0.0:
            # c(t) <= exp(κλ); keep B c below exp(EXP_ARG_MAX) jointly
            b_arg = np.minimum(-params.kappa * z, EXP_ARG_MAX - params.kappa * params.lam)
            gamma_max = 2.0 * self.coef * math.exp(params.kappa * params.lam)
            cut = (math.log(gamma_max) - math.log(PHASE_EPS)) / params.kappa
            hi = min(int(np.searchsorted(z, cut, side="right")), spec.n)
            self.win = slice(0, hi)
            self.mirror_b = np.exp(b_arg[self.win])
        else:
            self.win = slice(0, 0)
            self.mirror_b = np.zeros(0)

    def c_of(self, t: float) -> float:
        return math.exp(self.params.kappa * self.params.lam * math.sin(t))

    def apply_mirror(self, psi: np.ndarray, c_sum: float, halves: int) -> None:
        if self.mirror_b.size:
            theta = (self.coef * c_sum) * self.mirror_b
            if math.isfinite(self.half_cap):
                np.minimum(theta, halves * self.half_cap, out=theta)
            psi[self.win] *= np.exp(-1j * theta)


def _run_block(psi: np.ndarray, t0: float, n_steps: int, plan: _StepPlan) -> np.ndarray:
    """n_steps Strang steps; interior half-phases of adjacent steps are fused."""
    dt = plan.dt
    c0 = plan.c_of(t0 + 0.5 * dt)
    psi *= plan.gravity_half
    plan.apply_mirror(psi, c0, 1)
    for j in range(1, n_steps + 1):
        np.fft.fft(psi, out=psi)
        psi *= plan.kinetic
        np.fft.ifft(psi, out=psi)
        if j < n_steps:
            c1 = plan.c_of(t0 + j * dt + 0.5 * dt)
            psi *= plan.gravity_full
            plan.apply_mirror(psi, c0 + c1, 2)
            c0 = c1
    psi *= plan.gravity_half
    plan.apply_mirror(psi, c0, 1)
    return psi


def split_step(state: GridState, cfg: PropagatorConfig) -> GridState:
    """One Strang step of cfg.dt; returns the advanced state.

    Reflecting mode raises on per-step norm drift beyond cfg.norm_tol;
    absorber mode damps the grid edges instead.
    """
    dt = cfg.dt
    v_mid = capped_potential(state.spec.z_grid, state.t + 0.5 * dt, state.params,
                             cfg.potential_cap)
    _warn_phase_wrap(state, v_mid, dt)
    half = np.exp(-0.5j * v_mid * dt / state.params.kbar)
    kinetic = np.exp(-0.5j * state.params.kbar * state.spec.wavenumbers**2 * dt)
    norm_before = state.norm()
    psi = half * state.psi
    psi = np.fft.ifft(kinetic * np.fft.fft(psi))
    psi *= half
    out = GridState(spec=state.spec, psi=psi, t=state.t + dt, params=state.params)
    if cfg.boundary == "absorber":
        out.psi *= absorber_mask(state.spec, cfg.absorber_width)
    elif abs(out.norm() - norm_before) > cfg.norm_tol:
        raise NumericalFailureError(
            f"norm drifted by {abs(out.norm() - norm_before):.3e} in one step at t={state.t:.6g}")
    return out


def _warn_phase_wrap(state: GridState, v_mid: np.ndarray, dt: float) -> bool:
    """Warn when the potential phase advances close to a full wrap per step.

    Checked over the physical region (above the mirror floor) and ignoring
    the most extreme 1e-9 of probability, since the evanescent tail always
    wraps at values of V where ψ is numerically zero.
    """
    start = 0
    if state.params.v0 > 0.0:
        start = int(np.searchsorted(state.spec.z_grid, mirror_floor(state.params)))
    w = np.abs(state.psi[start:]) ** 2
    total = w.sum()
    if total <= 0.0:
        return False
    w = w / total
    v_abs = np.abs(v_mid[start:])
    order = np.argsort(v_abs)[::-1]
    covered = np.cumsum(w[order])
    first = int(np.searchsorted(covered, 1e-9))
    v_eff = float(v_abs[order[min(first, v_abs.size - 1)]])
    if dt * v_eff > math.pi * state.params.kbar:
        warnings.warn(
            f"potential phase per step {dt * v_eff / state.params.kbar:.3g} rad exceeds pi; "
            "decrease dt", stacklevel=3)
        return True
    return False


@dataclass
class Recorder:
    """Cadence and storage for observables along a propagation.

    record_every/snapshot_every count steps; snapshots hold the position
    density, optionally block-averaged to keep long runs small.
    """

    record_every: int = 100
    snapshot_every: int | None = None
    snapshot_downsample: int = 1
    snapshot_times: list[float] = field(default_factory=list)
    snapshot_density: list[np.ndarray] = field(default_factory=list)
    snapshot_z: np.ndarray | None = None

    def take_snapshot(self, t: float, psi: np.ndarray, spec: GridSpec) -> None:
        if self.snapshot_z is None:
            self.snapshot_z = block_average(spec.z_grid, self.snapshot_downsample)
        self.snapshot_times.append(t)
        self.snapshot_density.append(block_average(np.abs(psi) ** 2, self.snapshot_downsample))

    def raster(self) -> Raster:
        if not self.snapshot_times:
            raise InvalidParameterError("recorder holds no snapshots")
        return Raster(t_axis=np.asarray(self.snapshot_times), z_axis=self.snapshot_z,
                      values=np.column_stack(self.snapshot_density))


def mirror_floor(params: DimensionlessParams) -> float:
    """Depth below which the mirror suppresses the wave function to ~1e-12.

    WKB estimate for the exponential barrier: the density under the wall has
    dropped to eps once V reaches (κ k̄ ln(1/eps) / 4)² / 2, and the wall
    bottoms out at z = -λ.
    """
    v_dead = 0.5 * (params.kappa * params.kbar * (12 * math.log(10.0)) / 4.0) ** 2
    if v_dead <= params.v0:
        return -params.lam
    return -params.lam - math.log(v_dead / params.v0) / params.kappa


def _edge_leak(psi: np.ndarray, spec: GridSpec, params: DimensionlessParams,
               edge_fraction: float) -> float:
    """Probability in the outer edge_fraction of the grid, per side.

    With a mirror present the lower band stops at the mirror floor: the wave
    function is evanescent there, so probability closer to z_min than that
    signals wrap-around, while the working mirror region never counts as
    leakage.
    """
    n_edge = max(1, int(edge_fraction * psi.size))
    lo_hi = n_edge
    if params.v0 > 0.0:
        lo_hi = min(n_edge, int(np.searchsorted(spec.z_grid, mirror_floor(params))))
    w = np.abs(psi) ** 2
    bottom = w[:lo_hi].sum() if lo_hi > 0 else 0.0
    return float((bottom + w[-n_edge:].sum()) * spec.dz)


def propagate(state: GridState, cfg: PropagatorConfig, t_final: float,
              recorder: Recorder | None = None) -> tuple[GridState, ObservableSeries]:
    """Split-step propagation to t_final with recorded observables.

    Equivalent to repeated split_step at cfg.dt (plus one shorter final step
    when t_final is not a multiple of dt), but with the interior half-phases
    fused. Reflecting mode aborts when the probability within the outer
    edge_fraction of the grid exceeds cfg.leak_threshold.
    """
    if t_final < state.t - 1e-12:
        raise InvalidParameterError("t_final precedes the state's time")
    if recorder is None:
        recorder = Recorder()
    spec, params = state.spec, state.params
    dz = spec.dz
    z = spec.z_grid
    p = spec.momentum_grid(params.kbar)
    cols: dict[str, list[float]] = {k: [] for k in ("norm", "mean_z", "mean_p", "var_p", "edge_leak")}
    if cfg.boundary == "absorber":
        cols["absorbed"] = []
    times: list[float] = []
    absorbed_total = 0.0
    warned = False

    def record(t: float, psi: np.ndarray) -> None:
        w = np.abs(psi) ** 2
        total = float(w.sum())
        norm = total * dz
        wk = np.abs(np.fft.fft(psi)) ** 2
        wk_total = wk.sum()
        mp = float(np.dot(wk, p) / wk_total)
        vp = float(np.dot(wk, (p - mp) ** 2) / wk_total)
        times.append(t)
        cols["norm"].append(norm)
        cols["mean_z"].append(float(np.dot(w, z) / total))
        cols["mean_p"].append(mp)
        cols["var_p"].append(vp)
        cols["edge_leak"].append(_edge_leak(psi, spec, params, cfg.edge_fraction))
        if cfg.boundary == "absorber":
            cols["absorbed"].append(absorbed_total)

    psi = state.psi.copy()
    t0 = state.t
    record(t0, psi)
    if recorder.snapshot_every is not None:
        recorder.take_snapshot(t0, psi, spec)

    span = t_final - t0
    n_full = int(math.floor(span / cfg.dt + 1e-9))
    remainder = span - n_full * cfg.dt
    if remainder < 1e-9 * cfg.dt:
        remainder = 0.0

    if n_full == 0 and remainder == 0.0:
        out = GridState(spec=spec, psi=psi, t=state.t, params=params)
        return out, ObservableSeries(times=np.asarray(times),
                                     columns={k: np.asarray(v) for k, v in cols.items()})

    events = {n_full}
    events.update(range(recorder.record_every, n_full + 1, recorder.record_every))
    if recorder.snapshot_every is not None:
        events.update(range(recorder.snapshot_every, n_full + 1, recorder.snapshot_every))
    boundaries = sorted(e for e in events if e > 0)

    plan = _StepPlan(spec, params, cfg.dt, cfg.potential_cap)
    mask = absorber_mask(spec, cfg.absorber_width) if cfg.boundary == "absorber" else None
    norm_prev = cols["norm"][0]

    def check_and_log(step: int, n_seg: int) -> None:
        nonlocal norm_prev, absorbed_total, warned
        t = t0 + step * cfg.dt if step <= n_full else t_final
        if mask is None:
            norm_now = float((np.abs(psi) ** 2).sum()) * dz
            if abs(norm_now - norm_prev) > cfg.norm_tol * n_seg:
                raise NumericalFailureError(
                    f"norm drifted by {abs(norm_now - norm_prev):.3e} over {n_seg} steps "
                    f"ending at t={t:.6g}")
            norm_prev = norm_now
            leak = _edge_leak(psi, spec, params, cfg.edge_fraction)
            if leak > cfg.leak_threshold:
                raise LeakageAbortError(
                    f"edge probability {leak:.3e} exceeds {cfg.leak_threshold:.3e} "
                    f"at t={t:.6g}; enlarge the grid")
        if not warned:
            v_now = capped_potential(z, t, params, cfg.potential_cap)
            probe = GridState(spec=spec, psi=psi, t=t, params=params)
            warned = _warn_phase_wrap(probe, v_now, cfg.dt)

    prev = 0
    for boundary in boundaries:
        seg = boundary - prev
        if seg > 0:
            if mask is None:
                psi = _run_block(psi, t0 + prev * cfg.dt, seg, plan)
            else:
                for j in range(seg):
                    before = float((np.abs(psi) ** 2).sum()) * dz
                    psi = _run_block(psi, t0 + (prev + j) * cfg.dt, 1, plan)
                    psi *= mask
                    absorbed_total += before - float((np.abs(psi) ** 2).sum()) * dz
        prev = boundary
        check_and_log(boundary, max(seg, 1))
        t_here = t0 + boundary * cfg.dt
        if boundary % recorder.record_every == 0 or (boundary == n_full and remainder == 0.0):
            record(t_here, psi)
        if recorder.snapshot_every is not None and boundary % recorder.snapshot_every == 0:
            recorder.take_snapshot(t_here, psi, spec)

    if remainder > 0.0:
        tail_plan = _StepPlan(spec, params, remainder, cfg.potential_cap)
        before = float((np.abs(psi) ** 2).sum()) * dz
        psi = _run_block(psi, t0 + n_full * cfg.dt, 1, tail_plan)
        if mask is not None:
            psi *= mask
            absorbed_total += before - float((np.abs(psi) ** 2).sum()) * dz
        check_and_log(n_full + 1, 1)
        record(t_final, psi)
        if recorder.snapshot_every is not None:
            recorder.take_snapshot(t_final, psi, spec)

    out = GridState(spec=spec, psi=psi, t=t_final, params=params)
    series = ObservableSeries(times=np.asarray(times),
                              columns={k: np.asarray(v) for k, v in cols.items()})
    return out, series
