"""Classical Fermi-accelerator dynamics: trajectories and ensembles.

A particle falls under unit gravity onto an exponential mirror whose surface
is modulated as λ sin t. The phase-space density obeys a Liouville equation;
it is evolved here by characteristics, i.e. bundles of independent
trajectories. Two integration modes:

  soft  symplectic leapfrog (kick-drift-kick) in the smooth force
        ṗ = -1 + κ V0 exp(-κ (z - λ sin t))
  hard  event-driven free flight with elastic reflection off the moving
        surface z_w(t) = λ sin t, p' = -p + 2 λ cos(t_impact)

All kernels are vectorized over trajectory arrays; the PhasePoint API wraps
the n = 1 case.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ChatteringError,
    IntegrationDivergedError,
    InvalidParameterError,
)
from .model import DimensionlessParams
from .observables import ObservableSeries

# exp() saturates at this argument; larger values mean the point is in a
# region the dynamics cannot legitimately reach (configuration error).
EXP_ARG_MAX = 700.0
DEFAULT_FORCE_CAP = 1.0e6

# Trajectory status codes used by the ensemble kernels.
STATUS_OK = 0
STATUS_DIVERGED = 1
STATUS_CHATTERING = 2


def wall_position(t, lam):
    return lam * np.sin(t)


def wall_velocity(t, lam):
    return lam * np.cos(t)


def mirror_exponential(z, t, params: DimensionlessParams):
    """exp(-κ (z - λ sin t)) with the argument saturated at EXP_ARG_MAX."""
    arg = -params.kappa * (z - params.lam * np.sin(t))
    return np.exp(np.minimum(arg, EXP_ARG_MAX))


def exp_overflow(z, t, params: DimensionlessParams):
    """True where the mirror exponential had to be saturated (diagnostic flag)."""
    return -params.kappa * (z - params.lam * np.sin(t)) > EXP_ARG_MAX


def classical_force(z, t, params: DimensionlessParams, force_cap: float = DEFAULT_FORCE_CAP):
    """Effective force -1 + κ V0 exp(-κ (z - λ sin t)), saturated at force_cap."""
    f = -1.0 + params.kappa * params.v0 * mirror_exponential(z, t, params)
    return np.minimum(f, force_cap)


@dataclass(frozen=True)
class PhasePoint:
    z: float
    p: float
    t: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.z, self.p, self.t)):
            raise InvalidParameterError(f"non-finite phase point ({self.z}, {self.p}, {self.t})")


@dataclass(frozen=True)
class InitialDescriptor:
    """Sampling region for an initial ensemble.

    Gaussian: σ_z = dz, σ_p = dp around (z0, p0), matching a quantum
    minimum-uncertainty packet. Uniform: a flat patch z0 ± dz, p0 ± dp.
    Zero widths collapse to a point.
    """

    z0: float
    p0: float
    dz: float = 0.0
    dp: float = 0.0
    shape: str = "gaussian"

    def __post_init__(self):
        if self.shape not in ("gaussian", "uniform"):
            raise InvalidParameterError(f"unknown ensemble shape {self.shape!r}")
        if self.dz < 0.0 or self.dp < 0.0:
            raise InvalidParameterError("ensemble widths must be >= 0")


@dataclass
class Ensemble:
    """Trajectory bundle stored as coordinate arrays sharing one time."""

    z: np.ndarray
    p: np.ndarray
    t: float
    rng_seed: int
    descriptor: InitialDescriptor | None = None

    def __post_init__(self):
        self.z = np.atleast_1d(np.asarray(self.z, dtype=float))
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if self.z.shape != self.p.shape or self.z.size == 0:
            raise InvalidParameterError("ensemble needs matching, non-empty z and p arrays")

    def __len__(self) -> int:
        return self.z.size

    def as_points(self) -> list[PhasePoint]:
        return [PhasePoint(z, p, self.t) for z, p in zip(self.z, self.p)]


@dataclass(frozen=True)
class IntegratorConfig:
    """Numerical controls for trajectory evolution.

    dt is the step in scaled time for the soft mirror; in hard-wall mode the
    dynamics is event-driven and dt only sets the recording cadence.
    """

    dt: float = 2.0 * math.pi / 2000.0
    mode: str = "soft"
    event_tol: float = 1.0e-12
    force_cap: float = DEFAULT_FORCE_CAP
    max_impacts_per_step: int = 64
    max_fail_frac: float = 0.05
    # Wall-crossing bracketing: nodes every dt/wall_substeps, never coarser
    # than max_bracket_h in scaled time.
    wall_substeps: int = 16
    max_bracket_h: float = 0.1

    def __post_init__(self):
        if self.dt <= 0.0:
            raise InvalidParameterError("dt must be positive")
        if self.event_tol <= 0.0:
            raise InvalidParameterError("event_tol must be positive")
        if self.mode not in ("soft", "hard"):
            raise InvalidParameterError(f"unknown integrator mode {self.mode!r}")


def leapfrog_step(z, p, t, dt, params: DimensionlessParams, force_cap: float = DEFAULT_FORCE_CAP):
    """One kick-drift-kick step; the two half-kicks sample the force at t and t+dt.

    Accepts negative dt (time-reversed stepping). Vectorized over z, p.
    """
    p_half = p + 0.5 * dt * classical_force(z, t, params, force_cap)
    z_new = z + dt * p_half
    p_new = p_half + 0.5 * dt * classical_force(z_new, t + dt, params, force_cap)
    return z_new, p_new


def step_soft(point: PhasePoint, params: DimensionlessParams, cfg: IntegratorConfig) -> PhasePoint:
    """Advance one soft-mirror trajectory by cfg.dt."""
    if cfg.mode != "soft":
        raise InvalidParameterError("step_soft requires a soft-mode config")
    z, p = leapfrog_step(point.z, point.p, point.t, cfg.dt, params, cfg.force_cap)
    if not (np.isfinite(z) and np.isfinite(p)):
        raise IntegrationDivergedError(f"trajectory diverged at t={point.t:.6g}")
    return PhasePoint(float(z), float(p), point.t + cfg.dt)


def _bracket_nodes(span: float, cfg: IntegratorConfig) -> int:
    h = min(span / cfg.wall_substeps, cfg.max_bracket_h)
    return max(cfg.wall_substeps, int(math.ceil(span / h)))


def hardwall_advance(z, p, t, dt, params: DimensionlessParams, cfg: IntegratorConfig,
                     max_impacts: int | None = None):
    """Advance hard-wall trajectories from t to t+dt, resolving wall impacts.

    Free flight z(τ) = z + p τ - τ²/2 between impacts with the surface
    z_w = λ sin t; impact times are bracketed on a sub-grid and bisected to
    cfg.event_tol, then p' = -p + 2 λ cos(t_impact). Returns
    (z', p', impacts, status) arrays. Chattering points (> max_impacts
    reflections) are frozen and flagged rather than raised; callers decide.
    """
    if max_impacts is None:
        max_impacts = cfg.max_impacts_per_step
    lam = params.lam
    z = np.array(z, dtype=float, copy=True)
    p = np.array(p, dtype=float, copy=True)
    impacts = np.zeros(z.shape, dtype=int)
    status = np.full(z.shape, STATUS_OK, dtype=int)
    # tau: time already consumed inside [t, t+dt] per trajectory
    tau = np.zeros(z.shape, dtype=float)

    below = z < wall_position(t, lam) - cfg.event_tol
    if np.any(below):
        raise InvalidParameterError("hard-wall trajectories must start on or above the wall")

    active = np.ones(z.shape, dtype=bool)
    while np.any(active):
        idx = np.nonzero(active)[0]
        span = dt - tau[idx]
        m = _bracket_nodes(float(span.max()), cfg)
        # per-trajectory node grid from its own tau to dt, shape (len(idx), m+1)
        frac = np.linspace(0.0, 1.0, m + 1)
        rel = span[:, None] * frac[None, :]
        zs = z[idx, None] + p[idx, None] * rel - 0.5 * rel * rel
        gap = zs - wall_position(t + tau[idx, None] + rel, lam)

        # first node interval where the gap turns negative
        neg = gap < 0.0
        neg[:, 0] = False  # trajectories start on/above the wall
        has_hit = neg.any(axis=1)
        first = np.argmax(neg, axis=1)

        # no crossing: free flight to the end of the interval
        free = ~has_hit
        if np.any(free):
            fidx = idx[free]
            rel_end = dt - tau[fidx]
            z[fidx] += p[fidx] * rel_end - 0.5 * rel_end * rel_end
            p[fidx] -= rel_end
            tau[fidx] = dt
            active[fidx] = False

        if not np.any(has_hit):
            break
        hidx = idx[has_hit]
        k = first[has_hit]
        lo = tau[hidx] + rel[has_hit, k - 1]
        hi = tau[hidx] + rel[has_hit, k]

        # bisection on the time of the sign change
        z0, p0, tau0 = z[hidx], p[hidx], tau[hidx]
        n_bis = max(1, int(math.ceil(math.log2(max((hi - lo).max(), cfg.event_tol) / cfg.event_tol))))
        for _ in range(n_bis):
            mid = 0.5 * (lo + hi)
            rel_mid = mid - tau0
            gap_mid = z0 + p0 * rel_mid - 0.5 * rel_mid**2 - wall_position(t + mid, lam)
            below_mid = gap_mid < 0.0
            hi = np.where(below_mid, mid, hi)
            lo = np.where(below_mid, lo, mid)
        t_hit = 0.5 * (lo + hi)

        rel_hit = t_hit - tau0
        p_in = p0 - rel_hit
        u = wall_velocity(t + t_hit, lam)
        z[hidx] = wall_position(t + t_hit, lam)
        p[hidx] = -p_in + 2.0 * u
        tau[hidx] = t_hit
        impacts[hidx] += 1

        chatter = impacts[hidx] > max_impacts
        if np.any(chatter):
            cidx = hidx[chatter]
            status[cidx] = STATUS_CHATTERING
            active[cidx] = False

    bad = ~(np.isfinite(z) & np.isfinite(p))
    status[bad & (status == STATUS_OK)] = STATUS_DIVERGED
    return z, p, impacts, status


def step_hardwall(point: PhasePoint, params: DimensionlessParams, cfg: IntegratorConfig) -> PhasePoint:
    """Advance one hard-wall trajectory by cfg.dt, reflecting off the moving surface."""
    if cfg.mode != "hard":
        raise InvalidParameterError("step_hardwall requires a hard-mode config")
    z, p, _, status = hardwall_advance(
        np.array([point.z]), np.array([point.p]), point.t, cfg.dt, params, cfg)
    if status[0] == STATUS_CHATTERING:
        raise ChatteringError(
            f"more than {cfg.max_impacts_per_step} impacts in one step at t={point.t:.6g}")
    if status[0] == STATUS_DIVERGED:
        raise IntegrationDivergedError(f"trajectory diverged at t={point.t:.6g}")
    return PhasePoint(float(z[0]), float(p[0]), point.t + cfg.dt)


def sample_initial(descriptor: InitialDescriptor, n: int, seed: int,
                   t0: float = 0.0, lam: float | None = None) -> Ensemble:
    """Draw a deterministic ensemble from the descriptor.

    n = 1 collapses to the single point (z0, p0) regardless of shape. If the
    modulation strength is supplied, starting below the wall's reach draws a
    warning (the first recorded bounce would be ill-defined).
    """
    if n < 1:
        raise InvalidParameterError("ensemble size must be >= 1")
    if lam is not None and descriptor.z0 < lam:
        warnings.warn(f"initial z0={descriptor.z0} lies within the wall's reach |z| <= {lam}",
                      stacklevel=2)
    rng = np.random.default_rng(seed)
    if n == 1:
        z = np.array([descriptor.z0])
        p = np.array([descriptor.p0])
    elif descriptor.shape == "gaussian":
        z = descriptor.z0 + descriptor.dz * rng.standard_normal(n)
        p = descriptor.p0 + descriptor.dp * rng.standard_normal(n)
    else:
        z = descriptor.z0 + descriptor.dz * rng.uniform(-1.0, 1.0, n)
        p = descriptor.p0 + descriptor.dp * rng.uniform(-1.0, 1.0, n)
    return Ensemble(z=z, p=p, t=t0, rng_seed=seed, descriptor=descriptor)


def _record(series: dict, t: float, z, p, ok) -> None:
    n_ok = int(ok.sum())
    zz, pp = z[ok], p[ok]
    series["t"].append(t)
    series["mean_z"].append(zz.mean() if n_ok else np.nan)
    series["mean_p"].append(pp.mean() if n_ok else np.nan)
    series["mean_p2"].append((pp**2).mean() if n_ok else np.nan)
    series["var_p"].append(pp.var() if n_ok else np.nan)
    series["fail_frac"].append(1.0 - n_ok / z.size)


def evolve_ensemble(ens: Ensemble, params: DimensionlessParams, cfg: IntegratorConfig,
                    t_final: float, record_every: int = 1) -> tuple[Ensemble, ObservableSeries]:
    """Advance every trajectory to t_final, recording moments every record_every steps.

    Individual trajectory failures (divergence, chattering) are excluded from
    the records, not fatal, until their fraction exceeds cfg.max_fail_frac.
    """
    if t_final <= ens.t:
        raise InvalidParameterError("t_final must exceed the ensemble time")
    if record_every < 1:
        raise InvalidParameterError("record_every must be >= 1")

    z = ens.z.copy()
    p = ens.p.copy()
    t = ens.t
    status = np.full(z.shape, STATUS_OK, dtype=int)
    n_steps = int(math.ceil((t_final - t) / cfg.dt - 1e-12))
    cols = {k: [] for k in ("t", "mean_z", "mean_p", "mean_p2", "var_p", "fail_frac")}
    _record(cols, t, z, p, status == STATUS_OK)

    for step in range(1, n_steps + 1):
        dt = min(cfg.dt, t_final - t)
        ok = status == STATUS_OK
        if cfg.mode == "soft":
            zn, pn = leapfrog_step(z[ok], p[ok], t, dt, params, cfg.force_cap)
            fine = np.isfinite(zn) & np.isfinite(pn) & (np.abs(pn) < 1e12)
            sub = np.nonzero(ok)[0]
            status[sub[~fine]] = STATUS_DIVERGED
            z[sub[fine]] = zn[fine]
            p[sub[fine]] = pn[fine]
        else:
            zn, pn, _, st = hardwall_advance(z[ok], p[ok], t, dt, params, cfg)
            sub = np.nonzero(ok)[0]
            z[sub], p[sub] = zn, pn
            status[sub] = st
        t = ens.t + step * cfg.dt if step < n_steps else t_final

        fail_frac = float((status != STATUS_OK).mean())
        if fail_frac > cfg.max_fail_frac:
            raise IntegrationDivergedError(
                f"{fail_frac:.1%} of trajectories failed by t={t:.6g}")
        if step % record_every == 0 or step == n_steps:
            _record(cols, t, z, p, status == STATUS_OK)

    times = np.asarray(cols.pop("t"))
    series = ObservableSeries(times=times, columns={k: np.asarray(v) for k, v in cols.items()})
    out = Ensemble(z=z, p=p, t=t_final, rng_seed=ens.rng_seed, descriptor=ens.descriptor)
    return out, series
