"""Dimensionless parameters, lab-unit scaling, and the modulation-strength windows.

Scaled coordinates (mirror modulation frequency ω, gravity g):

    z = z̃ ω²/g,   p = p̃ ω/(m g),   t = ω t̃

which turn the bouncing-atom Hamiltonian into

    H = p²/2 + z + V0 exp(-κ (z - λ sin t))

with
    λ  = ω² ε / (2 k g)        modulation strength
    κ  = 2 k g / ω²            inverse scaled decay length of the mirror field
    V0 = ħ ω² Ω_eff / (4 m g²) scaled mirror height
    k̄  = ħ ω³ / (m g²)         effective Planck constant ([z, p] = i k̄)

Three intervals of λ matter:

    localization:  0.24 ≤ λ < √k̄ / 2
    acceleration:  s π ≤ λ < √(1 + (s π)²),  s = 0.5, 1, 1.5, ...
    overlap:       their intersection

All windows are half-open [lo, hi); an empty window has lo == hi.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import InvalidParameterError

# Critical modulation strength for the onset of global classical diffusion.
# Adopted constant (stochasticity threshold of the bouncer map).
CHAOS_THRESHOLD = 0.24

# Defaults for lab-parameter conversion; both are plain configuration values.
DEFAULT_G = 9.8
DEFAULT_HBAR = 1.0546e-34
# Effective Rabi frequency of the mirror field, rad/s. Sets only V0; chosen so
# that typical cesium-scale inputs give V0 of order 10..100.
DEFAULT_OMEGA_EFF = 1.0e6


class WindowKind(enum.Enum):
    LOCALIZATION = "localization"
    ACCELERATION = "acceleration"
    OVERLAP = "overlap"


@dataclass(frozen=True)
class Window:
    """Half-open interval [lo, hi) of modulation strengths."""

    lo: float
    hi: float
    kind: WindowKind
    s: float | None = None

    def __post_init__(self):
        if self.hi < self.lo:
            raise InvalidParameterError(f"window upper bound {self.hi} below lower bound {self.lo}")
        if self.kind in (WindowKind.ACCELERATION, WindowKind.OVERLAP) and self.s is None:
            raise InvalidParameterError(f"{self.kind.value} window requires a branch index")

    @property
    def is_empty(self) -> bool:
        return self.lo == self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, lam: float) -> bool:
        return self.lo <= lam < self.hi


@dataclass(frozen=True)
class LabParams:
    """Laboratory inputs: SI units throughout.

    mass      atom mass, kg
    omega     mirror modulation angular frequency, rad/s
    epsilon   intensity-modulation amplitude (dimensionless)
    decay_k   evanescent-field spatial decay rate, 1/m
    g         gravitational acceleration, m/s²
    hbar      reduced Planck constant, J s
    omega_eff effective Rabi frequency of the mirror field, rad/s
    """

    mass: float
    omega: float
    epsilon: float
    decay_k: float
    g: float = DEFAULT_G
    hbar: float = DEFAULT_HBAR
    omega_eff: float = DEFAULT_OMEGA_EFF

    def __post_init__(self):
        for name in ("mass", "omega", "epsilon", "decay_k", "g", "hbar", "omega_eff"):
            value = getattr(self, name)
            if not (value > 0.0) or not math.isfinite(value):
                raise InvalidParameterError(f"LabParams.{name} must be strictly positive, got {value}")


@dataclass(frozen=True)
class DimensionlessParams:
    """Scaled parameters; the single source of truth for a run.

    lam    modulation strength λ
    kappa  inverse scaled decay length κ
    v0     scaled mirror height V0
    kbar   effective Planck constant k̄
    """

    lam: float
    kappa: float
    v0: float
    kbar: float

    def __post_init__(self):
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise InvalidParameterError(f"lam must be >= 0, got {self.lam}")
        if not (self.kappa > 0.0 and math.isfinite(self.kappa)):
            raise InvalidParameterError(f"kappa must be > 0, got {self.kappa}")
        if not (self.v0 >= 0.0 and math.isfinite(self.v0)):
            raise InvalidParameterError(f"v0 must be >= 0, got {self.v0}")
        if not (self.kbar > 0.0 and math.isfinite(self.kbar)):
            raise InvalidParameterError(f"kbar must be > 0, got {self.kbar}")


def scale_to_dimensionless(lab: LabParams) -> DimensionlessParams:
    """Convert lab inputs to scaled parameters.

    λ = ω²ε/(2kg), κ = 2kg/ω², V0 = ħω²Ω_eff/(4mg²), k̄ = ħω³/(mg²).

    Note: for the cesium example (m = 2.2e-25 kg, ω = 7.55e3 rad/s) this
    yields k̄ ≈ 2.15; see README for the discrepancy with the often-quoted
    k̄ = 14 for those inputs. The formula is authoritative here.
    """
    omega_sq = lab.omega**2
    lam = omega_sq * lab.epsilon / (2.0 * lab.decay_k * lab.g)
    kappa = 2.0 * lab.decay_k * lab.g / omega_sq
    v0 = lab.hbar * omega_sq * lab.omega_eff / (4.0 * lab.mass * lab.g**2)
    kbar = lab.hbar * lab.omega**3 / (lab.mass * lab.g**2)
    return DimensionlessParams(lam=lam, kappa=kappa, v0=v0, kbar=kbar)


def lab_from_dimensionless(params: DimensionlessParams, mass: float, omega: float,
                           g: float = DEFAULT_G, hbar: float = DEFAULT_HBAR) -> LabParams:
    """Invert the scaling at fixed (m, ω, g, ħ): ε = λκ and k = κω²/(2g).

    Ω_eff is recovered from V0. Round-trips scale_to_dimensionless exactly.
    """
    decay_k = params.kappa * omega**2 / (2.0 * g)
    epsilon = params.lam * params.kappa
    omega_eff = params.v0 * 4.0 * mass * g**2 / (hbar * omega**2)
    return LabParams(mass=mass, omega=omega, epsilon=epsilon, decay_k=decay_k,
                     g=g, hbar=hbar, omega_eff=omega_eff)


def _quantum_break_bound(kbar: float) -> float:
    if not (kbar > 0.0 and math.isfinite(kbar)):
        raise InvalidParameterError(f"kbar must be > 0, got {kbar}")
    return math.sqrt(kbar) / 2.0


def validate_branch_index(s: float) -> float:
    """Branch indices are the positive integers and half-integers."""
    if not (s > 0.0 and math.isfinite(s)):
        raise InvalidParameterError(f"branch index must be positive, got {s}")
    doubled = 2.0 * s
    if abs(doubled - round(doubled)) > 1e-9:
        raise InvalidParameterError(f"branch index must be a positive multiple of 0.5, got {s}")
    return round(doubled) / 2.0


def branch_indices(s_max: float) -> list[float]:
    """All valid branch indices 0.5, 1.0, ... up to s_max inclusive."""
    s_max = validate_branch_index(s_max)
    return [j / 2.0 for j in range(1, int(round(2.0 * s_max)) + 1)]


def localization_window(kbar: float) -> Window:
    """Modulation strengths where quantum dynamics stays localized.

    [0.24, √k̄/2); empty (lo == hi == 0.24) when the quantum-break bound
    does not exceed the classical chaos threshold.
    """
    hi = _quantum_break_bound(kbar)
    lo = CHAOS_THRESHOLD
    if hi <= lo:
        hi = lo
    return Window(lo=lo, hi=hi, kind=WindowKind.LOCALIZATION)


def acceleration_window(s: float) -> Window:
    """Modulation strengths with a stable branch-s accelerator mode: [sπ, √(1+(sπ)²))."""
    s = validate_branch_index(s)
    lo = s * math.pi
    hi = math.sqrt(1.0 + lo * lo)
    return Window(lo=lo, hi=hi, kind=WindowKind.ACCELERATION, s=s)


def overlap_window(kbar: float, s: float) -> Window:
    """Intersection of the localization window and the branch-s acceleration window.

    Where both conditions hold the matter wave is Fermi-accelerated and
    dynamically localized at once.
    """
    loc = localization_window(kbar)
    acc = acceleration_window(s)
    lo = max(loc.lo, acc.lo)
    hi = min(loc.hi, acc.hi)
    if hi <= lo:
        hi = lo
    return Window(lo=lo, hi=hi, kind=WindowKind.OVERLAP, s=acc.s)


def classify_lambda(lam: float, kbar: float, s_max: float) -> set[Window]:
    """All non-empty windows (localization; acceleration and overlap for s ≤ s_max) containing lam."""
    if not (lam >= 0.0 and math.isfinite(lam)):
        raise InvalidParameterError(f"lam must be >= 0, got {lam}")
    hits: set[Window] = set()
    loc = localization_window(kbar)
    if loc.contains(lam):
        hits.add(loc)
    for s in branch_indices(s_max):
        acc = acceleration_window(s)
        if acc.contains(lam):
            hits.add(acc)
        ovl = overlap_window(kbar, s)
        if ovl.contains(lam):
            hits.add(ovl)
    return hits
