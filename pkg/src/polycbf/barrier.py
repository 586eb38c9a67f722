"""Pairwise clearance function and polynomial class-K margins.

The safety margin between two vehicles is the squared-distance clearance

    h = ||x_i - x_j||^2 - r_safe^2        [m^2]

with the safe set {h >= 0}.  How fast a vehicle may let h shrink is governed
by a polynomial class-K function built from odd powers of h,

    kappa(alpha, h) = alpha_1 h + alpha_2 h^3 + ... + alpha_q h^(2q-1),

whose non-negative coefficients alpha act as a driving-style knob: larger
coefficients permit a faster approach, with the single-term alpha = [gamma]
reducing to the familiar linear margin gamma * h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "AlphaVector",
    "BarrierBasis",
    "SafetyConfig",
    "safety_value",
    "basis",
    "kappa",
    "hdot",
]

DEFAULT_Q = 2


def _as_xy(value, name: str) -> tuple[float, float]:
    """Coerce a 2-vector-like input to a pair of finite floats."""
    arr = np.asarray(value, dtype=np.float64).ravel()
    if arr.shape != (2,):
        raise ConfigurationError(f"{name} must be a 2-vector, got shape {arr.shape}")
    x, y = float(arr[0]), float(arr[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise DomainError(f"{name} has non-finite components: ({x}, {y})")
    return x, y


@dataclass(frozen=True)
class AlphaVector:
    """Coefficients of a polynomial class-K margin, lowest odd power first."""

    coefficients: tuple[float, ...]

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        if len(coeffs) < 1:
            raise ConfigurationError("alpha needs at least one coefficient")
        for c in coeffs:
            if not math.isfinite(c):
                raise DomainError(f"non-finite alpha coefficient: {c}")
            if c < 0.0:
                raise ConfigurationError(f"alpha coefficients must be >= 0, got {c}")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def q(self) -> int:
        return len(self.coefficients)

    def padded(self, q: int) -> tuple[float, ...]:
        """Coefficients extended with zeros up to length q."""
        if q < self.q:
            raise ConfigurationError(f"cannot pad alpha of order {self.q} down to {q}")
        return self.coefficients + (0.0,) * (q - self.q)


@dataclass(frozen=True)
class BarrierBasis:
    """Odd powers of a clearance value: values[p] = h^(2p+1)."""

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @property
    def q(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SafetyConfig:
    """Safety radius and polynomial order shared by a whole scenario."""

    r_safe: float = 5.0
    q: int = DEFAULT_Q

    def __post_init__(self):
        if not (math.isfinite(self.r_safe) and self.r_safe > 0.0):
            raise ConfigurationError(f"r_safe must be positive and finite, got {self.r_safe}")
        if self.q < 1:
            raise ConfigurationError(f"q must be >= 1, got {self.q}")


def safety_value(xi, xj, cfg: SafetyConfig) -> float:
    """Squared-distance clearance ||xi - xj||^2 - r_safe^2 between two positions."""
    xi_x, xi_y = _as_xy(xi, "xi")
    xj_x, xj_y = _as_xy(xj, "xj")
    dx = xi_x - xj_x
    dy = xi_y - xj_y
    return dx * dx + dy * dy - cfg.r_safe * cfg.r_safe


def basis(h: float, q: int) -> BarrierBasis:
    """Odd-power basis [h, h^3, ..., h^(2q-1)] evaluated at a clearance h."""
    if q < 1:
        raise ConfigurationError(f"q must be >= 1, got {q}")
    h = float(h)
    if not math.isfinite(h):
        raise DomainError(f"non-finite clearance: {h}")
    values = []
    term = h
    h2 = h * h
    for _ in range(q):
        values.append(term)
        term *= h2
    return BarrierBasis(tuple(values))


def kappa(alpha: AlphaVector | Sequence[float], h: float) -> float:
    """Polynomial class-K margin alpha . [h, h^3, ...] at a clearance h.

    Exactly zero at h = 0, strictly increasing for h > 0 whenever some
    coefficient is positive.
    """
    coeffs = alpha.coefficients if isinstance(alpha, AlphaVector) else AlphaVector(tuple(alpha)).coefficients
    h = float(h)
    if not math.isfinite(h):
        raise DomainError(f"non-finite clearance: {h}")
    total = 0.0
    term = h
    h2 = h * h
    for c in coeffs:
        total += c * term
        term *= h2
    return total


def hdot(xi, xj, vi, vj, ui, uj, dt: float) -> float:
    """One-step rate of the clearance under piecewise-constant accelerations.

    Expanding h across a single integrator step of length dt gives

        2 dx.dv + 2 dx.ui dt - 2 dx.uj dt,

    whose dt terms vanish in the continuous limit, leaving the familiar
    2 dx.dv.  The value is antisymmetric under swapping the two vehicles.
    """
    xi_x, xi_y = _as_xy(xi, "xi")
    xj_x, xj_y = _as_xy(xj, "xj")
    vi_x, vi_y = _as_xy(vi, "vi")
    vj_x, vj_y = _as_xy(vj, "vj")
    ui_x, ui_y = _as_xy(ui, "ui")
    uj_x, uj_y = _as_xy(uj, "uj")
    dt = float(dt)
    if not (math.isfinite(dt) and dt > 0.0):
        raise ConfigurationError(f"dt must be positive and finite, got {dt}")
    dx_x = xi_x - xj_x
    dx_y = xi_y - xj_y
    dv_x = vi_x - vj_x
    dv_y = vi_y - vj_y
    du_x = ui_x - uj_x
    du_y = ui_y - uj_y
    return 2.0 * (dx_x * dv_x + dx_y * dv_y) + 2.0 * (dx_x * du_x + dx_y * du_y) * dt
