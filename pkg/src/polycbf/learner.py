"""Identification of a neighbor's driving style from observed clearances.

While a vehicle's safety constraint is active, its clearance rate sits exactly
on the class-K margin: hdot = -kappa(alpha, h).  An observer that logs (h,
hdot) pairs during such episodes can therefore recover alpha by regressing
-hdot on the odd-power basis of h.  Ridge-regularized normal equations keep
the fit defined before enough distinct clearances have been seen.

Two observation routes are provided.  `observe` differentiates the measured
clearance itself (no knowledge of the neighbor's input needed, O(dt)
discretization error).  `observe_analytic` rebuilds the one-step rate from
the object's acceleration, recovered exactly from consecutive velocity
samples under the semi-implicit integrator, and is the noise-free route used
by oracle tests.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from .barrier import AlphaVector, BarrierBasis, SafetyConfig, basis, hdot, safety_value
from .dynamics import VehicleState
from .errors import ConfigurationError, InsufficientDataError, RankDeficiencyError

__all__ = [
    "BarrierSample",
    "RidgeConfig",
    "AlphaEstimate",
    "observe",
    "observe_analytic",
    "fit",
    "check_convergence",
    "StyleLearner",
    "export_samples",
    "import_samples",
]


@dataclass(frozen=True)
class BarrierSample:
    """One observed (clearance rate, clearance basis) pair."""

    hdot_obs: float
    basis: BarrierBasis
    timestamp: int = 0


@dataclass(frozen=True)
class RidgeConfig:
    """Regression and convergence-detection settings.

    rate_sign is the sign applied to the observed rate before regression.
    Active constraints satisfy hdot = -kappa(alpha, h), so the default -1
    recovers +alpha; +1 fits the raw rate instead (recovering the negated
    coefficients on such data).

    admission_threshold gates samples on the object's acceleration deviating
    from its estimated nominal (cruise ~ zero) by more than the threshold, a
    proxy for "the safety constraint is plausibly active".  None disables the
    filter and admits every sample.
    """

    regularizer: float = 1e-8
    q_hypothesis: int = 2
    convergence_tol: float = 1e-6
    convergence_window: int = 5
    rate_sign: float = -1.0
    admission_threshold: Optional[float] = 0.01

    def __post_init__(self):
        if not (math.isfinite(self.regularizer) and self.regularizer >= 0.0):
            raise ConfigurationError(f"regularizer must be >= 0, got {self.regularizer}")
        if self.q_hypothesis < 1:
            raise ConfigurationError(f"q_hypothesis must be >= 1, got {self.q_hypothesis}")
        if not (math.isfinite(self.convergence_tol) and self.convergence_tol > 0.0):
            raise ConfigurationError(f"convergence_tol must be > 0, got {self.convergence_tol}")
        if self.convergence_window < 2:
            raise ConfigurationError(f"convergence_window must be >= 2, got {self.convergence_window}")
        if self.rate_sign not in (-1.0, 1.0):
            raise ConfigurationError(f"rate_sign must be -1 or +1, got {self.rate_sign}")
        if self.admission_threshold is not None and self.admission_threshold < 0.0:
            raise ConfigurationError("admission_threshold must be >= 0 or None")


@dataclass(frozen=True)
class AlphaEstimate:
    """Clamped style estimate plus the raw regression solution behind it."""

    alpha_hat: AlphaVector
    raw: tuple
    n_samples: int
    converged: bool = False


def observe(obj: VehicleState, neighbor: VehicleState,
            prev_obj: VehicleState, prev_neighbor: VehicleState,
            cfg: SafetyConfig, dt: float, step: int = 0) -> BarrierSample:
    """Backward-difference clearance rate paired with the current clearance basis."""
    if dt <= 0.0:
        raise ConfigurationError(f"dt must be > 0, got {dt}")
    h_cur = safety_value(obj.position, neighbor.position, cfg)
    h_prev = safety_value(prev_obj.position, prev_neighbor.position, cfg)
    return BarrierSample((h_cur - h_prev) / dt, basis(h_cur, cfg.q), step)


def observe_analytic(obj: VehicleState, neighbor: VehicleState, obj_u,
                     cfg: SafetyConfig, dt: float, step: int = 0) -> BarrierSample:
    """Exact one-step rate from the object's acceleration, constant-velocity neighbor.

    States are those at which the object's control was applied; obj_u is that
    control, recoverable by an observer as (v_next - v) / dt.
    """
    rate = hdot(obj.position, neighbor.position, obj.velocity, neighbor.velocity,
                obj_u, (0.0, 0.0), dt)
    h = safety_value(obj.position, neighbor.position, cfg)
    return BarrierSample(rate, basis(h, cfg.q), step)


def fit(samples: Sequence[BarrierSample], cfg: RidgeConfig) -> AlphaEstimate:
    """Ridge solution of (H^T H + r I) alpha = H^T (rate_sign * hdot).

    The raw solution is kept verbatim; alpha_hat clamps it to the valid
    non-negative cone componentwise.
    """
    if len(samples) == 0:
        raise InsufficientDataError("cannot fit a style with no samples")
    q = cfg.q_hypothesis
    for s in samples:
        if s.basis.q != q:
            raise ConfigurationError(
                f"sample basis order {s.basis.q} does not match q_hypothesis {q}")
    H = np.array([s.basis.values for s in samples], dtype=np.float64)
    y = np.array([cfg.rate_sign * s.hdot_obs for s in samples], dtype=np.float64)
    G = H.T @ H + cfg.regularizer * np.eye(q)
    if cfg.regularizer == 0.0:
        cond = np.linalg.cond(G)
        if not np.isfinite(cond) or cond > 1e14:
            raise RankDeficiencyError(
                "normal matrix is singular; add samples at distinct clearances "
                "or use a regularizer > 0")
    raw = np.linalg.solve(G, H.T @ y)
    clamped = tuple(max(float(v), 0.0) for v in raw)
    return AlphaEstimate(AlphaVector(clamped), tuple(float(v) for v in raw), len(samples))


def check_convergence(history: Sequence[AlphaEstimate], cfg: RidgeConfig) -> bool:
    """True iff the last convergence_window estimates moved <= convergence_tol.

    Movement is the largest componentwise spread of alpha_hat across the
    window; histories shorter than the window are never converged.
    """
    w = cfg.convergence_window
    if len(history) < w:
        return False
    window = [est.alpha_hat.coefficients for est in history[-w:]]
    q = len(window[0])
    for coeffs in window:
        if len(coeffs) != q:
            raise ConfigurationError("estimate history mixes hypothesis orders")
    for p in range(q):
        column = [coeffs[p] for coeffs in window]
        if max(column) - min(column) > cfg.convergence_tol:
            return False
    return True


class StyleLearner:
    """Single-owner growing dataset with refit-on-admission and convergence tracking.

    The normal equations are accumulated incrementally, so each admission
    costs O(q^2) regardless of how many samples came before; a batch refit
    via fit() agrees up to floating-point accumulation order.
    """

    def __init__(self, ridge: RidgeConfig):
        self.ridge = ridge
        self.samples: List[BarrierSample] = []
        self.history: List[AlphaEstimate] = []
        self.converged_at: Optional[int] = None
        q = ridge.q_hypothesis
        self._gram = np.zeros((q, q))
        self._moment = np.zeros(q)
        self._ridge_eye = ridge.regularizer * np.eye(q)

    @property
    def estimate(self) -> Optional[AlphaEstimate]:
        return self.history[-1] if self.history else None

    @property
    def converged(self) -> bool:
        return self.converged_at is not None

    def admits(self, obj_u_obs, obj_u_nominal_est=(0.0, 0.0)) -> bool:
        """Admission filter: does the object's input deviate from its nominal?"""
        thr = self.ridge.admission_threshold
        if thr is None:
            return True
        du_x = float(obj_u_obs[0]) - float(obj_u_nominal_est[0])
        du_y = float(obj_u_obs[1]) - float(obj_u_nominal_est[1])
        return max(abs(du_x), abs(du_y)) > thr

    def add(self, sample: BarrierSample) -> AlphaEstimate:
        """Admit a sample, refit, and update the convergence flag."""
        q = self.ridge.q_hypothesis
        if sample.basis.q != q:
            raise ConfigurationError(
                f"sample basis order {sample.basis.q} does not match q_hypothesis {q}")
        phi = np.asarray(sample.basis.values, dtype=np.float64)
        self._gram += np.outer(phi, phi)
        self._moment += (self.ridge.rate_sign * sample.hdot_obs) * phi
        self.samples.append(sample)
        G = self._gram + self._ridge_eye
        if self.ridge.regularizer == 0.0:
            cond = np.linalg.cond(G)
            if not np.isfinite(cond) or cond > 1e14:
                raise RankDeficiencyError(
                    "normal matrix is singular; add samples at distinct clearances "
                    "or use a regularizer > 0")
        raw = np.linalg.solve(G, self._moment)
        clamped = tuple(max(float(v), 0.0) for v in raw)
        est = AlphaEstimate(AlphaVector(clamped), tuple(float(v) for v in raw),
                            len(self.samples))
        self.history.append(est)
        if self.converged_at is None and check_convergence(self.history, self.ridge):
            self.converged_at = len(self.samples)
        if self.converged:
            est = replace(est, converged=True)
            self.history[-1] = est
        return est


def _fmt(x: float) -> str:
    return format(x, ".17g")


def export_samples(samples: Sequence[BarrierSample], path) -> None:
    """Write a dataset as CSV rows: step, h, hdot, basis_0..basis_{q-1}."""
    if len(samples) == 0:
        raise InsufficientDataError("refusing to export an empty dataset")
    q = samples[0].basis.q
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "h", "hdot"] + [f"basis_{p}" for p in range(q)])
        for s in samples:
            row = [str(s.timestamp), _fmt(s.basis.values[0]), _fmt(s.hdot_obs)]
            row.extend(_fmt(v) for v in s.basis.values)
            writer.writerow(row)


def import_samples(path) -> List[BarrierSample]:
    """Read a dataset written by export_samples; floats round-trip exactly."""
    samples: List[BarrierSample] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        q = len(header) - 3
        if q < 1:
            raise ConfigurationError(f"malformed dataset header: {header}")
        for row in reader:
            step = int(row[0])
            hdot_obs = float(row[2])
            values = tuple(float(v) for v in row[3:3 + q])
            samples.append(BarrierSample(hdot_obs, BarrierBasis(values), step))
    return samples
