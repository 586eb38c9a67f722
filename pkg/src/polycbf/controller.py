"""Minimal-deviation safety filter for planar vehicles.

Each control step solves a tiny quadratic program: stay as close as possible
to a nominal cruise acceleration while respecting box limits and one linear
half-plane row per neighbor.  A row (a, b) encodes a.u <= b and is derived
from the one-step clearance rate, so satisfying it keeps the clearance decay
within the vehicle's class-K margin.

The solver is a dense active-set enumeration specialized to two decision
variables: the optimum of a strictly convex 2-D projection lies either at the
nominal point, on a single constraint line, or at the intersection of two, so
checking every candidate is exact and fast.  Infeasible programs fall back to
the box-bounded input minimizing the worst violation and are flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .barrier import AlphaVector, SafetyConfig, kappa, safety_value
from .dynamics import VehicleState
from .errors import ConfigurationError, DegenerateConstraintError, DomainError

__all__ = [
    "ControlLimits",
    "NominalPlan",
    "QpProblem",
    "QpSolution",
    "nominal_control",
    "build_safety_constraint",
    "solve_qp",
    "safe_control",
    "DEFAULT_LIMITS",
]

# Feasibility slack used when screening candidate points, relative to row scale.
_FEAS_TOL = 1e-9


@dataclass(frozen=True)
class ControlLimits:
    """Componentwise acceleration box [u_min, u_max]."""

    u_min: np.ndarray
    u_max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.u_min, dtype=np.float64).reshape(2).copy()
        hi = np.asarray(self.u_max, dtype=np.float64).reshape(2).copy()
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise DomainError("control limits must be finite")
        if not (lo <= hi).all():
            raise ConfigurationError(f"u_min must be <= u_max, got {lo} vs {hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "u_min", lo)
        object.__setattr__(self, "u_max", hi)


DEFAULT_LIMITS = ControlLimits(np.array([-5.0, -5.0]), np.array([5.0, 5.0]))


@dataclass(frozen=True)
class NominalPlan:
    """Proportional cruise law: pull velocity toward desired_speed * lane_direction."""

    desired_speed: float
    lane_direction: np.ndarray
    gain: float

    def __post_init__(self):
        if not (math.isfinite(self.desired_speed) and self.desired_speed >= 0.0):
            raise ConfigurationError(f"desired_speed must be >= 0, got {self.desired_speed}")
        if not (math.isfinite(self.gain) and self.gain > 0.0):
            raise ConfigurationError(f"gain must be > 0, got {self.gain}")
        d = np.asarray(self.lane_direction, dtype=np.float64).reshape(2).copy()
        if not np.isfinite(d).all():
            raise DomainError("lane_direction has non-finite components")
        norm = math.hypot(d[0], d[1])
        if norm == 0.0:
            raise ConfigurationError("lane_direction must be non-zero")
        d /= norm
        d.flags.writeable = False
        object.__setattr__(self, "lane_direction", d)


@dataclass(frozen=True)
class QpProblem:
    """min ||u - u_nominal||^2 over the box, subject to rows a.u <= b."""

    u_nominal: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray
    constraints: Tuple[Tuple[np.ndarray, float], ...] = ()

    def __post_init__(self):
        ubar = np.asarray(self.u_nominal, dtype=np.float64).reshape(2)
        lo = np.asarray(self.u_min, dtype=np.float64).reshape(2)
        hi = np.asarray(self.u_max, dtype=np.float64).reshape(2)
        if not (np.isfinite(ubar).all() and np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise DomainError("QP data must be finite")
        if not (lo[0] <= hi[0] and lo[1] <= hi[1]):
            raise ConfigurationError(f"u_min must be <= u_max, got {lo} vs {hi}")
        rows = []
        for a, b in self.constraints:
            av = np.asarray(a, dtype=np.float64).reshape(2)
            bf = float(b)
            if not (np.isfinite(av).all() and math.isfinite(bf)):
                raise DomainError("constraint row must be finite")
            rows.append((av, bf))
        object.__setattr__(self, "u_nominal", ubar)
        object.__setattr__(self, "u_min", lo)
        object.__setattr__(self, "u_max", hi)
        object.__setattr__(self, "constraints", tuple(rows))


@dataclass(frozen=True)
class QpSolution:
    """Filtered input plus telemetry for the step that produced it."""

    u: np.ndarray
    feasible: bool
    objective: float
    max_violation: float = 0.0


def nominal_control(state: VehicleState, plan: NominalPlan,
                    limits: Optional[ControlLimits] = None) -> np.ndarray:
    """Cruise acceleration gain * (desired velocity - velocity), box-clamped."""
    d = plan.lane_direction
    u = plan.gain * (plan.desired_speed * d - state.velocity)
    if limits is not None:
        u = np.minimum(np.maximum(u, limits.u_min), limits.u_max)
    return u


def build_safety_constraint(ego: VehicleState, other: VehicleState, other_u_assumed,
                            alpha: AlphaVector, cfg: SafetyConfig,
                            dt: float) -> Tuple[np.ndarray, float]:
    """Half-plane row (a, b) keeping the clearance rate above -kappa(alpha, h).

    The one-step rate 2 dx.dv + 2 dx.u_ego dt - 2 dx.u_other dt >= -kappa
    rearranges to a.u_ego <= b with a = -2 dx dt.  The neighbor's acceleration
    is whatever the caller assumes for it (zero models a constant-velocity
    neighbor).
    """
    ex, ey = float(ego.position[0]), float(ego.position[1])
    ox, oy = float(other.position[0]), float(other.position[1])
    dx_x = ex - ox
    dx_y = ey - oy
    if dx_x == 0.0 and dx_y == 0.0:
        raise DegenerateConstraintError("coincident positions admit no separating row")
    dv_x = float(ego.velocity[0]) - float(other.velocity[0])
    dv_y = float(ego.velocity[1]) - float(other.velocity[1])
    if other_u_assumed is None:
        uo_x = uo_y = 0.0
    else:
        uo = np.asarray(other_u_assumed, dtype=np.float64).reshape(2)
        uo_x, uo_y = float(uo[0]), float(uo[1])
    dt = float(dt)
    if not (math.isfinite(dt) and dt > 0.0):
        raise ConfigurationError(f"dt must be positive and finite, got {dt}")
    h = safety_value(ego.position, other.position, cfg)
    a = np.array([-2.0 * dx_x * dt, -2.0 * dx_y * dt])
    b = (2.0 * (dx_x * dv_x + dx_y * dv_y)
         - 2.0 * (dx_x * uo_x + dx_y * uo_y) * dt
         + kappa(alpha, h))
    return a, b


def _enumerate_min_deviation(ubar_x, ubar_y, rows):
    """Best feasible candidate for min ||u - ubar||^2 over rows a.u <= b.

    rows include the box faces.  Returns (ux, uy, objective) or None when no
    candidate satisfies every row.
    """
    candidates = [(ubar_x, ubar_y)]
    n = len(rows)
    for i in range(n):
        ax, ay, b = rows[i]
        nrm2 = ax * ax + ay * ay
        if nrm2 <= 0.0:
            continue
        # Euclidean projection onto the line a.u = b.
        t = (ax * ubar_x + ay * ubar_y - b) / nrm2
        candidates.append((ubar_x - t * ax, ubar_y - t * ay))
    for i in range(n):
        ax1, ay1, b1 = rows[i]
        for j in range(i + 1, n):
            ax2, ay2, b2 = rows[j]
            det = ax1 * ay2 - ay1 * ax2
            scale = math.sqrt((ax1 * ax1 + ay1 * ay1) * (ax2 * ax2 + ay2 * ay2))
            if scale == 0.0 or abs(det) <= 1e-14 * scale:
                continue
            candidates.append(((b1 * ay2 - b2 * ay1) / det, (ax1 * b2 - ax2 * b1) / det))
    best = None
    best_obj = math.inf
    for ux, uy in candidates:
        ok = True
        for ax, ay, b in rows:
            if ax * ux + ay * uy - b > _FEAS_TOL * max(1.0, abs(b)):
                ok = False
                break
        if not ok:
            continue
        dxu = ux - ubar_x
        dyu = uy - ubar_y
        obj = dxu * dxu + dyu * dyu
        if obj < best_obj:
            best_obj = obj
            best = (ux, uy)
    if best is None:
        return None
    return best[0], best[1], best_obj


def _minimax_violation(rows, lo_x, lo_y, hi_x, hi_y):
    """Box-bounded point minimizing the largest row violation, via a small LP."""
    from scipy.optimize import linprog  # deferred: only the infeasible path needs it

    a_ub = [[ax, ay, -1.0] for ax, ay, _ in rows]
    b_ub = [b for _, _, b in rows]
    res = linprog(c=[0.0, 0.0, 1.0], A_ub=a_ub, b_ub=b_ub,
                  bounds=[(lo_x, hi_x), (lo_y, hi_y), (None, None)],
                  method="highs")
    if not res.success:
        raise RuntimeError(f"violation-minimizing fallback failed: {res.message}")
    return float(res.x[0]), float(res.x[1]), float(res.x[2])


def _solve_scalar(ubar_x, ubar_y, lo_x, lo_y, hi_x, hi_y, constraint_rows):
    """Scalar-core solve shared by solve_qp and the batch simulation loop.

    constraint_rows are (ax, ay, b) triples excluding the box.  Returns
    (ux, uy, feasible, objective, max_violation).
    """
    rows = list(constraint_rows)
    rows.append((1.0, 0.0, hi_x))
    rows.append((-1.0, 0.0, -lo_x))
    rows.append((0.0, 1.0, hi_y))
    rows.append((0.0, -1.0, -lo_y))

    found = _enumerate_min_deviation(ubar_x, ubar_y, rows)
    if found is not None:
        ux, uy, obj = found
        return ux, uy, True, obj, 0.0

    # No admissible input: take the box point with the smallest worst violation,
    # then resolve ties toward the nominal by re-solving with relaxed rows.
    if len(rows) == 5:
        # Single substantive row: the minimizer is the box corner opposing a,
        # where the box faces add no violation of their own.  Skip the LP.
        ax, ay, b = rows[0]
        vx = lo_x if ax > 0.0 else hi_x
        vy = lo_y if ay > 0.0 else hi_y
        t_star = ax * vx + ay * vy - b
    else:
        vx, vy, t_star = _minimax_violation(rows, lo_x, lo_y, hi_x, hi_y)
    slack = t_star + 1e-9 * max(1.0, abs(t_star))
    relaxed = [(ax, ay, b + slack) for ax, ay, b in rows[:-4]]
    relaxed.extend(rows[-4:])  # box faces stay hard
    found = _enumerate_min_deviation(ubar_x, ubar_y, relaxed)
    if found is not None:
        ux, uy, _ = found
    else:  # pragma: no cover - relaxation is feasible by construction
        ux, uy = vx, vy
    dxu = ux - ubar_x
    dyu = uy - ubar_y
    return ux, uy, False, dxu * dxu + dyu * dyu, t_star


def solve_qp(qp: QpProblem) -> QpSolution:
    """Solve the filter QP exactly; infeasible programs return a flagged fallback."""
    rows = [(float(a[0]), float(a[1]), float(b)) for a, b in qp.constraints]
    ux, uy, feasible, obj, t_star = _solve_scalar(
        float(qp.u_nominal[0]), float(qp.u_nominal[1]),
        float(qp.u_min[0]), float(qp.u_min[1]),
        float(qp.u_max[0]), float(qp.u_max[1]),
        rows,
    )
    return QpSolution(np.array([ux, uy]), feasible, obj, t_star)


def safe_control(ego: VehicleState, others: Sequence, alpha: AlphaVector,
                 plan: NominalPlan, cfg: SafetyConfig,
                 limits: ControlLimits = DEFAULT_LIMITS, dt: float = 0.01,
                 extra_rows: Sequence[Tuple[np.ndarray, float]] = ()) -> QpSolution:
    """Filter the nominal cruise input against every neighbor.

    others is a sequence of (VehicleState, assumed acceleration) pairs; pass
    None for the acceleration to model a constant-velocity neighbor.  Extra
    pre-built rows (style-compatibility, etc.) are appended verbatim.
    """
    ubar = nominal_control(ego, plan, limits)
    rows = [build_safety_constraint(ego, other, u_assumed, alpha, cfg, dt)
            for other, u_assumed in others]
    rows.extend(extra_rows)
    qp = QpProblem(ubar, limits.u_min, limits.u_max, tuple(rows))
    return solve_qp(qp)
