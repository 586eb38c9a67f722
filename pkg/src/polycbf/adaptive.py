"""Adaptive merging: identify the other driver's style, then act on it.

Phase one of the loop watches an interacting pair and fits the observed
vehicle's barrier coefficients from clearance data.  At a fixed step budget
the ego mirrors the estimate through a preset table (the more aggressive the
other driver scores, the more conservative the ego's pick) and, for the rest
of the run, filters its control against every neighbor plus an optional
compatibility row that keeps its chosen style consistent with the estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .barrier import AlphaVector, SafetyConfig, basis, kappa, safety_value
from .controller import ControlLimits, NominalPlan, _solve_scalar, safe_control
from .dynamics import VehicleState, step
from .errors import ConfigurationError, DegenerateConstraintError
from .learner import AlphaEstimate, RidgeConfig, StyleLearner, observe, observe_analytic
from .scenario import ScenarioConfig, TrialRecord, simulate

__all__ = [
    "CompatibilityRow",
    "compatibility_constraint",
    "aggressiveness_score",
    "StylePolicy",
    "DEFAULT_POLICY",
    "select_alpha",
    "AdaptiveRecord",
    "run_adaptive_merge",
    "MismatchTrial",
    "experiment_assumption_mismatch",
]

HDOT_MODES = ("finite_diff", "analytic")


@dataclass(frozen=True)
class CompatibilityRow:
    """Linear constraint a @ u <= b on the ego's acceleration."""

    a: np.ndarray
    b: float

    def as_pair(self) -> Tuple[np.ndarray, float]:
        return (self.a, self.b)


def compatibility_constraint(ego: VehicleState, other: VehicleState,
                             alpha_i: AlphaVector, alpha_j: AlphaVector,
                             cfg: SafetyConfig, dt: float) -> CompatibilityRow:
    """Row tying the ego's braking authority to the style mismatch.

    Against an other vehicle whose filter runs alpha_j, an ego running
    alpha_i must not out-brake the clearance budget the two styles disagree
    by: -2 dx . u * dt <= (alpha_i - alpha_j) . basis(h).  Equal styles give
    the zero row, and a strictly more conservative ego (componentwise) keeps
    the bound nonnegative, so the row only ever bites on approach.
    """
    dx_x = float(ego.position[0]) - float(other.position[0])
    dx_y = float(ego.position[1]) - float(other.position[1])
    if dx_x == 0.0 and dx_y == 0.0:
        raise DegenerateConstraintError("coincident positions leave the row undefined")
    h = safety_value(ego.position, other.position, cfg)
    q = max(alpha_i.q, alpha_j.q)
    ai = alpha_i.padded(q)
    aj = alpha_j.padded(q)
    hb = basis(h, q).values
    b = 0.0
    for p in range(q):
        b += (ai[p] - aj[p]) * hb[p]
    a = np.array([-2.0 * dx_x * dt, -2.0 * dx_y * dt])
    return CompatibilityRow(a=a, b=b)


def aggressiveness_score(alpha: AlphaVector, reference_h: float) -> float:
    """Barrier decay a style tolerates at a reference clearance; higher is pushier."""
    if not (math.isfinite(reference_h) and reference_h > 0.0):
        raise ConfigurationError(f"reference_h must be > 0, got {reference_h}")
    return kappa(alpha, reference_h)


@dataclass(frozen=True)
class StylePolicy:
    """Preset styles ordered least to most aggressive at a reference clearance."""

    presets: Tuple[AlphaVector, ...]
    reference_h: float = 25.0

    def __post_init__(self):
        if len(self.presets) == 0:
            raise ConfigurationError("policy needs at least one preset")
        scores = self.scores()
        for k in range(1, len(scores)):
            if not scores[k] > scores[k - 1]:
                raise ConfigurationError(
                    f"preset scores must increase strictly, got {scores}")

    def scores(self) -> Tuple[float, ...]:
        return tuple(aggressiveness_score(a, self.reference_h) for a in self.presets)


DEFAULT_POLICY = StylePolicy(presets=(
    AlphaVector((1.0, 0.0)),
    AlphaVector((0.75, 0.25)),
    AlphaVector((0.5, 0.5)),
    AlphaVector((0.25, 0.75)),
    AlphaVector((0.0, 1.0)),
))


def select_alpha(alpha_j_hat: AlphaVector, policy: StylePolicy) -> AlphaVector:
    """Mirror the estimated style: rank it among the presets, pick the rank's
    reflection, so an aggressive other driver draws a conservative ego.  A
    score exactly between two presets counts as the more aggressive one."""
    s = aggressiveness_score(alpha_j_hat, policy.reference_h)
    scores = policy.scores()
    best_k = 0
    best_d = abs(s - scores[0])
    for k in range(1, len(scores)):
        d = abs(s - scores[k])
        if d <= best_d:
            best_d = d
            best_k = k
    return policy.presets[len(policy.presets) - 1 - best_k]


@dataclass
class AdaptiveRecord:
    """Everything one adaptive run produced."""

    trial: TrialRecord
    prediction_enabled: bool
    phase_budget: int
    hdot_mode: str
    enforce_compatibility: bool
    estimate_history: Tuple[AlphaEstimate, ...] = ()
    sample_steps: Tuple[int, ...] = ()
    selected_alpha: Optional[AlphaVector] = None
    final_estimate: Optional[AlphaEstimate] = None
    converged_at: Optional[int] = None
    converged_within_budget: bool = False
    compat_rows_dropped: int = 0


def run_adaptive_merge(cfg: ScenarioConfig,
                       policy: StylePolicy = DEFAULT_POLICY,
                       ridge: Optional[RidgeConfig] = None,
                       phase_budget: int = 300,
                       prediction_enabled: bool = True,
                       hdot_mode: str = "finite_diff",
                       enforce_compatibility: bool = True) -> AdaptiveRecord:
    """Two-phase merge: observe and fit for phase_budget steps, then drive
    with the mirrored style (plus the compatibility row once the estimate has
    converged).  With prediction disabled the ego just keeps its configured
    style, which makes paired runs directly comparable.

    The roster must contain exactly one ego, exactly one object (the vehicle
    being identified), and at least one neighbor; the object is observed
    against the first neighbor.
    """
    if hdot_mode not in HDOT_MODES:
        raise ConfigurationError(f"unknown hdot_mode {hdot_mode!r}")
    if phase_budget < 1:
        raise ConfigurationError(f"phase_budget must be >= 1, got {phase_budget}")
    ridge = ridge if ridge is not None else RidgeConfig(q_hypothesis=cfg.safety.q)

    ego_idx = obj_idx = nbr_idx = None
    for v, spec in enumerate(cfg.vehicles):
        if spec.role == "ego":
            if ego_idx is not None:
                raise ConfigurationError("scenario must have exactly one ego")
            ego_idx = v
        elif spec.role == "object":
            if obj_idx is not None:
                raise ConfigurationError("scenario must have exactly one object")
            obj_idx = v
        elif nbr_idx is None:
            nbr_idx = v
    if ego_idx is None or obj_idx is None or nbr_idx is None:
        raise ConfigurationError("adaptive run needs ego, object, and neighbor roles")

    dt = cfg.dt
    safety = cfg.safety
    learner = StyleLearner(ridge)
    state: Dict[str, object] = {
        "ego_alpha": cfg.vehicles[ego_idx].alpha,
        "selected": None,
        "sample_steps": [],
    }

    def alpha_fn(t: int, v: int) -> AlphaVector:
        if v == ego_idx:
            return state["ego_alpha"]
        return cfg.vehicles[v].alpha

    def on_step(t_next: int, prev: List[VehicleState], cur: List[VehicleState]):
        if prediction_enabled and t_next <= phase_budget and not learner.converged:
            u_obs = (cur[obj_idx].velocity - prev[obj_idx].velocity) / dt
            if learner.admits(u_obs):
                if hdot_mode == "analytic":
                    sample = observe_analytic(prev[obj_idx], prev[nbr_idx], u_obs,
                                              safety, dt, step=t_next - 1)
                else:
                    sample = observe(cur[obj_idx], cur[nbr_idx],
                                     prev[obj_idx], prev[nbr_idx],
                                     safety, dt, step=t_next)
                learner.add(sample)
                state["sample_steps"].append(t_next)
        if t_next == phase_budget and prediction_enabled and learner.estimate is not None:
            chosen = select_alpha(learner.estimate.alpha_hat, policy)
            state["selected"] = chosen
            state["ego_alpha"] = chosen

    def extra_rows_fn(t: int, v: int, cur: List[VehicleState]):
        if (v != ego_idx or not enforce_compatibility or not prediction_enabled
                or t < phase_budget or not learner.converged):
            return ()
        est = learner.estimate
        if est is None:
            return ()
        row = compatibility_constraint(cur[ego_idx], cur[obj_idx],
                                       state["ego_alpha"], est.alpha_hat,
                                       safety, dt)
        return (row.as_pair(),)

    trial = simulate(cfg, alpha_fn=alpha_fn, extra_rows_fn=extra_rows_fn,
                     on_step=on_step)

    est = learner.estimate
    return AdaptiveRecord(
        trial=trial,
        prediction_enabled=prediction_enabled,
        phase_budget=phase_budget,
        hdot_mode=hdot_mode,
        enforce_compatibility=enforce_compatibility,
        estimate_history=tuple(learner.history),
        sample_steps=tuple(state["sample_steps"]),
        selected_alpha=state["selected"],
        final_estimate=est,
        converged_at=learner.converged_at,
        converged_within_budget=learner.converged,
        compat_rows_dropped=trial.relaxed_steps,
    )


# ---------------------------------------------------------------------------
# Sufficiency stress test for the compatibility row.

@dataclass(frozen=True)
class MismatchTrial:
    """One stress trial: the object filtered under a constant-velocity belief
    about the ego while the ego's inputs obeyed only the compatibility row."""

    alpha_i: AlphaVector
    alpha_j: AlphaVector
    min_h: float
    ego_row_infeasible: int
    object_infeasible: int


def experiment_assumption_mismatch(n_trials: int = 100, seed: int = 0,
                                   safety: SafetyConfig = SafetyConfig(),
                                   dt: float = 0.01, n_steps: int = 1200,
                                   ego_accel_bound: float = 2.5,
                                   object_limits: ControlLimits = ControlLimits(
                                       (-80.0, -80.0), (80.0, 80.0)),
                                   ) -> List[MismatchTrial]:
    """Pairwise safety when the object's model of the ego is plain wrong.

    The object runs the ordinary safety filter assuming the ego holds
    constant velocity.  The ego ignores safety entirely: each step it draws
    a random forward-biased acceleration and keeps the nearest input that
    satisfies its style-compatibility row against the object.  The ego's
    style is sampled componentwise above the object's, which keeps that row
    satisfiable (zero input always qualifies while clearance is nonnegative),
    and under those two constraint sets alone the pair must stay clear.

    The guarantee presumes both constraint sets are actually enforced, so
    the object gets actuator limits wide enough that its filter never
    saturates against the pressing ego; each trial reports residual
    infeasible steps on either side so that presumption is checkable.
    """
    seeds = np.random.SeedSequence(seed).spawn(n_trials)
    bound = float(ego_accel_bound)
    trials: List[MismatchTrial] = []
    for idx in range(n_trials):
        rng = np.random.Generator(np.random.PCG64(seeds[idx]))
        alpha_j = AlphaVector(tuple(rng.uniform(0.0, 1.0, size=safety.q)))
        alpha_i = AlphaVector(tuple(c + e for c, e in
                                    zip(alpha_j.coefficients,
                                        rng.uniform(0.0, 1.0, size=safety.q))))
        v_obj = rng.uniform(9.0, 10.5)
        v_ego = v_obj + rng.uniform(-0.3, 0.8)
        h0 = rng.uniform(20.0, 60.0)
        d0 = math.sqrt(h0 + safety.r_safe * safety.r_safe)
        ego = VehicleState((0.0, 0.0), (v_ego, 0.0))
        obj = VehicleState((d0, 0.0), (v_obj, 0.0))
        plan_obj = NominalPlan(v_obj, (1.0, 0.0), 0.8)

        min_h = safety_value(ego.position, obj.position, safety)
        ego_bad = obj_bad = 0
        for _ in range(n_steps):
            sol_j = safe_control(obj, [(ego, None)], alpha_j, plan_obj,
                                 safety, object_limits, dt)
            if not sol_j.feasible:
                obj_bad += 1
            row = compatibility_constraint(ego, obj, alpha_i, alpha_j, safety, dt)
            raw_x = rng.uniform(-0.3 * bound, bound)
            raw_y = rng.uniform(-0.2, 0.2)
            ux, uy, ok, _, _ = _solve_scalar(
                raw_x, raw_y, -bound, -bound, bound, bound,
                ((float(row.a[0]), float(row.a[1]), float(row.b)),))
            if not ok:
                ego_bad += 1
            ego = step(ego, (ux, uy), dt)
            obj = step(obj, sol_j.u, dt)
            h = safety_value(ego.position, obj.position, safety)
            if h < min_h:
                min_h = h
        trials.append(MismatchTrial(alpha_i, alpha_j, float(min_h),
                                    ego_bad, obj_bad))
    return trials
