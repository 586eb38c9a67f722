"""Ramp-merge world: road geometry, trial engine, and experiment drivers.

A scenario is a straight main road met by a straight on-ramp at a merge
point.  Vehicles track a route (main, ramp, or a fixed heading), each running
its own minimal-deviation safety filter against every other vehicle, and all
states advance synchronously from the same previous-step snapshot, so trials
are deterministic functions of their configuration.

Progress along a route is measured as signed arc length to the merge point
(negative before it); a vehicle has completed the merge once its progress
turns positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .barrier import AlphaVector, SafetyConfig, kappa
from .controller import DEFAULT_LIMITS, ControlLimits, _solve_scalar
from .dynamics import VehicleState
from .errors import ConfigurationError
from .learner import RidgeConfig, StyleLearner, observe, observe_analytic

__all__ = [
    "RoadGeometry",
    "VehicleSpec",
    "ScenarioConfig",
    "TrajectoryLog",
    "TrialMetrics",
    "TrialRecord",
    "default_geometry",
    "run_trial",
    "simulate",
    "PredictionTrial",
    "PredictionSummary",
    "prediction_trial_setup",
    "experiment_prediction",
    "SweepEntry",
    "sweep_trial_config",
    "experiment_behavior_sweep",
    "gamma_sweep_settings",
    "invariance_trial_setup",
    "experiment_invariance",
    "AdaptiveComparison",
    "adaptive_preset_config",
    "experiment_prediction_in_loop",
    "COLLISION_TOL",
]

# A pair is considered in collision when its clearance drops below this.
COLLISION_TOL = -1e-9

ROUTES = ("main", "ramp", "fixed")
ROLES = ("ego", "object", "neighbor")


@dataclass(frozen=True)
class RoadGeometry:
    """Straight main road and straight ramp meeting it at the merge point.

    Travel directions come from pure pursuit: a vehicle aims at the route
    point `lookahead` metres of arc ahead of its own projection, so a vehicle
    displaced off its lane steers back onto it instead of drifting parallel
    forever, and ramp traffic blends onto the main road through the merge
    rather than turning on a hinge.
    """

    main_start: np.ndarray
    main_end: np.ndarray
    ramp_start: np.ndarray
    merge_point: np.ndarray
    lookahead: float = 20.0

    def __post_init__(self):
        for name in ("main_start", "main_end", "ramp_start", "merge_point"):
            v = np.asarray(getattr(self, name), dtype=np.float64).reshape(2).copy()
            if not np.isfinite(v).all():
                raise ConfigurationError(f"{name} has non-finite components")
            v.flags.writeable = False
            object.__setattr__(self, name, v)
        if not (math.isfinite(self.lookahead) and self.lookahead > 0.0):
            raise ConfigurationError(f"lookahead must be > 0, got {self.lookahead}")
        main_vec = self.main_end - self.main_start
        main_len = math.hypot(main_vec[0], main_vec[1])
        if main_len == 0.0:
            raise ConfigurationError("main road has zero length")
        ramp_vec = self.merge_point - self.ramp_start
        ramp_len = math.hypot(ramp_vec[0], ramp_vec[1])
        if ramp_len == 0.0:
            raise ConfigurationError("ramp start coincides with the merge point")
        # The merge point must lie on the main segment.
        rel = self.merge_point - self.main_start
        proj = (rel @ main_vec) / main_len
        off_axis = abs(rel[0] * main_vec[1] - rel[1] * main_vec[0]) / main_len
        if off_axis > 1e-6 or proj < -1e-6 or proj > main_len + 1e-6:
            raise ConfigurationError("merge_point does not lie on the main road segment")
        object.__setattr__(self, "main_dir", main_vec / main_len)
        object.__setattr__(self, "ramp_dir", ramp_vec / ramp_len)
        object.__setattr__(self, "ramp_length", ramp_len)

    def direction(self, route: str, position, heading=None) -> np.ndarray:
        """Unit travel direction for a vehicle of the given route at a position."""
        if route == "fixed":
            if heading is None:
                raise ConfigurationError("fixed-route vehicles need a heading")
            return np.asarray(heading, dtype=np.float64)
        if route not in ("main", "ramp"):
            raise ConfigurationError(f"unknown route {route!r}")
        pxf, pyf = float(position[0]), float(position[1])
        target = self.progress(route, (pxf, pyf)) + self.lookahead
        if route == "ramp" and target < 0.0:
            dx, dy = float(self.ramp_dir[0]), float(self.ramp_dir[1])
        else:
            dx, dy = float(self.main_dir[0]), float(self.main_dir[1])
        tx = float(self.merge_point[0]) + target * dx
        ty = float(self.merge_point[1]) + target * dy
        ddx, ddy = tx - pxf, ty - pyf
        norm = math.hypot(ddx, ddy)
        if norm <= 1e-9:
            # Standing on the aim point: fall back to the local tangent.
            return np.array([dx, dy])
        return np.array([ddx / norm, ddy / norm])

    def progress(self, route: str, position) -> float:
        """Signed arc length to the merge point; NaN for fixed-heading vehicles."""
        if route == "fixed":
            return math.nan
        px = float(position[0]) - float(self.merge_point[0])
        py = float(position[1]) - float(self.merge_point[1])
        if route == "main":
            return px * float(self.main_dir[0]) + py * float(self.main_dir[1])
        if route == "ramp":
            along_ramp = px * float(self.ramp_dir[0]) + py * float(self.ramp_dir[1])
            if along_ramp < 0.0:
                return along_ramp
            return px * float(self.main_dir[0]) + py * float(self.main_dir[1])
        raise ConfigurationError(f"unknown route {route!r}")

    def place(self, route: str, progress: float) -> np.ndarray:
        """Route point at a given signed arc distance from the merge."""
        if route == "main":
            return self.merge_point + progress * self.main_dir
        if route == "ramp":
            d = self.ramp_dir if progress < 0.0 else self.main_dir
            return self.merge_point + progress * d
        raise ConfigurationError(f"cannot place a fixed-route vehicle by progress")


def default_geometry(merge_x: float = 100.0, ramp_angle_deg: float = 15.0,
                     ramp_length: float = 120.0) -> RoadGeometry:
    """Main road along +x through the origin, ramp approaching from below."""
    angle = math.radians(ramp_angle_deg)
    merge = np.array([merge_x, 0.0])
    ramp_dir = np.array([math.cos(angle), math.sin(angle)])
    return RoadGeometry(
        main_start=np.array([merge_x - 250.0, 0.0]),
        main_end=np.array([merge_x + 250.0, 0.0]),
        ramp_start=merge - ramp_length * ramp_dir,
        merge_point=merge,
    )


@dataclass(frozen=True)
class VehicleSpec:
    """One roster entry: identity, route placement, style, and limits."""

    name: str
    role: str = "neighbor"
    route: str = "main"
    start_progress: float = -80.0
    speed: float = 10.0
    desired_speed: float = 10.0
    gain: float = 0.8
    alpha: AlphaVector = AlphaVector((1.0, 0.0))
    limits: ControlLimits = DEFAULT_LIMITS
    start_position: Optional[Tuple[float, float]] = None
    heading: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigurationError(f"unknown role {self.role!r}")
        if self.route not in ROUTES:
            raise ConfigurationError(f"unknown route {self.route!r}")
        if self.route == "fixed" and (self.start_position is None or self.heading is None):
            raise ConfigurationError("fixed-route vehicles need start_position and heading")

    def initial_state(self, geom: RoadGeometry) -> VehicleState:
        if self.route == "fixed":
            d = np.asarray(self.heading, dtype=np.float64)
            d = d / math.hypot(d[0], d[1])
            return VehicleState(np.asarray(self.start_position, dtype=np.float64),
                                self.speed * d)
        pos = geom.place(self.route, self.start_progress)
        d = geom.direction(self.route, pos, self.heading)
        return VehicleState(pos, self.speed * d)


@dataclass(frozen=True)
class ScenarioConfig:
    """Full trial description; a trial is a deterministic function of this."""

    geometry: RoadGeometry
    vehicles: Tuple[VehicleSpec, ...]
    dt: float = 0.01
    n_steps: int = 3000
    safety: SafetyConfig = SafetyConfig()
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if self.n_steps < 1:
            raise ConfigurationError(f"n_steps must be >= 1, got {self.n_steps}")
        names = [v.name for v in self.vehicles]
        if len(names) != len(set(names)):
            raise ConfigurationError(f"vehicle names must be unique, got {names}")
        if len(names) == 0:
            raise ConfigurationError("scenario needs at least one vehicle")


@dataclass
class TrajectoryLog:
    """Dense per-step record of a trial.

    states[t, v] = (x, y, vx, vy) before step t; row n_steps is the final
    state.  inputs[t, v] is the acceleration applied at step t (zero-filled on
    the final row, where no step follows).  pair_h[t, p] is the clearance of
    pairs[p] at step t, and feasible[t, v] is False where the filter QP had to
    fall back.
    """

    names: Tuple[str, ...]
    pairs: Tuple[Tuple[int, int], ...]
    dt: float
    states: np.ndarray
    inputs: np.ndarray
    pair_h: np.ndarray
    feasible: np.ndarray


@dataclass
class TrialMetrics:
    """Safety and completion summary of one trial."""

    min_h: Dict[Tuple[str, str], float]
    merge_step: Dict[str, Optional[int]]
    infeasible_step_count: int
    collision: bool


@dataclass
class TrialRecord:
    log: TrajectoryLog
    metrics: TrialMetrics
    relaxed_steps: int = 0


def simulate(cfg: ScenarioConfig,
             alpha_fn: Optional[Callable[[int, int], AlphaVector]] = None,
             extra_rows_fn: Optional[Callable[[int, int, List[VehicleState]], Sequence]] = None,
             on_step: Optional[Callable[[int, List[VehicleState], List[VehicleState]], object]] = None,
             ) -> TrialRecord:
    """Run one synchronous trial.

    Hooks: alpha_fn(t, v) overrides vehicle v's style at step t; extra_rows_fn
    appends pre-built QP rows (dropped for the step, and counted, if they make
    the QP infeasible while the safety rows alone are satisfiable); on_step is
    called after each advance with the previous and new state snapshots, and
    may return truthy to end the trial early (the new step is still logged,
    and all per-step arrays are truncated to the steps actually run).
    """
    geom = cfg.geometry
    vehicles = cfg.vehicles
    n = len(vehicles)
    N = cfg.n_steps
    dt = cfg.dt
    r2 = cfg.safety.r_safe * cfg.safety.r_safe
    pairs = tuple((i, j) for i in range(n) for j in range(i + 1, n))

    # The hot loop runs on scalars, mirroring nominal_control,
    # build_safety_constraint, kappa, and step operation for operation; a
    # dedicated test pins the equivalence against the library path.
    init = [v.initial_state(geom) for v in vehicles]
    px = [float(s.position[0]) for s in init]
    py = [float(s.position[1]) for s in init]
    vx = [float(s.velocity[0]) for s in init]
    vy = [float(s.velocity[1]) for s in init]
    alphas = [v.alpha for v in vehicles]
    gains = [v.gain for v in vehicles]
    desired = [v.desired_speed for v in vehicles]
    lo_x = [float(v.limits.u_min[0]) for v in vehicles]
    lo_y = [float(v.limits.u_min[1]) for v in vehicles]
    hi_x = [float(v.limits.u_max[0]) for v in vehicles]
    hi_y = [float(v.limits.u_max[1]) for v in vehicles]
    mx, my = float(geom.merge_point[0]), float(geom.merge_point[1])
    # Raw unit route tangents; the pursuit direction and then the nominal
    # plan each renormalize their own copy, in that order, mirroring the
    # library operations exactly.
    rtx, rty = float(geom.ramp_dir[0]), float(geom.ramp_dir[1])
    mtx, mty = float(geom.main_dir[0]), float(geom.main_dir[1])
    look = float(geom.lookahead)
    fixed_dir = []
    for v in vehicles:
        if v.route == "fixed":
            hn = math.hypot(float(v.heading[0]), float(v.heading[1]))
            fixed_dir.append((float(v.heading[0]) / hn, float(v.heading[1]) / hn))
        else:
            fixed_dir.append(None)

    states = np.empty((N + 1, n, 4))
    inputs = np.zeros((N + 1, n, 2))
    pair_h = np.empty((N + 1, len(pairs)))
    feasible = np.ones((N + 1, n), dtype=bool)
    merge_step: Dict[str, Optional[int]] = {v.name: None for v in vehicles}
    relaxed = 0
    stop = False
    n_logged = N + 1
    want_states = extra_rows_fn is not None or on_step is not None
    carried: Optional[List[VehicleState]] = None

    def snapshot() -> List[VehicleState]:
        return [VehicleState((px[v], py[v]), (vx[v], vy[v])) for v in range(n)]

    for t in range(N + 1):
        for v in range(n):
            states[t, v, 0] = px[v]
            states[t, v, 1] = py[v]
            states[t, v, 2] = vx[v]
            states[t, v, 3] = vy[v]
        for p, (i, j) in enumerate(pairs):
            dxx = px[i] - px[j]
            dyy = py[i] - py[j]
            pair_h[t, p] = dxx * dxx + dyy * dyy - r2
        for v, spec in enumerate(vehicles):
            if merge_step[spec.name] is None and spec.route != "fixed":
                if geom.progress(spec.route, (px[v], py[v])) > 0.0:
                    merge_step[spec.name] = t
        if t == N or stop:
            n_logged = t + 1
            break

        if want_states:
            cur_states = carried if carried is not None else snapshot()
        else:
            cur_states = None
        new_u = []
        for v, spec in enumerate(vehicles):
            alpha = alpha_fn(t, v) if alpha_fn is not None else alphas[v]
            coeffs = alpha.coefficients
            if spec.route == "fixed":
                dir_x, dir_y = fixed_dir[v]
            else:
                if spec.route == "ramp":
                    s = (px[v] - mx) * rtx + (py[v] - my) * rty
                    if s >= 0.0:
                        s = (px[v] - mx) * mtx + (py[v] - my) * mty
                else:
                    s = (px[v] - mx) * mtx + (py[v] - my) * mty
                target = s + look
                if spec.route == "ramp" and target < 0.0:
                    ax_, ay_ = rtx, rty
                else:
                    ax_, ay_ = mtx, mty
                ddx = mx + target * ax_ - px[v]
                ddy = my + target * ay_ - py[v]
                nn = math.hypot(ddx, ddy)
                if nn <= 1e-9:
                    dir_x, dir_y = ax_, ay_
                else:
                    dir_x, dir_y = ddx / nn, ddy / nn
                n2 = math.hypot(dir_x, dir_y)
                dir_x, dir_y = dir_x / n2, dir_y / n2
            ub_x = gains[v] * (desired[v] * dir_x - vx[v])
            ub_y = gains[v] * (desired[v] * dir_y - vy[v])
            ub_x = min(max(ub_x, lo_x[v]), hi_x[v])
            ub_y = min(max(ub_y, lo_y[v]), hi_y[v])

            rows = []
            for w in range(n):
                if w == v:
                    continue
                dxx = px[v] - px[w]
                dyy = py[v] - py[w]
                h = dxx * dxx + dyy * dyy - r2
                total = 0.0
                term = h
                h2 = h * h
                for c in coeffs:
                    total += c * term
                    term *= h2
                b = (2.0 * (dxx * (vx[v] - vx[w]) + dyy * (vy[v] - vy[w]))
                     + total)
                rows.append((-2.0 * dxx * dt, -2.0 * dyy * dt, b))
            n_safety = len(rows)
            if extra_rows_fn is not None:
                for a, b in extra_rows_fn(t, v, cur_states):
                    rows.append((float(a[0]), float(a[1]), float(b)))

            ux, uy, ok, _, _ = _solve_scalar(ub_x, ub_y, lo_x[v], lo_y[v],
                                             hi_x[v], hi_y[v], rows)
            if len(rows) > n_safety and not ok:
                # The appended rows are advisory relative to the safety rows:
                # rather than let the fallback trade safety slack for them,
                # drop them for this step and record that we did.
                ux, uy, ok, _, _ = _solve_scalar(ub_x, ub_y, lo_x[v], lo_y[v],
                                                 hi_x[v], hi_y[v], rows[:n_safety])
                if ok:
                    relaxed += 1
            new_u.append((ux, uy))
            inputs[t, v, 0] = ux
            inputs[t, v, 1] = uy
            if not ok:
                feasible[t, v] = False

        for v in range(n):
            ux, uy = new_u[v]
            vx[v] = vx[v] + ux * dt
            vy[v] = vy[v] + uy * dt
            px[v] = px[v] + vx[v] * dt
            py[v] = py[v] + vy[v] * dt
        if on_step is not None:
            carried = snapshot()
            stop = bool(on_step(t + 1, cur_states, carried))

    states = states[:n_logged]
    inputs = inputs[:n_logged]
    pair_h = pair_h[:n_logged]
    feasible = feasible[:n_logged]
    names = tuple(v.name for v in vehicles)
    min_h = {(names[i], names[j]): float(pair_h[:, p].min())
             for p, (i, j) in enumerate(pairs)}
    collision = any(v < COLLISION_TOL for v in min_h.values()) if min_h else False
    metrics = TrialMetrics(
        min_h=min_h,
        merge_step=dict(merge_step),
        infeasible_step_count=int((~feasible[: n_logged - 1]).sum()),
        collision=collision,
    )
    log = TrajectoryLog(names, pairs, dt, states, inputs, pair_h, feasible)
    return TrialRecord(log, metrics, relaxed)


def run_trial(cfg: ScenarioConfig) -> TrialRecord:
    """Simulate the scenario as configured, every vehicle using its own style."""
    return simulate(cfg)


# ---------------------------------------------------------------------------
# Style-prediction experiment: observe a follower/leader interaction and
# recover the follower's style coefficients from clearance data alone.

@dataclass
class PredictionTrial:
    truth: AlphaVector
    estimate_alpha: Tuple[float, ...]
    rmse: float
    converged_at: Optional[int]
    n_admitted: int
    estimate_series: Tuple[Tuple[float, ...], ...]


@dataclass
class PredictionSummary:
    mode: str
    seed: int
    trials: List[PredictionTrial]

    @property
    def mean_rmse(self) -> float:
        return float(np.mean([t.rmse for t in self.trials]))

    @property
    def max_convergence_samples(self) -> Optional[int]:
        steps = [t.converged_at for t in self.trials]
        if any(s is None for s in steps):
            return None
        return max(steps)


def _sample_truth_alpha(rng: np.random.Generator, trial_index: int, q: int) -> AlphaVector:
    """Random style; every third trial degenerates to a single surviving term
    (the classic one-parameter barrier and its pure high-order counterpart)."""
    coeffs = rng.uniform(0.05, 1.0, size=q)
    if trial_index % 3 == 2:
        keep = (trial_index // 3) % q
        coeffs = np.zeros(q)
        coeffs[keep] = rng.uniform(0.4, 1.0)
    return AlphaVector(tuple(coeffs))


def _activation_clearance(alpha: AlphaVector, closing: float, r_safe: float) -> float:
    """Clearance below which a style's filter starts overriding a pursuit at
    the given closing speed: kappa(alpha, h) = 2 d(h) closing, solved for h."""
    def gap(h: float) -> float:
        return kappa(alpha, h) - 2.0 * math.sqrt(h + r_safe * r_safe) * closing

    lo, hi = 0.0, 1.0
    while gap(hi) < 0.0 and hi < 1e6:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return hi


def _prediction_trial_config(geom: RoadGeometry, safety: SafetyConfig, dt: float,
                             n_steps: int, truth: AlphaVector,
                             rng: np.random.Generator,
                             closing_range: Tuple[float, float],
                             margin_range: Tuple[float, float]) -> ScenarioConfig:
    """Follower closing slowly on a constant-speed leader in the same lane.

    The leader's style dominates the follower's everywhere, so its own filter
    never binds and it genuinely cruises at constant velocity: every braking
    action seen on the follower is its style speaking.  The follower starts
    just outside its own activation clearance, so the episode begins within a
    bounded sim time and the barrier path stays within actuator limits.
    """
    leader_speed = rng.uniform(8.0, 10.0)
    closing = rng.uniform(*closing_range)
    h_start = _activation_clearance(truth, closing, safety.r_safe) + rng.uniform(*margin_range)
    gap = math.sqrt(h_start + safety.r_safe ** 2)
    leader_progress = rng.uniform(-40.0, -30.0)
    leader = VehicleSpec(
        name="leader", role="neighbor", route="main",
        start_progress=leader_progress, speed=leader_speed,
        desired_speed=leader_speed, gain=0.8,
        alpha=AlphaVector((5.0, 5.0)),
    )
    follower = VehicleSpec(
        name="object", role="object", route="main",
        start_progress=leader_progress - gap, speed=leader_speed + closing,
        desired_speed=leader_speed + closing, gain=0.8,
        alpha=truth,
    )
    return ScenarioConfig(geometry=geom, vehicles=(follower, leader),
                          dt=dt, n_steps=n_steps, safety=safety, seed=0)


def prediction_trial_setup(trial_index: int, seed: int = 0, q: int = 2,
                           safety: SafetyConfig = SafetyConfig(),
                           dt: float = 0.01, n_steps: int = 4000,
                           closing_range: Tuple[float, float] = (0.5, 0.9),
                           margin_range: Tuple[float, float] = (1.0, 2.5),
                           ) -> Tuple[AlphaVector, ScenarioConfig]:
    """Ground truth and scenario for one identification trial.

    Trials are addressed by index under a parent seed (child seeds depend
    only on the index), so any single trial can be rebuilt on its own, e.g.
    to dump its trajectory, without rerunning the batch around it.
    """
    child = np.random.SeedSequence(seed).spawn(trial_index + 1)[trial_index]
    rng = np.random.Generator(np.random.PCG64(child))
    truth = _sample_truth_alpha(rng, trial_index, q)
    cfg = _prediction_trial_config(default_geometry(), safety, dt, n_steps, truth,
                                   rng, closing_range, margin_range)
    return truth, cfg


def experiment_prediction(n_trials: int = 30, seed: int = 0, mode: str = "analytic",
                          ridge: Optional[RidgeConfig] = None,
                          safety: SafetyConfig = SafetyConfig(),
                          dt: float = 0.01, n_steps: int = 4000,
                          closing_range: Tuple[float, float] = (0.5, 0.9),
                          margin_range: Tuple[float, float] = (1.0, 2.5),
                          sample_cap: Optional[int] = None) -> PredictionSummary:
    """Recover randomized ground-truth styles from observed interactions.

    mode selects the clearance-rate observer: "analytic" rebuilds the exact
    one-step rate from the object's recovered acceleration; "finite_diff"
    differentiates the measured clearance itself and inherits an O(dt) bias,
    so it is best run at a finer dt than the control-rate default (pass
    sample_cap to bound how long each trial keeps collecting).

    Admission mirrors what an outside observer can do: the object cruises at
    its initial velocity until the interaction starts, so its task input is
    estimated as a cruise-restoring law toward that initial velocity, and a
    sample is admitted only when the seen input deviates from it (the filter
    is overriding, hence the safety constraint is active).  Steps where the
    object's input sits on its actuator limit are rejected too: a saturated
    input reveals the actuator, not the style.
    """
    if mode not in ("analytic", "finite_diff"):
        raise ConfigurationError(f"unknown observation mode {mode!r}")
    ridge = ridge if ridge is not None else RidgeConfig(q_hypothesis=safety.q)
    trials: List[PredictionTrial] = []
    for idx in range(n_trials):
        truth, cfg = prediction_trial_setup(idx, seed=seed, q=ridge.q_hypothesis,
                                            safety=safety, dt=dt, n_steps=n_steps,
                                            closing_range=closing_range,
                                            margin_range=margin_range)
        learner = StyleLearner(ridge)
        cruise_v = None
        gain = cfg.vehicles[0].gain
        lim = cfg.vehicles[0].limits

        def observe_step(t: int, prev: List[VehicleState], cur: List[VehicleState]):
            nonlocal cruise_v
            if learner.converged:
                return True
            if cruise_v is None:
                cruise_v = prev[0].velocity
            u_obs = (cur[0].velocity - prev[0].velocity) / dt
            u_nominal_est = gain * (cruise_v - prev[0].velocity)
            if not learner.admits(u_obs, u_nominal_est):
                return False
            saturated = any(
                u_obs[c] <= lim.u_min[c] + 1e-3 or u_obs[c] >= lim.u_max[c] - 1e-3
                for c in range(2))
            if saturated:
                return False
            if mode == "analytic":
                sample = observe_analytic(prev[0], prev[1], u_obs, safety, dt, step=t - 1)
            else:
                sample = observe(cur[0], cur[1], prev[0], prev[1], safety, dt, step=t)
            learner.add(sample)
            if sample_cap is not None and len(learner.samples) >= sample_cap:
                return True
            return learner.converged

        simulate(cfg, on_step=observe_step)
        est = learner.estimate
        if est is None:
            alpha_hat = tuple(0.0 for _ in range(ridge.q_hypothesis))
        else:
            alpha_hat = est.alpha_hat.coefficients
        err = np.array(alpha_hat) - np.array(truth.coefficients)
        rmse = float(np.sqrt(np.mean(err ** 2)))
        trials.append(PredictionTrial(
            truth=truth,
            estimate_alpha=alpha_hat,
            rmse=rmse,
            converged_at=learner.converged_at,
            n_admitted=len(learner.samples),
            estimate_series=tuple(e.alpha_hat.coefficients for e in learner.history),
        ))
    return PredictionSummary(mode=mode, seed=seed, trials=trials)


# ---------------------------------------------------------------------------
# Behavior sweep: hold the other vehicle's style fixed, sweep the ego's, and
# compare approach distance and merge order.

@dataclass
class SweepEntry:
    alpha: AlphaVector
    distance: np.ndarray
    min_distance: float
    min_h: float
    ego_merge_step: Optional[int]
    other_merge_step: Optional[int]
    infeasible_step_count: int

    @property
    def ego_first(self) -> Optional[bool]:
        if self.ego_merge_step is None or self.other_merge_step is None:
            return None
        return self.ego_merge_step < self.other_merge_step

    @property
    def merge_order(self) -> Optional[str]:
        first = self.ego_first
        if first is None:
            return None
        return "front" if first else "behind"


def sweep_trial_config(alpha: AlphaVector,
                       other_alpha: AlphaVector = AlphaVector((0.75, 0.25)),
                       safety: SafetyConfig = SafetyConfig(),
                       dt: float = 0.01, n_steps: int = 3200,
                       ramp_angle_deg: float = 30.0,
                       ego_progress: float = -40.0,
                       other_progress: float = -40.0,
                       ego_speed: float = 3.0,
                       other_speed: float = 3.0,
                       accel_bound: float = 8.0) -> ScenarioConfig:
    """Two-vehicle merge for one point of a style sweep: the ego on the main
    road with the swept style, the other vehicle on the ramp with a fixed one."""
    geom = default_geometry(ramp_angle_deg=ramp_angle_deg)
    limits = ControlLimits((-accel_bound, -accel_bound), (accel_bound, accel_bound))
    ego = VehicleSpec(name="ego", role="ego", route="main",
                      start_progress=ego_progress, speed=ego_speed,
                      desired_speed=ego_speed, gain=0.8, alpha=alpha,
                      limits=limits)
    other = VehicleSpec(name="other", role="neighbor", route="ramp",
                        start_progress=other_progress, speed=other_speed,
                        desired_speed=other_speed, gain=0.8, alpha=other_alpha,
                        limits=limits)
    return ScenarioConfig(geometry=geom, vehicles=(ego, other), dt=dt,
                          n_steps=n_steps, safety=safety, seed=0)


def experiment_behavior_sweep(styles: Sequence[AlphaVector],
                              other_alpha: AlphaVector = AlphaVector((0.75, 0.25)),
                              safety: SafetyConfig = SafetyConfig(),
                              dt: float = 0.01, n_steps: int = 3200,
                              ramp_angle_deg: float = 30.0,
                              ego_progress: float = -40.0,
                              other_progress: float = -40.0,
                              ego_speed: float = 3.0,
                              other_speed: float = 3.0,
                              accel_bound: float = 8.0) -> List[SweepEntry]:
    """One merge trial per ego style against a fixed other-vehicle style.

    The default scenario is a steep, slow merge arriving at a dead tie.  The
    steep angle matters: the constraint pushes each vehicle away from the
    other, and the backward (progress-costing) share of that push grows with
    the merge angle, so at shallow angles a yield is a cheap sideways drift
    while here it decides the merge order.  Styles whose filter activates
    farther out than the other vehicle's concede the tie and merge behind;
    styles that activate closer in keep the nominal plan longer, the other
    vehicle concedes first, and the ego merges in front.
    """
    entries: List[SweepEntry] = []
    for alpha in styles:
        cfg = sweep_trial_config(alpha, other_alpha=other_alpha, safety=safety,
                                 dt=dt, n_steps=n_steps,
                                 ramp_angle_deg=ramp_angle_deg,
                                 ego_progress=ego_progress,
                                 other_progress=other_progress,
                                 ego_speed=ego_speed, other_speed=other_speed,
                                 accel_bound=accel_bound)
        rec = run_trial(cfg)
        delta = rec.log.states[:, 0, 0:2] - rec.log.states[:, 1, 0:2]
        distance = np.hypot(delta[:, 0], delta[:, 1])
        entries.append(SweepEntry(
            alpha=alpha,
            distance=distance,
            min_distance=float(distance.min()),
            min_h=min(rec.metrics.min_h.values()),
            ego_merge_step=rec.metrics.merge_step["ego"],
            other_merge_step=rec.metrics.merge_step["other"],
            infeasible_step_count=rec.metrics.infeasible_step_count,
        ))
    return entries


def gamma_sweep_settings() -> dict:
    """Scenario overrides for the one-parameter (q=1) sweep.

    A faster, shallower approach than the weight-sweep default: with the
    other vehicle nearly unyielding, the minimum approach distance is set by
    how far out the ego's own filter activates, which shrinks monotonically
    as the single gain grows, giving a well-separated distance ordering.
    """
    return dict(
        other_alpha=AlphaVector((5.0, 5.0)),
        ramp_angle_deg=8.0,
        ego_progress=-75.0,
        other_progress=-75.0,
        ego_speed=9.75,
        other_speed=9.75,
        accel_bound=5.0,
        n_steps=2200,
    )


# ---------------------------------------------------------------------------
# Randomized two-vehicle invariance trials.

def _invariance_trial_config(geom: RoadGeometry, safety: SafetyConfig, dt: float,
                             n_steps: int, rng: np.random.Generator,
                             speed_range: Tuple[float, float],
                             progress_range: Tuple[float, float]) -> ScenarioConfig:
    def random_alpha() -> AlphaVector:
        return AlphaVector(tuple(rng.uniform(0.0, 1.0, size=safety.q)))

    ego = VehicleSpec(name="ego", role="ego", route="main",
                      start_progress=rng.uniform(*progress_range),
                      speed=rng.uniform(*speed_range),
                      desired_speed=rng.uniform(*speed_range),
                      gain=0.8, alpha=random_alpha())
    other = VehicleSpec(name="other", role="neighbor", route="ramp",
                        start_progress=rng.uniform(*progress_range),
                        speed=rng.uniform(*speed_range),
                        desired_speed=rng.uniform(*speed_range),
                        gain=0.8, alpha=random_alpha())
    return ScenarioConfig(geometry=geom, vehicles=(ego, other), dt=dt,
                          n_steps=n_steps, safety=safety, seed=0)


def invariance_trial_setup(trial_index: int, seed: int = 0,
                           safety: SafetyConfig = SafetyConfig(),
                           dt: float = 0.01, n_steps: int = 1200,
                           ramp_angle_deg: float = 8.0,
                           speed_range: Tuple[float, float] = (9.0, 10.5),
                           progress_range: Tuple[float, float] = (-90.0, -60.0),
                           ) -> ScenarioConfig:
    """Scenario for one randomized invariance trial, addressable by index."""
    child = np.random.SeedSequence(seed).spawn(trial_index + 1)[trial_index]
    rng = np.random.Generator(np.random.PCG64(child))
    return _invariance_trial_config(default_geometry(ramp_angle_deg=ramp_angle_deg),
                                    safety, dt, n_steps, rng,
                                    speed_range, progress_range)


def experiment_invariance(n_trials: int = 100, seed: int = 0,
                          safety: SafetyConfig = SafetyConfig(),
                          dt: float = 0.01, n_steps: int = 1200,
                          ramp_angle_deg: float = 8.0,
                          speed_range: Tuple[float, float] = (9.0, 10.5),
                          progress_range: Tuple[float, float] = (-90.0, -60.0),
                          ) -> List[TrialMetrics]:
    """Randomized style pairs merging under their filters; returns per-trial metrics.

    The default ranges keep closing speeds at constraint activation within
    what the actuator box can track for every style pair in the unit square:
    the required deceleration while riding the barrier grows like
    kappa'(h) kappa(h) at the activation clearance, so a shallow merge angle
    and a narrow speed band are what make the no-collision guarantee hold
    all the way down to saturation-free operation.
    """
    out: List[TrialMetrics] = []
    for idx in range(n_trials):
        cfg = invariance_trial_setup(idx, seed=seed, safety=safety, dt=dt,
                                     n_steps=n_steps,
                                     ramp_angle_deg=ramp_angle_deg,
                                     speed_range=speed_range,
                                     progress_range=progress_range)
        out.append(run_trial(cfg).metrics)
    return out


# ---------------------------------------------------------------------------
# Prediction-in-the-loop: the same seeded three-vehicle merge run with the
# style learner enabled and disabled.

@dataclass
class AdaptiveComparison:
    enabled: "object"
    disabled: "object"
    ego_step_enabled: int
    ego_step_disabled: int
    overall_enabled: int
    overall_disabled: int

    @property
    def ego_delta_pct(self) -> float:
        return 100.0 * (self.ego_step_disabled - self.ego_step_enabled) / self.ego_step_disabled

    @property
    def overall_delta_pct(self) -> float:
        return 100.0 * (self.overall_disabled - self.overall_enabled) / self.overall_disabled


def adaptive_preset_config(seed: int = 0, n_steps: int = 3000,
                           safety: SafetyConfig = SafetyConfig(),
                           dt: float = 0.01,
                           ego_progress: float = -40.55,
                           object_alpha: AlphaVector = AlphaVector((0.9, 0.1)),
                           ) -> ScenarioConfig:
    """Canonical three-vehicle roster on the steep slow merge.

    The lead starts just ahead of the object on the ramp, below its own
    desired speed, so the object has to brake into its clearance bubble
    right away; that braking episode is what the ego observes.  The lead
    then accelerates away, ending the interaction and leaving the merge
    mouth open, and the ego meets the object there at a near tie, where
    whoever's filter activates farther out concedes the slot.
    """
    geom = default_geometry(ramp_angle_deg=30.0)
    limits = ControlLimits((-8.0, -8.0), (8.0, 8.0))
    # The lead's low gain stretches its climb to desired speed, which keeps
    # the object pressed against its clearance bubble (and braking, hence
    # observable) through the observation phase instead of a brief graze.
    lead = VehicleSpec(name="lead", role="neighbor", route="ramp",
                       start_progress=-33.6, speed=1.6, desired_speed=4.2,
                       gain=0.3, alpha=AlphaVector((0.75, 0.25)), limits=limits)
    obj = VehicleSpec(name="object", role="object", route="ramp",
                      start_progress=-40.0, speed=3.0, desired_speed=3.0,
                      gain=0.8, alpha=object_alpha, limits=limits)
    ego = VehicleSpec(name="ego", role="ego", route="main",
                      start_progress=ego_progress, speed=3.0, desired_speed=3.0,
                      gain=0.8, alpha=AlphaVector((1.0, 0.0)), limits=limits)
    return ScenarioConfig(geometry=geom, vehicles=(lead, obj, ego), dt=dt,
                          n_steps=n_steps, safety=safety, seed=seed)


def experiment_prediction_in_loop(seed: int = 0,
                                  cfg: Optional[ScenarioConfig] = None,
                                  policy=None, ridge: Optional[RidgeConfig] = None,
                                  phase_budget: int = 300,
                                  hdot_mode: str = "analytic") -> AdaptiveComparison:
    """Paired adaptive runs (prediction on/off) on the same configuration.

    Observation defaults to the analytic rate (the observer reconstructs the
    object's acceleration from consecutive velocities, which the model makes
    exact); pass hdot_mode="finite_diff" to difference clearances instead.
    """
    from .adaptive import DEFAULT_POLICY, run_adaptive_merge  # deferred: avoids cycle

    cfg = cfg if cfg is not None else adaptive_preset_config(seed=seed)
    policy = policy if policy is not None else DEFAULT_POLICY
    enabled = run_adaptive_merge(cfg, policy=policy, ridge=ridge,
                                 phase_budget=phase_budget, prediction_enabled=True,
                                 hdot_mode=hdot_mode)
    disabled = run_adaptive_merge(cfg, policy=policy, ridge=ridge,
                                  phase_budget=phase_budget, prediction_enabled=False,
                                  hdot_mode=hdot_mode)

    def completion(record, name):
        s = record.trial.metrics.merge_step[name]
        return s if s is not None else cfg.n_steps + 1

    def overall(record):
        return max(completion(record, v.name) for v in cfg.vehicles)

    return AdaptiveComparison(
        enabled=enabled, disabled=disabled,
        ego_step_enabled=completion(enabled, _ego_name(cfg)),
        ego_step_disabled=completion(disabled, _ego_name(cfg)),
        overall_enabled=overall(enabled),
        overall_disabled=overall(disabled),
    )


def _ego_name(cfg: ScenarioConfig) -> str:
    for v in cfg.vehicles:
        if v.role == "ego":
            return v.name
    raise ConfigurationError("scenario has no ego vehicle")
