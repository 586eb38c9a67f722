"""Safety filter QP: nominal law, constraint rows, exact solve, fallbacks."""
import numpy as np
import pytest

from helpers import qp_oracle, random_box_qp

from polycbf import (
    AlphaVector,
    ConfigurationError,
    ControlLimits,
    DegenerateConstraintError,
    NominalPlan,
    QpProblem,
    SafetyConfig,
    VehicleState,
    build_safety_constraint,
    kappa,
    nominal_control,
    safe_control,
    solve_qp,
)


def test_nominal_control_proportional_law():
    plan = NominalPlan(desired_speed=8.0, lane_direction=(3.0, 4.0), gain=0.5)
    s = VehicleState((0.0, 0.0), (2.0, -1.0))
    u = nominal_control(s, plan)
    # direction normalizes to (0.6, 0.8)
    assert u == pytest.approx([0.5 * (8.0 * 0.6 - 2.0), 0.5 * (8.0 * 0.8 + 1.0)], rel=1e-12)


def test_nominal_control_clamps_to_box():
    plan = NominalPlan(desired_speed=50.0, lane_direction=(1.0, 0.0), gain=2.0)
    s = VehicleState((0.0, 0.0), (0.0, 0.0))
    u = nominal_control(s, plan, ControlLimits((-3.0, -3.0), (3.0, 3.0)))
    assert u[0] == 3.0 and u[1] == 0.0


def test_nominal_plan_validation():
    with pytest.raises(ConfigurationError):
        NominalPlan(desired_speed=-1.0, lane_direction=(1.0, 0.0), gain=0.5)
    with pytest.raises(ConfigurationError):
        NominalPlan(desired_speed=1.0, lane_direction=(0.0, 0.0), gain=0.5)
    with pytest.raises(ConfigurationError):
        NominalPlan(desired_speed=1.0, lane_direction=(1.0, 0.0), gain=0.0)


def test_control_limits_ordering():
    with pytest.raises(ConfigurationError):
        ControlLimits((1.0, 0.0), (0.0, 1.0))
    lim = ControlLimits((-2.0, -3.0), (2.0, 3.0))
    with pytest.raises(ValueError):
        lim.u_min[0] = 0.0


def test_solve_qp_matches_kkt_oracle():
    rng = np.random.default_rng(7)
    for _ in range(300):
        u_nom, lo, hi, rows = random_box_qp(rng)
        sol = solve_qp(QpProblem(u_nom, lo, hi,
                                 tuple((np.asarray(a), b) for a, b in rows)))
        expect = qp_oracle(u_nom, lo, hi, rows)
        if expect is None:
            assert not sol.feasible
            assert sol.max_violation > 0.0
            # the fallback still stays inside the actuator box
            assert np.all(sol.u >= lo - 1e-9) and np.all(sol.u <= hi + 1e-9)
        else:
            u_star, obj_star = expect
            assert sol.feasible
            assert sol.max_violation == 0.0
            assert np.linalg.norm(sol.u - u_star) <= 1e-6
            assert abs(sol.objective - obj_star) <= 1e-6


def test_solve_qp_returns_nominal_when_slack():
    u_nom = np.array([0.5, -0.25])
    sol = solve_qp(QpProblem(u_nom, np.array([-5.0, -5.0]), np.array([5.0, 5.0]),
                             ((np.array([1.0, 0.0]), 100.0),)))
    assert sol.feasible
    assert np.array_equal(sol.u, u_nom)
    assert sol.objective == 0.0


def test_solve_qp_residuals_nonnegative_within_tolerance():
    rng = np.random.default_rng(8)
    checked = 0
    for _ in range(300):
        u_nom, lo, hi, rows = random_box_qp(rng)
        sol = solve_qp(QpProblem(u_nom, lo, hi,
                                 tuple((np.asarray(a), b) for a, b in rows)))
        if not sol.feasible:
            continue
        checked += 1
        for a, b in rows:
            assert float(np.asarray(a) @ sol.u) <= b + 1e-9 * max(1.0, abs(b))
    assert checked > 100


def test_solve_qp_single_row_projection():
    # nominal outside one half-plane: answer is the Euclidean projection
    a = np.array([1.0, 1.0])
    b = 1.0
    u_nom = np.array([2.0, 2.0])
    sol = solve_qp(QpProblem(u_nom, np.array([-10.0, -10.0]), np.array([10.0, 10.0]),
                             ((a, b),)))
    t = (float(a @ u_nom) - b) / float(a @ a)
    assert sol.feasible
    assert sol.u == pytest.approx(u_nom - t * a, rel=1e-12)


def test_solve_qp_infeasible_single_row_box_corner():
    # u_x <= -2 cannot hold inside [-1, 1]^2; violation minimized at x = -1
    u_nom = np.array([0.2, 0.3])
    sol = solve_qp(QpProblem(u_nom, np.array([-1.0, -1.0]), np.array([1.0, 1.0]),
                             ((np.array([1.0, 0.0]), -2.0),)))
    assert not sol.feasible
    assert sol.max_violation == pytest.approx(1.0, rel=1e-9)
    # relaxed re-solve pins x at the wall and leaves y at the nominal
    assert sol.u[0] == pytest.approx(-1.0, abs=1e-8)
    assert sol.u[1] == pytest.approx(0.3, abs=1e-9)


def test_solve_qp_infeasible_contradictory_rows():
    # u_x <= -1 and u_x >= 1 together: best worst violation is 1 at u_x = 0
    u_nom = np.array([0.0, 0.4])
    sol = solve_qp(QpProblem(u_nom, np.array([-2.0, -2.0]), np.array([2.0, 2.0]),
                             ((np.array([1.0, 0.0]), -1.0),
                              (np.array([-1.0, 0.0]), -1.0))))
    assert not sol.feasible
    assert sol.max_violation == pytest.approx(1.0, rel=1e-9)
    assert sol.u[0] == pytest.approx(0.0, abs=1e-8)
    # y is unconstrained, so the tie resolves toward the nominal
    assert sol.u[1] == pytest.approx(0.4, abs=1e-9)


def test_build_safety_constraint_hand_example():
    cfg = SafetyConfig(r_safe=5.0, q=2)
    ego = VehicleState((0.0, 0.0), (1.0, 0.0))
    other = VehicleState((7.0, 0.0), (-2.0, 0.0))
    alpha = AlphaVector((1.0, 0.5))
    dt = 0.01
    a, b = build_safety_constraint(ego, other, (0.5, 0.0), alpha, cfg, dt)
    # h = 49 - 25 = 24, dx = (-7, 0), dv = (3, 0)
    assert a == pytest.approx([0.14, 0.0], rel=1e-12, abs=1e-15)
    expect_b = -42.0 + 0.07 + kappa(alpha, 24.0)
    assert b == pytest.approx(expect_b, rel=1e-12)


def test_build_safety_constraint_constant_velocity_assumption():
    cfg = SafetyConfig(r_safe=5.0, q=1)
    ego = VehicleState((0.0, 0.0), (3.0, 0.0))
    other = VehicleState((10.0, 2.0), (-1.0, 0.5))
    alpha = AlphaVector((2.0,))
    a0, b0 = build_safety_constraint(ego, other, None, alpha, cfg, 0.02)
    a1, b1 = build_safety_constraint(ego, other, (0.0, 0.0), alpha, cfg, 0.02)
    assert np.array_equal(a0, a1) and b0 == b1


def test_build_safety_constraint_rejects_coincident_positions():
    cfg = SafetyConfig()
    s = VehicleState((1.0, 1.0), (0.0, 0.0))
    with pytest.raises(DegenerateConstraintError):
        build_safety_constraint(s, VehicleState((1.0, 1.0), (2.0, 0.0)),
                                None, AlphaVector((1.0,)), cfg, 0.01)


def test_constraint_row_certifies_one_step_safety():
    # any u on the feasible side keeps the next-step clearance above
    # (1 - margin terms); verify h' >= h - kappa(alpha, h) dt analytically
    from polycbf import safety_value, step

    cfg = SafetyConfig(r_safe=5.0, q=2)
    rng = np.random.default_rng(9)
    dt = 0.01
    for _ in range(100):
        ego = VehicleState(rng.uniform(-20, 20, 2), rng.uniform(-8, 8, 2))
        other = VehicleState(ego.position + rng.uniform(6, 30, 2),
                             rng.uniform(-8, 8, 2))
        u_other = rng.uniform(-4, 4, 2)
        alpha = AlphaVector(tuple(rng.uniform(0.0, 2.0, 2)))
        a, b = build_safety_constraint(ego, other, u_other, alpha, cfg, dt)
        # pick a strictly feasible input
        u = rng.uniform(-5, 5, 2)
        if float(a @ u) > b:
            u = u - a * (float(a @ u) - b + 1.0) / float(a @ a)
        h0 = safety_value(ego.position, other.position, cfg)
        h1 = safety_value(step(ego, u, dt).position,
                          step(other, u_other, dt).position, cfg)
        # discrete constraint: h' - h >= -kappa(alpha, h) dt, up to the
        # strictly helpful ||dv'||^2 dt^2 term
        assert h1 - h0 >= -kappa(alpha, h0) * dt - 1e-9


def test_safe_control_matches_manual_problem():
    cfg = SafetyConfig(r_safe=5.0, q=2)
    ego = VehicleState((0.0, 0.0), (9.0, 0.0))
    lead = VehicleState((12.0, 0.5), (4.0, 0.0))
    alpha = AlphaVector((0.8, 0.2))
    plan = NominalPlan(desired_speed=10.0, lane_direction=(1.0, 0.0), gain=0.9)
    lim = ControlLimits((-5.0, -5.0), (5.0, 5.0))
    sol = safe_control(ego, [(lead, None)], alpha, plan, cfg, lim, dt=0.01)
    row = build_safety_constraint(ego, lead, None, alpha, cfg, 0.01)
    manual = solve_qp(QpProblem(nominal_control(ego, plan, lim),
                                lim.u_min, lim.u_max, (row,)))
    assert np.array_equal(sol.u, manual.u)
    assert sol.feasible == manual.feasible
    assert sol.objective == manual.objective
    # the filtered input satisfies the row
    a, b = row
    assert float(a @ sol.u) <= b + 1e-9 * max(1.0, abs(b))


def test_safe_control_brakes_for_slower_lead():
    cfg = SafetyConfig(r_safe=5.0, q=1)
    ego = VehicleState((0.0, 0.0), (10.0, 0.0))
    lead = VehicleState((7.0, 0.0), (2.0, 0.0))
    plan = NominalPlan(desired_speed=10.0, lane_direction=(1.0, 0.0), gain=0.8)
    sol = safe_control(ego, [(lead, None)], AlphaVector((0.5,)), plan, cfg)
    # nominal wants to hold speed; the filter must brake instead
    assert sol.u[0] < 0.0
