"""Shared test oracles, implemented independently of the library code paths."""
import itertools

import numpy as np


def qp_oracle(u_nom, lo, hi, rows, feas_tol=1e-9):
    """Exhaustive KKT solve of min ||u - u_nom||^2 s.t. a.u <= b plus box.

    Enumerates every active set of size 0, 1, or 2 (box faces included as
    generic rows), solves the stationarity system for each, keeps feasible
    candidates, and returns (u, objective) for the best one.  Returns None
    when no candidate is feasible, i.e. the program itself is infeasible.
    """
    A = [np.asarray(a, dtype=np.float64) for a, _ in rows]
    bs = [float(b) for _, b in rows]
    A += [np.array([1.0, 0.0]), np.array([-1.0, 0.0]),
          np.array([0.0, 1.0]), np.array([0.0, -1.0])]
    bs += [float(hi[0]), -float(lo[0]), float(hi[1]), -float(lo[1])]
    m = len(A)
    p = np.asarray(u_nom, dtype=np.float64)

    def feasible(u):
        return all(float(A[k] @ u) - bs[k] <= feas_tol * max(1.0, abs(bs[k]))
                   for k in range(m))

    candidates = [p]
    for i in range(m):
        nrm2 = float(A[i] @ A[i])
        if nrm2 <= 0.0:
            continue
        # one active row: u = p - (lam/2) a_i with a_i.u = b_i
        lam = 2.0 * (float(A[i] @ p) - bs[i]) / nrm2
        candidates.append(p - 0.5 * lam * A[i])
    for i, j in itertools.combinations(range(m), 2):
        M = np.array([A[i], A[j]])
        det = float(np.linalg.det(M))
        scale = max(1.0, float(np.abs(M).max()) ** 2)
        if abs(det) <= 1e-12 * scale:
            continue
        candidates.append(np.linalg.solve(M, np.array([bs[i], bs[j]])))

    best = None
    best_obj = np.inf
    for u in candidates:
        if not feasible(u):
            continue
        obj = float((u - p) @ (u - p))
        if obj < best_obj:
            best_obj = obj
            best = u
    if best is None:
        return None
    return best, best_obj


def random_box_qp(rng, n_rows_max=3):
    """One random 2-var QP in the shape the filter produces: box plus rows."""
    lo = -rng.uniform(0.5, 6.0, 2)
    hi = rng.uniform(0.5, 6.0, 2)
    u_nom = rng.uniform(-8.0, 8.0, 2)
    rows = []
    for _ in range(int(rng.integers(0, n_rows_max + 1))):
        a = rng.uniform(-1.0, 1.0, 2)
        while float(a @ a) < 0.01:
            a = rng.uniform(-1.0, 1.0, 2)
        rows.append((a, float(rng.uniform(-3.0, 3.0))))
    return u_nom, lo, hi, rows


def configs_equal(a, b):
    """Structural equality for dataclass trees holding numpy arrays."""
    import dataclasses

    if type(a) is not type(b):
        return False
    if dataclasses.is_dataclass(a) and not isinstance(a, type):
        return all(configs_equal(getattr(a, f.name), getattr(b, f.name))
                   for f in dataclasses.fields(a))
    if isinstance(a, np.ndarray):
        return isinstance(b, np.ndarray) and a.shape == b.shape and bool(np.array_equal(a, b))
    if isinstance(a, (tuple, list)):
        return len(a) == len(b) and all(configs_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(configs_equal(a[k], b[k]) for k in a)
    return a == b
