"""Trajectory NLP solver: sequential convexification over a dense QP.

The nonlinear program  min f(x)  s.t.  A x = b,  g(x) <= 0,  lo <= x <= hi
is solved by repeatedly minimizing a convex model: quadratic expansion of f,
exact affine equalities, linearized inequalities with an l1 exact penalty on
their violation, all inside an infinity-norm trust region.  The convex
subproblems are solved by a primal active-set method.

Collision constraints enter as the inequality evaluators; dynamics and
boundary pins are affine equalities and stay exactly satisfied at every
iterate, so the penalty only ever acts on collision violation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .collision import activation_distance, all_pairs, linearize_collision_constraint, pair_distance
from .errors import ConfigError, EvaluatorError
from .model import RobotState, Scenario

# --- convex QP, dense primal active set ------------------------------------


def _solve_kkt(h: np.ndarray, a: np.ndarray, rhs_top: np.ndarray, rhs_bot: np.ndarray):
    """Solve [[H, A^T], [A, 0]] [x; lam] = [rhs_top; rhs_bot]."""
    n, m = h.shape[0], a.shape[0]
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = h
    if m:
        kkt[:n, n:] = a.T
        kkt[n:, :n] = a
    rhs = np.concatenate([rhs_top, rhs_bot])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def solve_qp(
    hessian: np.ndarray,
    gradient: np.ndarray,
    a_eq: np.ndarray,
    b_eq: np.ndarray,
    a_in: np.ndarray,
    b_in: np.ndarray,
    x0: np.ndarray,
    *,
    tol: float = 1e-11,
    max_iterations: int | None = None,
) -> tuple[np.ndarray, bool]:
    """Minimize 1/2 x'Hx + g'x s.t. A_eq x = b_eq, A_in x <= b_in.

    H must be positive definite.  ``x0`` must satisfy the inequalities (the
    equalities are restored by the first full step if slightly violated).
    Returns (x, optimal); when the iteration cap is hit the best iterate so
    far is returned with optimal=False.
    """
    n = gradient.shape[0]
    m_in = a_in.shape[0]
    x = np.array(x0, dtype=float)
    if max_iterations is None:
        max_iterations = 3 * (n + m_in) + 100

    slack0 = b_in - a_in @ x if m_in else np.zeros(0)
    active: list[int] = [int(i) for i in np.nonzero(slack0 <= 1e-11)[0]]
    row_norms = np.linalg.norm(a_in, axis=1) if m_in else np.zeros(0)

    for _ in range(max_iterations):
        a_act = np.vstack([a_eq] + [a_in[active]]) if active else a_eq
        b_act = np.concatenate([b_eq] + [b_in[active]]) if active else b_eq
        target, lam = _solve_kkt(hessian, a_act, -gradient, b_act)
        p = target - x
        if float(np.max(np.abs(p), initial=0.0)) <= tol:
            if not active:
                return target, True
            lam_in = lam[a_eq.shape[0]:]
            worst = int(np.argmin(lam_in))
            if lam_in[worst] >= -1e-9:
                return target, True
            active.pop(worst)
            continue
        # longest feasible step toward the subproblem optimum
        alpha, blocker = 1.0, -1
        if m_in:
            mask = np.ones(m_in, dtype=bool)
            mask[active] = False
            idx = np.nonzero(mask)[0]
            if idx.size:
                s = a_in[idx] @ p
                pn = float(np.linalg.norm(p))
                pos = s > 1e-12 * np.maximum(1.0, row_norms[idx] * pn)
                cand = idx[pos]
                if cand.size:
                    limits = np.maximum((b_in[cand] - a_in[cand] @ x) / s[pos], 0.0)
                    k = int(np.argmin(limits))
                    if limits[k] < alpha:
                        alpha, blocker = float(limits[k]), int(cand[k])
        x = x + alpha * p
        if blocker >= 0:
            active.append(blocker)
    return x, False


# --- problem description ------------------------------------------------------


@dataclass(frozen=True)
class QuadraticFunction:
    """f(x) = 1/2 x'Hx + g'x + c with exact derivatives."""

    hessian_matrix: np.ndarray = field(repr=False)
    linear: np.ndarray = field(repr=False)
    constant: float = 0.0

    def value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.hessian_matrix @ x + self.linear @ x + self.constant)

    def value_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        hx = self.hessian_matrix @ x
        return float(0.5 * x @ hx + self.linear @ x + self.constant), hx + self.linear

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return self.hessian_matrix


# evaluators: value_and_grad(x) -> (f, grad); inequality rows g(x) <= 0
ObjectiveFn = Callable[[np.ndarray], tuple[float, np.ndarray]]
HessianFn = Callable[[np.ndarray], np.ndarray]
InequalityFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
ValuesFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class NlpProblem:
    """One smooth NLP in the form the convexification loop consumes.

    ``inequalities`` is re-evaluated at the current iterate each round and
    may return a different number of rows each time (e.g. only collision
    pairs near contact).  ``inequality_values`` gives the full constraint
    value set for merit and feasibility accounting; when omitted the row
    evaluator's values are used.
    """

    dim: int
    objective: ObjectiveFn
    objective_hessian: HessianFn | None = None
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    inequalities: InequalityFn | None = None
    inequality_values: ValuesFn | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    x0: np.ndarray | None = None


@dataclass(frozen=True)
class SolverOptions:
    """Convexification loop parameters."""

    max_outer_iterations: int = 50
    feasibility_tolerance: float = 1e-4
    step_tolerance: float = 1e-6
    initial_trust_radius: float = 0.1
    trust_expand: float = 1.5
    trust_shrink: float = 0.25
    ratio_good: float = 0.75
    ratio_bad: float = 0.25
    max_trust_radius: float = 16.0
    min_trust_radius: float = 1e-10
    initial_penalty: float = 10.0
    penalty_growth: float = 10.0
    penalty_cap: float = 1e6
    prox_regularization: float = 1e-10

    def __post_init__(self) -> None:
        if self.max_outer_iterations < 1:
            raise ConfigError("max_outer_iterations must be >= 1")
        for name in ("feasibility_tolerance", "step_tolerance", "initial_trust_radius",
                     "initial_penalty", "penalty_cap"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be > 0")


@dataclass(frozen=True)
class NlpSolution:
    point: np.ndarray
    objective: float
    max_equality_violation: float
    max_inequality_violation: float
    iterations: int
    converged: bool


def _check_finite(value, what: str) -> None:
    if not np.all(np.isfinite(value)):
        raise EvaluatorError(f"{what} produced a non-finite value")


def project_to_affine(x: np.ndarray, a_eq: np.ndarray, b_eq: np.ndarray) -> np.ndarray:
    """Least-norm correction onto the affine set A x = b."""
    r = b_eq - a_eq @ x
    if float(np.max(np.abs(r), initial=0.0)) <= 1e-12:
        return x
    gram = a_eq @ a_eq.T
    try:
        w = np.linalg.solve(gram, r)
    except np.linalg.LinAlgError:
        w = np.linalg.lstsq(a_eq, r, rcond=None)[0]
        return x + w
    return x + a_eq.T @ w


def solve(problem: NlpProblem, options: SolverOptions | None = None) -> NlpSolution:
    """Solve an NLP by sequential convexification with an l1 exact penalty.

    Never raises on non-convergence: the iteration limit returns the best
    iterate found with ``converged=False``.  Non-finite evaluator output
    raises ``EvaluatorError``.
    """
    opts = options or SolverOptions()
    n = problem.dim
    x = np.array(problem.x0 if problem.x0 is not None else np.zeros(n), dtype=float)
    if x.shape != (n,):
        raise ConfigError(f"x0 must have shape ({n},), got {x.shape}")

    a_eq = problem.a_eq if problem.a_eq is not None else np.zeros((0, n))
    b_eq = problem.b_eq if problem.b_eq is not None else np.zeros(0)
    lower = problem.lower if problem.lower is not None else np.full(n, -np.inf)
    upper = problem.upper if problem.upper is not None else np.full(n, np.inf)

    if a_eq.shape[0]:
        x = project_to_affine(x, a_eq, b_eq)
    x = np.clip(x, lower, upper)

    def true_values(point: np.ndarray) -> np.ndarray:
        if problem.inequality_values is not None:
            vals = problem.inequality_values(point)
        elif problem.inequalities is not None:
            vals = problem.inequalities(point)[0]
        else:
            return np.zeros(0)
        vals = np.asarray(vals, dtype=float)
        _check_finite(vals, "inequality evaluator")
        return vals

    def violation(point: np.ndarray, vals: np.ndarray | None = None) -> float:
        v = true_values(point) if vals is None else vals
        ineq = float(np.max(v, initial=0.0))
        eq = float(np.max(np.abs(a_eq @ point - b_eq), initial=0.0)) if a_eq.shape[0] else 0.0
        return max(ineq, eq, 0.0)

    mu = opts.initial_penalty
    delta = opts.initial_trust_radius
    prox = opts.prox_regularization

    fx, _ = problem.objective(x)
    _check_finite(fx, "objective")
    vals_x = true_values(x)
    merit = fx + mu * float(np.sum(np.maximum(vals_x, 0.0)))

    converged = False
    iterations = 0
    for _ in range(opts.max_outer_iterations):
        iterations += 1
        fx, gx = problem.objective(x)
        _check_finite(gx, "objective gradient")
        if problem.objective_hessian is not None:
            h = np.asarray(problem.objective_hessian(x), dtype=float)
            _check_finite(h, "objective hessian")
        else:
            h = np.eye(n)
        h = 0.5 * (h + h.T)

        if problem.inequalities is not None:
            rows_vals, rows_jac = problem.inequalities(x)
            rows_vals = np.asarray(rows_vals, dtype=float)
            rows_jac = np.asarray(rows_jac, dtype=float).reshape(len(rows_vals), n)
            _check_finite(rows_vals, "inequality evaluator")
            _check_finite(rows_jac, "inequality jacobian")
        else:
            rows_vals, rows_jac = np.zeros(0), np.zeros((0, n))
        m_s = rows_vals.shape[0]

        # convex subproblem over [x; slacks]
        nq = n + m_s
        hqp = np.zeros((nq, nq))
        hqp[:n, :n] = h
        hqp[np.arange(nq), np.arange(nq)] += prox
        gqp = np.zeros(nq)
        gqp[:n] = gx - h @ x - prox * x
        gqp[n:] = mu

        aeq_qp = np.hstack([a_eq, np.zeros((a_eq.shape[0], m_s))]) if a_eq.shape[0] else np.zeros((0, nq))

        lo_eff = np.maximum(lower, x - delta)
        hi_eff = np.minimum(upper, x + delta)
        rows = []
        rhs = []
        eye = np.eye(nq)
        for i in range(n):
            rows.append(eye[i])
            rhs.append(hi_eff[i])
            rows.append(-eye[i])
            rhs.append(-lo_eff[i])
        for r in range(m_s):
            row = np.zeros(nq)
            row[:n] = rows_jac[r]
            row[n + r] = -1.0
            rows.append(row)
            rhs.append(float(rows_jac[r] @ x - rows_vals[r]))
            rows.append(-eye[n + r])
            rhs.append(0.0)
        a_in = np.array(rows)
        b_in = np.array(rhs)

        x0_qp = np.concatenate([x, np.maximum(rows_vals, 0.0)])
        sol, _qp_ok = solve_qp(hqp, gqp, aeq_qp, np.array(b_eq, dtype=float), a_in, b_in, x0_qp)
        x_new = np.clip(sol[:n], lo_eff, hi_eff)

        dx = x_new - x
        model_obj = fx + gx @ dx + 0.5 * dx @ h @ dx
        lin_vals = rows_vals + rows_jac @ dx
        model_merit = model_obj + mu * float(np.sum(np.maximum(lin_vals, 0.0)))
        predicted = merit - model_merit

        if predicted <= 1e-12 * max(1.0, abs(merit)):
            # model is stationary inside the trust region
            if violation(x, vals_x) <= opts.feasibility_tolerance:
                converged = True
                break
            if mu >= opts.penalty_cap:
                break
            mu = min(mu * opts.penalty_growth, opts.penalty_cap)
            delta = max(delta, opts.initial_trust_radius)
            merit = fx + mu * float(np.sum(np.maximum(vals_x, 0.0)))
            continue

        f_new, _ = problem.objective(x_new)
        _check_finite(f_new, "objective")
        vals_new = true_values(x_new)
        merit_new = f_new + mu * float(np.sum(np.maximum(vals_new, 0.0)))
        ratio = (merit - merit_new) / predicted

        if ratio > opts.ratio_good:
            delta = min(delta * opts.trust_expand, opts.max_trust_radius)
        elif ratio < opts.ratio_bad:
            delta = max(delta * opts.trust_shrink, opts.min_trust_radius)

        if merit_new < merit:
            step = float(np.max(np.abs(dx), initial=0.0))
            x, fx, merit, vals_x = x_new, f_new, merit_new, vals_new
            if step <= opts.step_tolerance:
                if violation(x, vals_x) <= opts.feasibility_tolerance:
                    converged = True
                    break
                if mu >= opts.penalty_cap:
                    break
                mu = min(mu * opts.penalty_growth, opts.penalty_cap)
                delta = max(delta, opts.initial_trust_radius)
                merit = fx + mu * float(np.sum(np.maximum(vals_x, 0.0)))
        else:
            if delta <= opts.min_trust_radius * 1.01:
                break

    f_final, _ = problem.objective(x)
    final_vals = true_values(x)
    eq_viol = float(np.max(np.abs(a_eq @ x - b_eq), initial=0.0)) if a_eq.shape[0] else 0.0
    ineq_viol = float(np.max(final_vals, initial=0.0)) if final_vals.size else 0.0
    return NlpSolution(
        point=x,
        objective=f_final,
        max_equality_violation=eq_viol,
        max_inequality_violation=max(ineq_viol, 0.0),
        iterations=iterations,
        converged=converged,
    )


# --- trajectory segment subproblems -----------------------------------------


@dataclass(frozen=True)
class SegmentLayout:
    """Index arithmetic for a segment's packed decision vector.

    With dynamics each waypoint contributes a (position, velocity) block;
    accelerations are dependent quantities, recovered afterwards from the
    velocity differences the explicit-Euler relation defines.  In path-only
    mode positions are the only decision variables.
    """

    count: int
    dim: int
    dynamics: bool
    dt: float

    @property
    def state_dim(self) -> int:
        return 2 * self.dim if self.dynamics else self.dim

    @property
    def size(self) -> int:
        return self.count * self.state_dim

    def state_slice(self, k: int) -> slice:
        i = k * self.state_dim
        return slice(i, i + self.state_dim)

    def position_slice(self, k: int) -> slice:
        i = k * self.state_dim
        return slice(i, i + self.dim)

    def velocity_slice(self, k: int) -> slice:
        if not self.dynamics:
            raise ConfigError("path-only layout has no velocity block")
        i = k * self.state_dim + self.dim
        return slice(i, i + self.dim)

    def pack(self, positions: np.ndarray, velocities: np.ndarray) -> np.ndarray:
        if self.dynamics:
            return np.concatenate(
                [np.concatenate([positions[k], velocities[k]]) for k in range(self.count)]
            )
        return np.asarray(positions, dtype=float)[: self.count].reshape(-1).copy()

    def positions(self, x: np.ndarray) -> np.ndarray:
        if self.dynamics:
            return np.stack([x[self.position_slice(k)] for k in range(self.count)])
        return x.reshape(self.count, self.dim).copy()

    def velocities(self, x: np.ndarray) -> np.ndarray:
        return np.stack([x[self.velocity_slice(k)] for k in range(self.count)])


def segment_layout(scenario: Scenario, first_index: int, last_index: int) -> SegmentLayout:
    if not 0 <= first_index <= last_index < scenario.num_waypoints:
        raise ConfigError(
            f"segment [{first_index}, {last_index}] out of range for {scenario.num_waypoints} waypoints"
        )
    return SegmentLayout(
        count=last_index - first_index + 1,
        dim=scenario.dim,
        dynamics=scenario.dynamics_enabled,
        dt=scenario.dt,
    )


@dataclass(frozen=True)
class ConsensusCoupling:
    """Consensus attachment of one local waypoint to a shared target.

    Adds  dual'(x_k - target) + (rho/2)|x_k - target|^2  to the segment
    objective and marks waypoint ``k`` as a split variable (half cost).
    """

    waypoint: int
    dual: np.ndarray
    target: np.ndarray


def build_segment_objective(
    scenario: Scenario,
    first_index: int,
    last_index: int,
    couplings: Sequence[ConsensusCoupling] = (),
    rho: float = 0.0,
) -> QuadraticFunction:
    """Quadratic segment objective: trajectory cost plus consensus terms.

    With dynamics the cost is the summed squared velocity of each waypoint;
    split waypoints (the coupled ones) carry half weight since both segments
    sharing the split account for that waypoint.  In path-only mode the cost
    is the squared finite-difference velocity of each edge; edges are owned
    by exactly one segment so no halving is needed.
    """
    layout = segment_layout(scenario, first_index, last_index)
    n = layout.size
    h = np.zeros((n, n))
    g = np.zeros(n)
    c = 0.0
    coupled = {cp.waypoint for cp in couplings}
    if layout.dynamics:
        for k in range(layout.count):
            w = 0.5 if k in coupled else 1.0
            sl = layout.velocity_slice(k)
            h[sl, sl] += 2.0 * w * np.eye(layout.dim)
    else:
        scale = 2.0 / (layout.dt * layout.dt)
        for k in range(layout.count - 1):
            a = layout.position_slice(k)
            b = layout.position_slice(k + 1)
            h[a, a] += scale * np.eye(layout.dim)
            h[b, b] += scale * np.eye(layout.dim)
            h[a, b] -= scale * np.eye(layout.dim)
            h[b, a] -= scale * np.eye(layout.dim)
    for cp in couplings:
        if not 0 <= cp.waypoint < layout.count:
            raise ConfigError(f"coupling waypoint {cp.waypoint} outside segment")
        y = np.asarray(cp.dual, dtype=float)
        z = np.asarray(cp.target, dtype=float)
        if y.shape != (layout.state_dim,) or z.shape != (layout.state_dim,):
            raise ConfigError("coupling dual/target must match the state dimension")
        sl = layout.state_slice(cp.waypoint)
        h[sl, sl] += rho * np.eye(layout.state_dim)
        g[sl] += y - rho * z
        c += float(-y @ z + 0.5 * rho * z @ z)
    return QuadraticFunction(hessian_matrix=h, linear=g, constant=c)


def segment_equalities(
    scenario: Scenario, first_index: int, last_index: int
) -> tuple[np.ndarray, np.ndarray]:
    """Affine rows: dynamics between consecutive waypoints plus endpoint pins.

    The global start pins position (and velocity, with dynamics) of the first
    waypoint; the global goal pins the last.  Split-point waypoints are never
    pinned, consensus terms steer them instead.
    """
    layout = segment_layout(scenario, first_index, last_index)
    n, d = layout.size, layout.dim
    rows: list[np.ndarray] = []
    rhs: list[float] = []

    def pin(sl: slice, values: np.ndarray) -> None:
        for off, v in zip(range(sl.start, sl.stop), values):
            row = np.zeros(n)
            row[off] = 1.0
            rows.append(row)
            rhs.append(float(v))

    if layout.dynamics:
        dt = layout.dt
        for k in range(layout.count - 1):
            qa, qb = layout.position_slice(k), layout.position_slice(k + 1)
            va = layout.velocity_slice(k)
            for i in range(d):
                row = np.zeros(n)
                row[qb.start + i] = 1.0
                row[qa.start + i] = -1.0
                row[va.start + i] = -dt
                rows.append(row)
                rhs.append(0.0)
    if first_index == 0:
        pin(layout.position_slice(0), scenario.start.position)
        if layout.dynamics:
            pin(layout.velocity_slice(0), scenario.start.velocity)
    if last_index == scenario.num_waypoints - 1:
        pin(layout.position_slice(layout.count - 1), scenario.goal.position)
        if layout.dynamics:
            pin(layout.velocity_slice(layout.count - 1), scenario.goal.velocity)
    if not rows:
        return np.zeros((0, n)), np.zeros(0)
    return np.array(rows), np.array(rhs)


def segment_bounds(scenario: Scenario, layout: SegmentLayout) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Joint-limit box on position blocks; None when the robot has no limits."""
    limits = getattr(scenario.robot, "joint_limits", None)
    if limits is None:
        return None, None
    lo = np.full(layout.size, -np.inf)
    hi = np.full(layout.size, np.inf)
    for k in range(layout.count):
        sl = layout.position_slice(k)
        lo[sl] = limits[:, 0]
        hi[sl] = limits[:, 1]
    return lo, hi


def _collision_evaluators(
    scenario: Scenario, layout: SegmentLayout
) -> tuple[InequalityFn, ValuesFn] | tuple[None, None]:
    """Row evaluator (activation-filtered linearizations) and full values.

    Rows encode  margin - sd(q_k) <= 0  for each near-contact pair at each
    waypoint; the full evaluator reports every pair so merit accounting sees
    violations the filter missed after a step.
    """
    if not scenario.obstacles:
        return None, None
    margin = scenario.safety_margin
    activation = activation_distance(margin)
    pairs = all_pairs(scenario)
    zeros = np.zeros(layout.dim)

    def rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        vals: list[float] = []
        jac: list[np.ndarray] = []
        for k in range(layout.count):
            q = x[layout.position_slice(k)]
            state = RobotState(q, zeros, zeros)
            for pair in pairs:
                lin = linearize_collision_constraint(scenario, state, pair)
                if lin.value > activation:
                    continue
                row = np.zeros(layout.size)
                row[layout.position_slice(k)] = -lin.gradient
                vals.append(margin - lin.value)
                jac.append(row)
        if not vals:
            return np.zeros(0), np.zeros((0, layout.size))
        return np.array(vals), np.array(jac)

    def values(x: np.ndarray) -> np.ndarray:
        out = np.empty(layout.count * len(pairs))
        i = 0
        for k in range(layout.count):
            q = x[layout.position_slice(k)]
            for link, obs in pairs:
                out[i] = margin - pair_distance(scenario, q, link, obs).value
                i += 1
        return out

    return rows, values


def convexify_segment(
    scenario: Scenario,
    first_index: int,
    last_index: int,
    x0: np.ndarray,
    couplings: Sequence[ConsensusCoupling] = (),
    rho: float = 0.0,
) -> NlpProblem:
    """Assemble the NLP for one trajectory segment.

    ``x0`` is the packed warm-start vector (see SegmentLayout).  With an
    empty coupling list and the full waypoint range this is exactly the
    monolithic problem.
    """
    layout = segment_layout(scenario, first_index, last_index)
    objective = build_segment_objective(scenario, first_index, last_index, couplings, rho)
    a_eq, b_eq = segment_equalities(scenario, first_index, last_index)
    lower, upper = segment_bounds(scenario, layout)
    rows, values = _collision_evaluators(scenario, layout)
    return NlpProblem(
        dim=layout.size,
        objective=objective.value_and_grad,
        objective_hessian=objective.hessian,
        a_eq=a_eq,
        b_eq=b_eq,
        inequalities=rows,
        inequality_values=values,
        lower=lower,
        upper=upper,
        x0=np.array(x0, dtype=float),
    )
