"""Consensus splitting of a trajectory problem into parallel segments.

The trajectory is cut at split waypoints; each split waypoint is duplicated
into the two adjacent segments and a consensus variable with a scaled dual
pair ties the copies together.  Each round solves all segments in parallel,
averages the split copies into the consensus targets, and pushes the duals
by rho times the remaining disagreement.  The loop stops when the mean
position disagreement across splits drops below the splitting tolerance.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .collision import trajectory_collision_free
from .errors import ConfigError
from .model import Scenario, Trajectory, path_length, straight_line_init
from .nlp import (
    ConsensusCoupling,
    NlpSolution,
    SegmentLayout,
    SolverOptions,
    convexify_segment,
    project_to_affine,
    segment_equalities,
    segment_layout,
    solve,
)

THREAD_ENV_VAR = "TRAJSPLIT_THREADS"


@dataclass(frozen=True)
class SplitConfig:
    """Knobs of the splitting solver.

    ``num_splits`` is the number of cut points M, producing M+1 segments;
    zero means a single monolithic solve.  ``eps`` bounds the mean position
    disagreement across splits (radians for arms, length units for point
    robots).
    """

    num_splits: int = 2
    rho: float = 50.0
    eps: float = 0.1745
    max_admm_iterations: int = 100
    parallel: bool = True
    samples_per_edge: int = 5
    nlp_options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self) -> None:
        if self.num_splits < 0:
            raise ConfigError("num_splits must be >= 0")
        if self.rho <= 0.0:
            raise ConfigError("rho must be > 0")
        if self.eps <= 0.0:
            raise ConfigError("eps must be > 0")
        if self.max_admm_iterations < 1:
            raise ConfigError("max_admm_iterations must be >= 1")
        if self.samples_per_edge < 0:
            raise ConfigError("samples_per_edge must be >= 0")


@dataclass
class SegmentProblem:
    """One segment's waypoint range and its current packed iterate."""

    index: int
    first: int
    last: int
    layout: SegmentLayout
    x: np.ndarray
    last_solution: NlpSolution | None = None

    def end_state(self) -> np.ndarray:
        return self.x[self.layout.state_slice(self.layout.count - 1)]

    def start_state(self) -> np.ndarray:
        return self.x[self.layout.state_slice(0)]


@dataclass
class ConsensusState:
    """Targets and dual pairs, one row per split waypoint.

    ``dual_end[j]`` scales against the segment that ends at split j,
    ``dual_start[j]`` against the one that starts there.  Their sum stays at
    zero: the averaging update adds exactly opposite corrections.
    """

    split_indices: tuple[int, ...]
    targets: np.ndarray
    dual_end: np.ndarray
    dual_start: np.ndarray

    @staticmethod
    def initial(split_indices: tuple[int, ...], split_states, state_dim: int) -> "ConsensusState":
        m = len(split_indices)
        targets = np.array(split_states, dtype=float).reshape(m, state_dim)
        return ConsensusState(
            split_indices=split_indices,
            targets=targets,
            dual_end=np.zeros_like(targets),
            dual_start=np.zeros_like(targets),
        )

    def imbalance(self) -> float:
        if len(self.split_indices) == 0:
            return 0.0
        return float(np.max(np.abs(self.dual_end + self.dual_start)))


@dataclass(frozen=True)
class SolveReport:
    """Everything one run produced, timings split by phase."""

    trajectory: Trajectory
    converged: bool
    collision_free: bool
    objective: float
    path_length: float
    iterations: int
    residual: float
    residual_history: tuple[float, ...]
    iteration_seconds: tuple[float, ...]
    wall_seconds_total: float
    wall_seconds_primal: float
    wall_seconds_consensus: float
    segment_solves_converged: bool
    nonconverged_segment_solves: int
    dual_imbalance: float
    num_segments: int
    split_indices: tuple[int, ...]
    deadline_reached: bool = False


def split_uniform(num_waypoints: int, num_splits: int) -> tuple[int, ...]:
    """Evenly spaced interior split indices (0-based, half-up rounding)."""
    if num_splits < 0:
        raise ConfigError("num_splits must be >= 0")
    if num_splits > num_waypoints - 2:
        raise ConfigError(
            f"{num_splits} splits need at least {num_splits + 2} waypoints, got {num_waypoints}"
        )
    span = num_waypoints - 1
    indices = tuple(
        int((i * span) // (num_splits + 1) + (1 if (i * span) % (num_splits + 1) * 2 >= num_splits + 1 else 0))
        for i in range(1, num_splits + 1)
    )
    if len(set(indices)) != len(indices) or any(not 0 < s < span for s in indices):
        raise ConfigError("split indices collide; reduce num_splits")
    return indices


def build_segments(scenario: Scenario, splits: tuple[int, ...], x_full: np.ndarray) -> list[SegmentProblem]:
    """Slice the packed full trajectory into per-segment subproblems."""
    full = segment_layout(scenario, 0, scenario.num_waypoints - 1)
    edges = [0, *splits, scenario.num_waypoints - 1]
    segments = []
    for i in range(len(edges) - 1):
        first = edges[i]
        last = edges[i + 1]
        layout = segment_layout(scenario, first, last)
        x = x_full[full.state_slice(first).start : full.state_slice(last).stop].copy()
        segments.append(SegmentProblem(index=i, first=first, last=last, layout=layout, x=x))
    return segments


def segment_couplings(segment: SegmentProblem, consensus: ConsensusState) -> list[ConsensusCoupling]:
    """Consensus terms touching this segment: its lead copy and trail split."""
    couplings = []
    m = len(consensus.split_indices)
    if segment.index > 0:
        j = segment.index - 1
        couplings.append(
            ConsensusCoupling(waypoint=0, dual=consensus.dual_start[j], target=consensus.targets[j])
        )
    if segment.index < m:
        j = segment.index
        couplings.append(
            ConsensusCoupling(
                waypoint=segment.layout.count - 1,
                dual=consensus.dual_end[j],
                target=consensus.targets[j],
            )
        )
    return couplings


def build_segment_objective(scenario: Scenario, segment: SegmentProblem, consensus: ConsensusState, rho: float):
    """Quadratic objective of one segment under the current consensus state."""
    from .nlp import build_segment_objective as _build

    return _build(scenario, segment.first, segment.last, segment_couplings(segment, consensus), rho)


def primal_update(
    scenario: Scenario,
    segments: list[SegmentProblem],
    consensus: ConsensusState,
    config: SplitConfig,
    executor: ThreadPoolExecutor | None = None,
) -> list[NlpSolution]:
    """Solve every segment from its warm start; write back the new iterates.

    Results are gathered in segment order, so serial and parallel execution
    produce identical numbers.
    """

    def solve_one(segment: SegmentProblem) -> NlpSolution:
        problem = convexify_segment(
            scenario,
            segment.first,
            segment.last,
            segment.x,
            segment_couplings(segment, consensus),
            config.rho,
        )
        return solve(problem, config.nlp_options)

    if executor is None:
        solutions = [solve_one(s) for s in segments]
    else:
        solutions = list(executor.map(solve_one, segments))
    for segment, solution in zip(segments, solutions):
        segment.x = solution.point
        segment.last_solution = solution
    return solutions


def consensus_update(segments: list[SegmentProblem], consensus: ConsensusState, rho: float) -> None:
    """Average each split pair into its target, then push the duals.

    x - z equals (x - x')/2 exactly at the midpoint target, so both duals
    move by the same vector with opposite signs; computing that vector once
    keeps their sum at exactly zero in floating point as well.
    """
    for j in range(len(consensus.split_indices)):
        left = segments[j].end_state()
        right = segments[j + 1].start_state()
        consensus.targets[j] = 0.5 * (left + right)
        d = 0.5 * rho * (left - right)
        consensus.dual_end[j] += d
        consensus.dual_start[j] -= d


def splitting_residual(segments: list[SegmentProblem], scenario: Scenario) -> float:
    """Mean position disagreement across splits: sqrt(sum |dq|^2) / M."""
    m = len(segments) - 1
    if m == 0:
        return 0.0
    d = scenario.dim
    total = 0.0
    for j in range(m):
        ql = segments[j].end_state()[:d]
        qr = segments[j + 1].start_state()[:d]
        total += float(np.sum((ql - qr) ** 2))
    return float(np.sqrt(total)) / m


def assemble_trajectory(
    scenario: Scenario, segments: list[SegmentProblem], consensus: ConsensusState
) -> Trajectory:
    """Stitch segment iterates into one trajectory, consensus at the splits.

    In path-only mode velocities are forward differences of the assembled
    positions and accelerations forward differences of those, so the
    explicit-Euler recursion holds exactly on the result.
    """
    n, d = scenario.num_waypoints, scenario.dim
    dt = scenario.dt
    positions = np.zeros((n, d))
    velocities = np.zeros((n, d))
    for segment in segments:
        for k in range(segment.layout.count):
            state = segment.x[segment.layout.state_slice(k)]
            gi = segment.first + k
            positions[gi] = state[:d]
            if scenario.dynamics_enabled:
                velocities[gi] = state[d:]
    for j, s in enumerate(consensus.split_indices):
        z = consensus.targets[j]
        positions[s] = z[:d]
        if scenario.dynamics_enabled:
            velocities[s] = z[d:]
    # boundary states are pinned constraints; stamp them to drop KKT roundoff
    positions[0] = scenario.start.position
    positions[-1] = scenario.goal.position
    if scenario.dynamics_enabled:
        velocities[0] = scenario.start.velocity
        velocities[-1] = scenario.goal.velocity
    if not scenario.dynamics_enabled:
        velocities[:-1] = (positions[1:] - positions[:-1]) / dt
        velocities[-1] = velocities[-2] if n > 1 else 0.0
    accelerations = np.zeros((n, d))
    accelerations[:-1] = (velocities[1:] - velocities[:-1]) / dt
    return Trajectory.from_arrays(positions, velocities, accelerations, scenario.dt)


def trajectory_objective(scenario: Scenario, trajectory: Trajectory) -> float:
    """The cost the solver minimized: summed squared (finite-difference) velocity."""
    if scenario.dynamics_enabled:
        return float(np.sum(trajectory.velocities() ** 2))
    q = trajectory.positions()
    return float(np.sum(((q[1:] - q[:-1]) / scenario.dt) ** 2))


def _worker_count(num_segments: int) -> int:
    env = os.environ.get(THREAD_ENV_VAR)
    if env is not None:
        try:
            cap = int(env)
        except ValueError as exc:
            raise ConfigError(f"{THREAD_ENV_VAR} must be an integer, got {env!r}") from exc
        if cap < 1:
            raise ConfigError(f"{THREAD_ENV_VAR} must be >= 1")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(num_segments, cap))


def initial_point(scenario: Scenario) -> np.ndarray:
    """Packed straight-line seed, corrected onto the dynamics and pin rows."""
    layout = segment_layout(scenario, 0, scenario.num_waypoints - 1)
    traj = straight_line_init(scenario)
    x = layout.pack(traj.positions(), traj.velocities())
    if scenario.dynamics_enabled:
        a_eq, b_eq = segment_equalities(scenario, 0, scenario.num_waypoints - 1)
        x = project_to_affine(x, a_eq, b_eq)
    return x


def run(
    scenario: Scenario, config: SplitConfig | None = None, *, deadline_seconds: float | None = None
) -> SolveReport:
    """Full splitting solve of one scenario.

    With ``num_splits == 0`` this is exactly one monolithic NLP solve.  A
    deadline, when given, is checked between rounds; hitting it ends the run
    with ``converged=False`` and ``deadline_reached=True``.
    """
    cfg = config or SplitConfig()
    t0 = time.perf_counter()
    splits = split_uniform(scenario.num_waypoints, cfg.num_splits)
    x_full = initial_point(scenario)
    full_layout = segment_layout(scenario, 0, scenario.num_waypoints - 1)
    segments = build_segments(scenario, splits, x_full)
    consensus = ConsensusState.initial(
        splits,
        [x_full[full_layout.state_slice(s)] for s in splits],
        full_layout.state_dim,
    )

    residual_history: list[float] = []
    iteration_seconds: list[float] = []
    primal_seconds = 0.0
    consensus_seconds = 0.0
    nonconverged = 0
    converged = False
    deadline_reached = False
    iterations = 0
    solutions: list[NlpSolution] = []

    executor: ThreadPoolExecutor | None = None
    workers = _worker_count(len(segments)) if cfg.parallel else 1
    try:
        if workers > 1:
            executor = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="trajsplit")
        for it in range(1, cfg.max_admm_iterations + 1):
            iterations = it
            tp = time.perf_counter()
            solutions = primal_update(scenario, segments, consensus, cfg, executor)
            primal_seconds += time.perf_counter() - tp
            nonconverged += sum(1 for s in solutions if not s.converged)
            tc = time.perf_counter()
            consensus_update(segments, consensus, cfg.rho)
            residual = splitting_residual(segments, scenario)
            consensus_seconds += time.perf_counter() - tc
            residual_history.append(residual)
            iteration_seconds.append(time.perf_counter() - t0)
            if residual <= cfg.eps:
                converged = all(s.converged for s in solutions)
                break
            if deadline_seconds is not None and time.perf_counter() - t0 >= deadline_seconds:
                deadline_reached = True
                break
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    trajectory = assemble_trajectory(scenario, segments, consensus)
    collision_free = trajectory_collision_free(scenario, trajectory, cfg.samples_per_edge)
    return SolveReport(
        trajectory=trajectory,
        converged=converged,
        collision_free=collision_free,
        objective=trajectory_objective(scenario, trajectory),
        path_length=path_length(trajectory),
        iterations=iterations,
        residual=residual_history[-1] if residual_history else 0.0,
        residual_history=tuple(residual_history),
        iteration_seconds=tuple(iteration_seconds),
        wall_seconds_total=time.perf_counter() - t0,
        wall_seconds_primal=primal_seconds,
        wall_seconds_consensus=consensus_seconds,
        segment_solves_converged=all(s.converged for s in solutions) if solutions else False,
        nonconverged_segment_solves=nonconverged,
        dual_imbalance=consensus.imbalance(),
        num_segments=len(segments),
        split_indices=splits,
        deadline_reached=deadline_reached,
    )
